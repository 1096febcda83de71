#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "provgen/fingerprint.hpp"

namespace provgen {

// 64-bit accumulated Euclidean distance.
double l2_distance(const Fingerprint& a, const Fingerprint& b);

struct FingerprintRecord {
  std::uint64_t pair_id = 0;
  std::uint64_t example_id = 0;
  Fingerprint fingerprint;
  std::string snippet;
  std::string source;
};

struct SearchHit {
  std::uint64_t pair_id = 0;
  std::uint64_t example_id = 0;
  double distance = 0.0;
  std::string snippet;
  std::string source;
};

// Seeded Lloyd clustering over the stored fingerprints (inverted-file
// accelerator metadata). sqrt(count) centroids, 25 iterations.
struct IvfClustering {
  std::uint64_t seed = 0;
  std::uint32_t n_clusters = 0;
  std::vector<float> centroids;              // n_clusters x F
  std::vector<std::uint32_t> assignment;     // per record
  std::vector<std::vector<std::uint32_t>> members;

  void rebuild_members(std::size_t count);
};

// Immutable fingerprint database: one fixed-size row per training pair plus
// a JSONL sidecar with snippet and source. Exact queries scan every row;
// query_approx probes the nearest clusters only.
class FingerprintIndex {
 public:
  static FingerprintIndex build(std::vector<FingerprintRecord> records,
                                std::uint64_t selection_hash);

  std::uint32_t dim() const { return f_; }
  std::uint64_t count() const { return pair_ids_.size(); }
  std::uint64_t selection_hash() const { return selection_hash_; }
  bool clustered() const { return clustering_.has_value(); }
  const IvfClustering& clustering() const;

  std::uint64_t pair_id(std::size_t row) const { return pair_ids_[row]; }
  std::uint64_t example_id(std::size_t row) const { return example_ids_[row]; }
  const float* fingerprint(std::size_t row) const { return fingerprints_.data() + row * f_; }
  const std::string& snippet(std::size_t row) const { return snippets_[row]; }
  const std::string& source(std::size_t row) const { return sources_[row]; }

  // Exact top-k by Euclidean distance, ties by pair_id ascending. The caller
  // passes the hash of the selection its query fingerprint came from;
  // fingerprints from a different neuron set are not comparable.
  std::vector<SearchHit> query(std::uint64_t caller_selection_hash, const Fingerprint& q,
                               std::size_t k) const;

  // Scans only the n_probe clusters nearest to the query; reported distances
  // are exact for the returned records.
  std::vector<SearchHit> query_approx(std::uint64_t caller_selection_hash, const Fingerprint& q,
                                      std::size_t k, std::size_t n_probe) const;

  void build_clustering(std::uint64_t seed);

  // index file plus "<path>.meta.jsonl" sidecar; clustering metadata, when
  // present, goes to "<path>.ivf".
  void save(const std::filesystem::path& path) const;
  static FingerprintIndex load(const std::filesystem::path& path);

 private:
  std::vector<SearchHit> collect_hits(const Fingerprint& q,
                                      const std::vector<std::uint32_t>* rows, std::size_t k) const;

  std::uint32_t f_ = 0;
  std::uint64_t selection_hash_ = 0;
  std::vector<std::uint64_t> pair_ids_;
  std::vector<std::uint64_t> example_ids_;
  std::vector<float> fingerprints_;  // count x F
  std::vector<std::string> snippets_;
  std::vector<std::string> sources_;
  std::optional<IvfClustering> clustering_;
};

}  // namespace provgen
