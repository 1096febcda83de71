#include "provgen/indexstore.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <unordered_set>

#include <json.hpp>

#include "provgen/error.hpp"
#include "provgen/parallel.hpp"
#include "provgen/rng.hpp"

namespace provgen {

namespace {

constexpr char kMagic[4] = {'W', 'G', 'F', 'P'};
constexpr char kIvfMagic[4] = {'W', 'G', 'I', 'V'};
constexpr std::uint32_t kVersion = 1;

double l2_sq(const float* a, const float* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += d * d;
  }
  return acc;
}

template <class T>
void write_pod(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
void read_pod(std::ifstream& in, T& v) {
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
}

}  // namespace

double l2_distance(const Fingerprint& a, const Fingerprint& b) {
  if (a.size() != b.size()) {
    fail(ErrorCode::DimensionMismatch, "fingerprint lengths " + std::to_string(a.size()) + " vs " +
                                           std::to_string(b.size()));
  }
  return std::sqrt(l2_sq(a.data(), b.data(), a.size()));
}

void IvfClustering::rebuild_members(std::size_t count) {
  members.assign(n_clusters, {});
  for (std::size_t i = 0; i < count; ++i) members[assignment[i]].push_back(static_cast<std::uint32_t>(i));
}

FingerprintIndex FingerprintIndex::build(std::vector<FingerprintRecord> records,
                                         std::uint64_t selection_hash) {
  if (records.empty()) fail(ErrorCode::EmptyInput, "cannot build an index from zero records");

  std::sort(records.begin(), records.end(),
            [](const FingerprintRecord& a, const FingerprintRecord& b) { return a.pair_id < b.pair_id; });

  const std::size_t f = records.front().fingerprint.size();
  if (f == 0) fail(ErrorCode::DimensionMismatch, "zero-length fingerprints");

  FingerprintIndex index;
  index.f_ = static_cast<std::uint32_t>(f);
  index.selection_hash_ = selection_hash;
  index.pair_ids_.reserve(records.size());
  index.example_ids_.reserve(records.size());
  index.fingerprints_.reserve(records.size() * f);
  index.snippets_.reserve(records.size());
  index.sources_.reserve(records.size());

  for (std::size_t i = 0; i < records.size(); ++i) {
    FingerprintRecord& r = records[i];
    if (i > 0 && r.pair_id == records[i - 1].pair_id) {
      fail(ErrorCode::DuplicateRecord, "duplicate pair_id " + std::to_string(r.pair_id));
    }
    if (r.fingerprint.size() != f) {
      fail(ErrorCode::DimensionMismatch, "record " + std::to_string(r.pair_id) +
                                             " has fingerprint length " +
                                             std::to_string(r.fingerprint.size()));
    }
    index.pair_ids_.push_back(r.pair_id);
    index.example_ids_.push_back(r.example_id);
    index.fingerprints_.insert(index.fingerprints_.end(), r.fingerprint.begin(), r.fingerprint.end());
    index.snippets_.push_back(std::move(r.snippet));
    index.sources_.push_back(std::move(r.source));
  }
  return index;
}

const IvfClustering& FingerprintIndex::clustering() const {
  if (!clustering_) fail(ErrorCode::NotClustered, "index has no clustering metadata");
  return *clustering_;
}

std::vector<SearchHit> FingerprintIndex::collect_hits(const Fingerprint& q,
                                                      const std::vector<std::uint32_t>* rows,
                                                      std::size_t k) const {
  // (squared distance, pair_id, row), ascending.
  std::vector<std::tuple<double, std::uint64_t, std::size_t>> scored;
  const std::size_t n = rows ? rows->size() : count();
  scored.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t row = rows ? (*rows)[i] : i;
    scored.emplace_back(l2_sq(q.data(), fingerprint(row), f_), pair_ids_[row], row);
  }
  const std::size_t keep = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(keep), scored.end());

  std::vector<SearchHit> hits;
  hits.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) {
    const auto& [d2, pid, row] = scored[i];
    hits.push_back(SearchHit{pid, example_ids_[row], std::sqrt(d2), snippets_[row], sources_[row]});
  }
  return hits;
}

std::vector<SearchHit> FingerprintIndex::query(std::uint64_t caller_selection_hash,
                                               const Fingerprint& q, std::size_t k) const {
  if (caller_selection_hash != selection_hash_) {
    fail(ErrorCode::SelectionHashMismatch,
         "query fingerprint comes from selection " + std::to_string(caller_selection_hash) +
             " but the index was built with " + std::to_string(selection_hash_));
  }
  if (q.size() != f_) {
    fail(ErrorCode::DimensionMismatch, "query length " + std::to_string(q.size()) +
                                           " vs index F=" + std::to_string(f_));
  }
  if (k == 0) return {};
  return collect_hits(q, nullptr, k);
}

std::vector<SearchHit> FingerprintIndex::query_approx(std::uint64_t caller_selection_hash,
                                                      const Fingerprint& q, std::size_t k,
                                                      std::size_t n_probe) const {
  if (!clustering_) fail(ErrorCode::NotClustered, "query_approx requires clustering metadata");
  if (caller_selection_hash != selection_hash_) {
    fail(ErrorCode::SelectionHashMismatch, "selection hash mismatch");
  }
  if (q.size() != f_) fail(ErrorCode::DimensionMismatch, "query length vs index F");
  if (k == 0 || n_probe == 0) return {};

  const IvfClustering& ivf = *clustering_;
  std::vector<std::pair<double, std::uint32_t>> ranked(ivf.n_clusters);
  for (std::uint32_t c = 0; c < ivf.n_clusters; ++c) {
    ranked[c] = {l2_sq(q.data(), ivf.centroids.data() + static_cast<std::size_t>(c) * f_, f_), c};
  }
  const std::size_t probes = std::min<std::size_t>(n_probe, ivf.n_clusters);
  std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(probes), ranked.end());

  std::vector<std::uint32_t> rows;
  for (std::size_t p = 0; p < probes; ++p) {
    const auto& cluster = ivf.members[ranked[p].second];
    rows.insert(rows.end(), cluster.begin(), cluster.end());
  }
  return collect_hits(q, &rows, k);
}

void FingerprintIndex::build_clustering(std::uint64_t seed) {
  const std::size_t n = count();
  IvfClustering ivf;
  ivf.seed = seed;
  ivf.n_clusters = static_cast<std::uint32_t>(
      std::max<std::size_t>(1, std::min(n, static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(n)))))));
  const std::uint32_t nc = ivf.n_clusters;

  // Seeded init from distinct records, then 25 Lloyd iterations.
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  fisher_yates_shuffle(order, rng);
  ivf.centroids.assign(static_cast<std::size_t>(nc) * f_, 0.0f);
  for (std::uint32_t c = 0; c < nc; ++c) {
    std::memcpy(ivf.centroids.data() + static_cast<std::size_t>(c) * f_, fingerprint(order[c]),
                sizeof(float) * f_);
  }

  ivf.assignment.assign(n, 0);
  std::vector<double> sums(static_cast<std::size_t>(nc) * f_);
  std::vector<std::uint64_t> sizes(nc);
  for (int iter = 0; iter < 25; ++iter) {
    parallel_for(n, [&](std::size_t lo, std::size_t hi) {
      for (std::size_t i = lo; i < hi; ++i) {
        const float* fp = fingerprint(i);
        double best = l2_sq(fp, ivf.centroids.data(), f_);
        std::uint32_t best_c = 0;
        for (std::uint32_t c = 1; c < nc; ++c) {
          const double d = l2_sq(fp, ivf.centroids.data() + static_cast<std::size_t>(c) * f_, f_);
          if (d < best) {
            best = d;
            best_c = c;
          }
        }
        ivf.assignment[i] = best_c;
      }
    });

    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(sizes.begin(), sizes.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      const std::uint32_t c = ivf.assignment[i];
      const float* fp = fingerprint(i);
      double* s = sums.data() + static_cast<std::size_t>(c) * f_;
      for (std::uint32_t j = 0; j < f_; ++j) s[j] += static_cast<double>(fp[j]);
      ++sizes[c];
    }
    for (std::uint32_t c = 0; c < nc; ++c) {
      if (sizes[c] == 0) continue;  // keep the previous centroid
      float* dst = ivf.centroids.data() + static_cast<std::size_t>(c) * f_;
      const double inv = 1.0 / static_cast<double>(sizes[c]);
      const double* s = sums.data() + static_cast<std::size_t>(c) * f_;
      for (std::uint32_t j = 0; j < f_; ++j) dst[j] = static_cast<float>(s[j] * inv);
    }
  }

  ivf.rebuild_members(n);
  clustering_ = std::move(ivf);
}

void FingerprintIndex::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  out.write(kMagic, 4);
  write_pod(out, kVersion);
  write_pod(out, f_);
  const std::uint64_t n = count();
  write_pod(out, n);
  write_pod(out, selection_hash_);
  for (std::size_t i = 0; i < n; ++i) {
    write_pod(out, pair_ids_[i]);
    write_pod(out, example_ids_[i]);
    out.write(reinterpret_cast<const char*>(fingerprint(i)),
              static_cast<std::streamsize>(sizeof(float) * f_));
  }
  if (!out) fail(ErrorCode::IoError, "failed writing " + path.string());
  out.close();

  std::ofstream meta(path.string() + ".meta.jsonl", std::ios::binary);
  if (!meta) fail(ErrorCode::IoError, "cannot open sidecar for writing");
  for (std::size_t i = 0; i < n; ++i) {
    nlohmann::json j = {{"pair_id", pair_ids_[i]},
                        {"example_id", example_ids_[i]},
                        {"snippet", snippets_[i]},
                        {"source", sources_[i]}};
    meta << j.dump() << '\n';
  }
  if (!meta) fail(ErrorCode::IoError, "failed writing sidecar");

  if (clustering_) {
    const IvfClustering& ivf = *clustering_;
    std::ofstream cf(path.string() + ".ivf", std::ios::binary);
    if (!cf) fail(ErrorCode::IoError, "cannot open ivf file for writing");
    cf.write(kIvfMagic, 4);
    write_pod(cf, kVersion);
    write_pod(cf, f_);
    write_pod(cf, ivf.n_clusters);
    write_pod(cf, n);
    write_pod(cf, ivf.seed);
    cf.write(reinterpret_cast<const char*>(ivf.centroids.data()),
             static_cast<std::streamsize>(sizeof(float) * ivf.centroids.size()));
    cf.write(reinterpret_cast<const char*>(ivf.assignment.data()),
             static_cast<std::streamsize>(sizeof(std::uint32_t) * ivf.assignment.size()));
    if (!cf) fail(ErrorCode::IoError, "failed writing ivf file");
  }
}

FingerprintIndex FingerprintIndex::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0) {
    fail(ErrorCode::FormatError, "not a fingerprint index: " + path.string());
  }
  std::uint32_t version = 0;
  read_pod(in, version);
  if (version != kVersion) fail(ErrorCode::FormatError, "unsupported index version");

  FingerprintIndex index;
  std::uint64_t n = 0;
  read_pod(in, index.f_);
  read_pod(in, n);
  read_pod(in, index.selection_hash_);
  if (index.f_ == 0) fail(ErrorCode::FormatError, "index has F=0");

  index.pair_ids_.resize(n);
  index.example_ids_.resize(n);
  index.fingerprints_.resize(n * index.f_);
  for (std::uint64_t i = 0; i < n; ++i) {
    read_pod(in, index.pair_ids_[i]);
    read_pod(in, index.example_ids_[i]);
    in.read(reinterpret_cast<char*>(index.fingerprints_.data() + i * index.f_),
            static_cast<std::streamsize>(sizeof(float) * index.f_));
  }
  if (!in) fail(ErrorCode::FormatError, "index file truncated: " + path.string());

  std::ifstream meta(path.string() + ".meta.jsonl", std::ios::binary);
  if (!meta) fail(ErrorCode::IoError, "missing sidecar " + path.string() + ".meta.jsonl");
  index.snippets_.resize(n);
  index.sources_.resize(n);
  std::string line;
  std::uint64_t row = 0;
  while (std::getline(meta, line)) {
    if (line.empty()) continue;
    if (row >= n) fail(ErrorCode::FormatError, "sidecar has more rows than the index");
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::FormatError, std::string("bad sidecar line: ") + e.what());
    }
    if (j.at("pair_id").get<std::uint64_t>() != index.pair_ids_[row]) {
      fail(ErrorCode::FormatError, "sidecar row order does not match the index");
    }
    index.snippets_[row] = j.at("snippet").get<std::string>();
    index.sources_[row] = j.at("source").get<std::string>();
    ++row;
  }
  if (row != n) fail(ErrorCode::FormatError, "sidecar has fewer rows than the index");

  const std::filesystem::path ivf_path = path.string() + ".ivf";
  if (std::filesystem::exists(ivf_path)) {
    std::ifstream cf(ivf_path, std::ios::binary);
    char im[4];
    cf.read(im, 4);
    std::uint32_t v = 0, f = 0;
    read_pod(cf, v);
    read_pod(cf, f);
    if (cf.gcount() == 0 || std::memcmp(im, kIvfMagic, 4) != 0 || v != kVersion || f != index.f_) {
      fail(ErrorCode::FormatError, "bad ivf metadata: " + ivf_path.string());
    }
    IvfClustering ivf;
    std::uint64_t count = 0;
    read_pod(cf, ivf.n_clusters);
    read_pod(cf, count);
    read_pod(cf, ivf.seed);
    if (count != n) fail(ErrorCode::FormatError, "ivf record count mismatch");
    ivf.centroids.resize(static_cast<std::size_t>(ivf.n_clusters) * f);
    ivf.assignment.resize(n);
    cf.read(reinterpret_cast<char*>(ivf.centroids.data()),
            static_cast<std::streamsize>(sizeof(float) * ivf.centroids.size()));
    cf.read(reinterpret_cast<char*>(ivf.assignment.data()),
            static_cast<std::streamsize>(sizeof(std::uint32_t) * ivf.assignment.size()));
    if (!cf) fail(ErrorCode::FormatError, "ivf file truncated");
    ivf.rebuild_members(n);
    index.clustering_ = std::move(ivf);
  }
  return index;
}

}  // namespace provgen
