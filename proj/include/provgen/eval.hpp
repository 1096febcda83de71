#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "provgen/fingerprint.hpp"
#include "provgen/indexstore.hpp"
#include "provgen/pairing.hpp"
#include "provgen/recitation.hpp"

namespace provgen {

// Top-k retrieval accuracy over recitation cases. A case is a hit at k when
// any of its ground-truth pair ids appears among the first k results.
struct AccReport {
  std::string strategy;
  std::size_t case_count = 0;
  std::vector<std::pair<std::int32_t, double>> accuracy;  // (k, acc), ascending k

  double at(std::int32_t k) const;
};

AccReport top_k_accuracy(const std::vector<RecitationCase>& cases, const FingerprintIndex& index,
                         const Weights& weights, const NeuronSelection& selection,
                         std::vector<std::int32_t> ks);

struct StrategyRow {
  std::string label;
  std::int32_t seed_count = 1;                  // >1 for the seed-averaged Random row
  std::map<std::int32_t, double> mean_acc;      // k -> mean accuracy
  std::map<std::int32_t, double> min_acc;
  std::map<std::int32_t, double> max_acc;
};

struct StrategyTable {
  std::vector<std::int32_t> ks;
  std::size_t case_count = 0;
  std::vector<StrategyRow> rows;
};

// Profile once, then per strategy: select -> index all pairs -> score.
// Random is averaged over `random_seeds`. All per-pair fingerprints come
// from a single shared forward pass per pair.
StrategyTable compare_strategies(const std::vector<TrainingPair>& pairs,
                                 const std::vector<CorpusFile>& corpus,
                                 const std::vector<RecitationCase>& cases, const Weights& weights,
                                 const std::vector<Strategy>& strategies, std::int32_t f,
                                 const std::vector<std::uint64_t>& random_seeds,
                                 const std::vector<std::int32_t>& ks,
                                 std::size_t profile_limit = 0);

// Aligned text table with the Method / Acc@10 / Acc@5 / Acc@1 column shape.
std::string render_strategy_table(const StrategyTable& table);

struct LatencyReport {
  double retrieval_mean_ms = 0.0;
  double retrieval_median_ms = 0.0;
  double retrieval_p95_ms = 0.0;
  double generation_mean_ms = 0.0;
  double generation_over_retrieval = 0.0;
  std::uint64_t record_count = 0;
  std::uint32_t fingerprint_size = 0;
  std::int32_t iterations = 0;
  std::string hardware;
};

// Wall-clock latency of retrieval (fingerprint extraction + exact query)
// versus per-line generation, single-threaded, monotonic clock.
LatencyReport bench_latency(const Weights& weights, const NeuronSelection& selection,
                            const FingerprintIndex& index, const std::vector<TokenSeq>& queries,
                            std::int32_t warmup, std::int32_t iters, std::int32_t beam_width,
                            std::size_t top_k = 10);

std::string hardware_note();

}  // namespace provgen
