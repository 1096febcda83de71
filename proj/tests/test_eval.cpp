#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <chrono>
#include <random>

#include "provgen/error.hpp"
#include "provgen/eval.hpp"
#include "provgen/toygen.hpp"

using namespace provgen;

namespace {

// A model plus a synthetic index where case i's ground-truth record sits at
// a known rank: record fingerprints are placed on a line at controlled
// distances from each case's true query fingerprint.
struct RankFixture {
  Weights weights;
  NeuronSelection selection;
  std::vector<RecitationCase> cases;
  std::vector<FingerprintRecord> records;

  RankFixture() {
    ModelConfig cfg;
    cfg.n_layers = 1;
    cfg.d_model = 8;
    cfg.n_heads = 2;
    cfg.d_ff = 16;
    cfg.vocab_size = 8;
    cfg.max_pos = 8;
    weights = init_weights(cfg, 55);

    NeuronStats stats;
    stats.n_layers = cfg.n_layers;
    stats.d_model = cfg.d_model;
    stats.count = 1;
    const std::size_t n = 16;
    stats.mean.assign(n, 0.0);
    stats.variance.assign(n, 1.0);
    stats.min_v.assign(n, 0.0);
    stats.max_v.assign(n, 0.0);
    selection = select_neurons(stats, Strategy::HighVariance, 4);

    // 20 cases; case i's single ground-truth record is at rank i+1: i decoy
    // records sit strictly closer to the query fingerprint.
    std::uint64_t next_id = 1;
    for (int i = 0; i < 20; ++i) {
      TokenSeq prefix{static_cast<TokenId>(i % 8), static_cast<TokenId>((i * 3) % 8),
                      static_cast<TokenId>((i * 5 + 1) % 8)};
      const Fingerprint q = extract_fingerprint(weights, selection, prefix);

      RecitationCase rc;
      rc.test_prefix = prefix;
      rc.predicted_line = "line" + std::to_string(i);
      rc.matched_line = rc.predicted_line;
      rc.occurrences = 2;

      for (int rank = 0; rank < i; ++rank) {
        FingerprintRecord decoy;
        decoy.pair_id = next_id++;
        decoy.example_id = 0;
        decoy.fingerprint = q;
        decoy.fingerprint[0] += 0.001f * static_cast<float>(rank + 1);
        records.push_back(decoy);
      }
      FingerprintRecord truth;
      truth.pair_id = next_id++;
      truth.example_id = 1;
      truth.fingerprint = q;
      truth.fingerprint[0] += 0.001f * static_cast<float>(i + 1);
      rc.ground_truth_pair_ids = {truth.pair_id};
      records.push_back(truth);
      cases.push_back(std::move(rc));
    }
  }
};

}  // namespace

TEST_CASE("top_k_accuracy with hand-placed ranks") {
  const RankFixture fx;
  auto records = fx.records;
  const FingerprintIndex index =
      FingerprintIndex::build(std::move(records), fx.selection.selection_hash);
  const AccReport report =
      top_k_accuracy(fx.cases, index, fx.weights, fx.selection, {1, 5, 10, 20});

  // Case i has its truth at rank i+1, so Acc@k = k/20.
  CHECK(report.at(1) == doctest::Approx(1.0 / 20.0));
  CHECK(report.at(5) == doctest::Approx(5.0 / 20.0));
  CHECK(report.at(10) == doctest::Approx(10.0 / 20.0));
  CHECK(report.at(20) == doctest::Approx(1.0));
  CHECK(report.case_count == 20);

  // Monotone in k.
  for (std::size_t i = 1; i < report.accuracy.size(); ++i) {
    CHECK(report.accuracy[i].second >= report.accuracy[i - 1].second);
  }
}

TEST_CASE("top_k_accuracy is invariant under case permutation") {
  const RankFixture fx;
  auto records = fx.records;
  const FingerprintIndex index =
      FingerprintIndex::build(std::move(records), fx.selection.selection_hash);

  auto shuffled = fx.cases;
  std::mt19937_64 rng(3);
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  const AccReport a = top_k_accuracy(fx.cases, index, fx.weights, fx.selection, {1, 5, 10});
  const AccReport b = top_k_accuracy(shuffled, index, fx.weights, fx.selection, {1, 5, 10});
  for (std::size_t i = 0; i < a.accuracy.size(); ++i) {
    CHECK(a.accuracy[i].second == b.accuracy[i].second);
  }
}

TEST_CASE("top_k_accuracy error paths") {
  const RankFixture fx;
  auto records = fx.records;
  const FingerprintIndex index =
      FingerprintIndex::build(std::move(records), fx.selection.selection_hash);
  try {
    top_k_accuracy({}, index, fx.weights, fx.selection, {1});
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptyCaseSet);
  }

  auto records2 = fx.records;
  const FingerprintIndex other = FingerprintIndex::build(std::move(records2), 999);
  try {
    top_k_accuracy(fx.cases, other, fx.weights, fx.selection, {1});
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SelectionHashMismatch);
  }
}

TEST_CASE("accuracy is zero when no ground truth is indexed") {
  const RankFixture fx;
  auto records = fx.records;
  for (auto& r : records) r.pair_id += 100000;  // break every ground-truth id
  const FingerprintIndex index =
      FingerprintIndex::build(std::move(records), fx.selection.selection_hash);
  const AccReport report = top_k_accuracy(fx.cases, index, fx.weights, fx.selection, {1, 10});
  CHECK(report.at(1) == 0.0);
  CHECK(report.at(10) == 0.0);
}

TEST_CASE("render_strategy_table has the Method/Acc@10/Acc@5/Acc@1 shape") {
  StrategyTable table;
  table.ks = {1, 5, 10};
  table.case_count = 20;
  StrategyRow row;
  row.label = "high_variance";
  row.mean_acc = {{1, 0.7384}, {5, 0.7928}, {10, 0.8121}};
  row.min_acc = row.mean_acc;
  row.max_acc = row.mean_acc;
  table.rows.push_back(row);
  row.label = "random";
  row.seed_count = 3;
  row.mean_acc = {{1, 0.6278}, {5, 0.6661}, {10, 0.6757}};
  row.min_acc = {{1, 0.60}, {5, 0.65}, {10, 0.66}};
  row.max_acc = {{1, 0.65}, {5, 0.68}, {10, 0.69}};
  table.rows.push_back(row);

  const std::string text = render_strategy_table(table);
  CHECK(text.find("Method") != std::string::npos);
  CHECK(text.find("Acc@10 | Acc@5") != std::string::npos);
  CHECK(text.find("Acc@1") != std::string::npos);
  CHECK(text.find("high_variance") != std::string::npos);
  CHECK(text.find("81.21%") != std::string::npos);
  CHECK(text.find("[66.00%..69.00%]") != std::string::npos);  // random seed spread
}

TEST_CASE("compare_strategies over a tiny end-to-end fixture") {
  const ToyCorpusParams params{.files = 24, .min_lines = 10, .max_lines = 18, .planted = 5, .seed = 77};
  const auto corpus = generate_toy_corpus(params);
  std::vector<std::string> texts;
  for (const auto& f : corpus) texts.push_back(f.text);
  const Vocab vocab = build_vocab(texts, 1024);

  ModelConfig cfg;
  cfg.n_layers = 2;
  cfg.d_model = 24;
  cfg.n_heads = 4;
  cfg.d_ff = 48;
  cfg.vocab_size = static_cast<std::int32_t>(vocab.size());
  cfg.max_pos = 64;

  std::vector<TokenSeq> windows;
  for (const auto& f : corpus) {
    const TokenSeq stream = encode(vocab, f.text);
    for (std::size_t s = 0; s + 2 <= stream.size(); s += 24) {
      windows.emplace_back(stream.begin() + s,
                           stream.begin() + std::min(stream.size(), s + 48));
    }
  }
  TrainHyper hyper;
  hyper.steps = 700;
  hyper.batch = 8;
  hyper.lr = 3e-3;
  hyper.seed = 5;
  const Weights weights = train_toy(windows, cfg, hyper);

  std::vector<TrainingPair> pairs;
  for (const auto& f : corpus) {
    for (auto& p : split_pairs(f, vocab, 2, 16)) pairs.push_back(std::move(p));
  }
  const TrainingLineSet set = build_training_line_set(corpus, pairs);

  std::vector<TokenSeq> prefixes;
  for (const auto& p : pairs) {
    const auto it = set.lines.find(p.target_line);
    if (it != set.lines.end() && it->second.occurrences < kRecitationMaxOccurrences) {
      prefixes.push_back(p.prefix);
    }
  }
  REQUIRE(!prefixes.empty());
  const auto cases = mine_recitations(weights, vocab, prefixes, set, 3);
  REQUIRE(!cases.empty());

  const std::vector<Strategy> strategies{Strategy::HighVariance, Strategy::Random,
                                         Strategy::Maximum};
  const StrategyTable table =
      compare_strategies(pairs, corpus, cases, weights, strategies, 12, {1, 2}, {1, 10}, 200);
  REQUIRE(table.rows.size() == 3);
  CHECK(table.rows[0].label == "high_variance");
  CHECK(table.rows[1].label == "random");
  CHECK(table.rows[1].seed_count == 2);
  CHECK(table.case_count == cases.size());
  for (const auto& row : table.rows) {
    CHECK(row.mean_acc.at(10) >= row.mean_acc.at(1));  // monotone per row
    CHECK(row.mean_acc.at(10) >= row.min_acc.at(10));
    CHECK(row.max_acc.at(10) >= row.mean_acc.at(10));
  }

  // Deterministic end to end for fixed seeds.
  const StrategyTable again =
      compare_strategies(pairs, corpus, cases, weights, strategies, 12, {1, 2}, {1, 10}, 200);
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    CHECK(table.rows[r].mean_acc == again.rows[r].mean_acc);
  }

  // Self-retrieval sanity: with identical truncation the query fingerprint
  // is bit-identical to the indexed one, so Acc@1 of the default strategy
  // should be high.
  CHECK(table.rows[0].mean_acc.at(1) > 0.5);
}

TEST_CASE("bench_latency order statistics and guards") {
  const RankFixture fx;
  auto records = fx.records;
  const FingerprintIndex index =
      FingerprintIndex::build(std::move(records), fx.selection.selection_hash);
  std::vector<TokenSeq> queries;
  for (const auto& c : fx.cases) queries.push_back(c.test_prefix);

  const LatencyReport report = bench_latency(fx.weights, fx.selection, index, queries, 5, 40, 2, 5);
  CHECK(report.retrieval_mean_ms > 0.0);
  CHECK(report.generation_mean_ms > 0.0);
  CHECK(report.retrieval_p95_ms >= report.retrieval_median_ms);
  CHECK(report.record_count == index.count());
  CHECK(report.fingerprint_size == index.dim());
  CHECK(report.iterations == 40);
  CHECK(!report.hardware.empty());

  try {
    bench_latency(fx.weights, fx.selection, index, queries, 4, 40, 2, 5);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InsufficientSamples);
  }
  try {
    bench_latency(fx.weights, fx.selection, index, queries, 5, 29, 2, 5);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InsufficientSamples);
  }
}

TEST_CASE("doubling the record count scales exact-scan time by roughly 2x (within 3x)") {
  std::mt19937_64 rng(7);
  auto make_records = [&](std::size_t n) {
    std::vector<FingerprintRecord> records(n);
    for (std::size_t i = 0; i < n; ++i) {
      records[i].pair_id = i;
      records[i].fingerprint.resize(100);
      for (auto& v : records[i].fingerprint) {
        v = static_cast<float>(static_cast<double>(rng() % 1000) / 500.0 - 1.0);
      }
    }
    return records;
  };
  const FingerprintIndex small = FingerprintIndex::build(make_records(10000), 1);
  const FingerprintIndex big = FingerprintIndex::build(make_records(20000), 1);

  Fingerprint q(100);
  for (auto& v : q) v = static_cast<float>(static_cast<double>(rng() % 1000) / 500.0 - 1.0);

  auto scan_time = [&](const FingerprintIndex& index) {
    double best = 1e300;
    for (int rep = 0; rep < 5; ++rep) {
      const auto t0 = std::chrono::steady_clock::now();
      for (int i = 0; i < 20; ++i) index.query(1, q, 10);
      best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    return best;
  };

  bool ok = false;
  double ratio = 0.0;
  for (int attempt = 0; attempt < 3 && !ok; ++attempt) {
    ratio = scan_time(big) / scan_time(small);
    ok = ratio >= 1.2 && ratio <= 3.0;
  }
  INFO("scan time ratio ", ratio);
  CHECK(ok);
}
