#include "provgen/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>
#include <unordered_map>
#include <unordered_set>

#include "provgen/error.hpp"
#include "provgen/parallel.hpp"

namespace provgen {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

}  // namespace

double AccReport::at(std::int32_t k) const {
  for (const auto& [kk, acc] : accuracy) {
    if (kk == k) return acc;
  }
  fail(ErrorCode::FormatError, "report has no entry for k=" + std::to_string(k));
}

AccReport top_k_accuracy(const std::vector<RecitationCase>& cases, const FingerprintIndex& index,
                         const Weights& weights, const NeuronSelection& selection,
                         std::vector<std::int32_t> ks) {
  if (cases.empty()) fail(ErrorCode::EmptyCaseSet, "top_k_accuracy over zero cases");
  if (selection.selection_hash != index.selection_hash()) {
    fail(ErrorCode::SelectionHashMismatch, "selection does not match the index");
  }
  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
  if (ks.empty() || ks.front() < 1) fail(ErrorCode::FormatError, "ks must be positive");
  const std::size_t max_k = static_cast<std::size_t>(ks.back());

  // first_hit_rank[i]: 1-based rank of the first ground-truth record, or 0.
  std::vector<std::size_t> first_hit_rank(cases.size(), 0);
  parallel_for(cases.size(), [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      const RecitationCase& rc = cases[i];
      const Fingerprint fp = extract_fingerprint(weights, selection, rc.test_prefix);
      const std::vector<SearchHit> hits = index.query(selection.selection_hash, fp, max_k);
      const std::unordered_set<std::uint64_t> truth(rc.ground_truth_pair_ids.begin(),
                                                    rc.ground_truth_pair_ids.end());
      for (std::size_t r = 0; r < hits.size(); ++r) {
        if (truth.count(hits[r].pair_id)) {
          first_hit_rank[i] = r + 1;
          break;
        }
      }
    }
  });

  AccReport report;
  report.strategy = strategy_name(selection.strategy);
  report.case_count = cases.size();
  for (std::int32_t k : ks) {
    std::size_t hits = 0;
    for (std::size_t rank : first_hit_rank) {
      if (rank != 0 && rank <= static_cast<std::size_t>(k)) ++hits;
    }
    report.accuracy.emplace_back(k, static_cast<double>(hits) / static_cast<double>(cases.size()));
  }
  for (std::size_t i = 1; i < report.accuracy.size(); ++i) {
    if (report.accuracy[i].second + 1e-12 < report.accuracy[i - 1].second) {
      fail(ErrorCode::FormatError, "accuracy must be monotone in k");
    }
  }
  return report;
}

StrategyTable compare_strategies(const std::vector<TrainingPair>& pairs,
                                 const std::vector<CorpusFile>& corpus,
                                 const std::vector<RecitationCase>& cases, const Weights& weights,
                                 const std::vector<Strategy>& strategies, std::int32_t f,
                                 const std::vector<std::uint64_t>& random_seeds,
                                 const std::vector<std::int32_t>& ks, std::size_t profile_limit) {
  if (pairs.empty()) fail(ErrorCode::EmptyInput, "compare_strategies needs training pairs");
  if (cases.empty()) fail(ErrorCode::EmptyCaseSet, "compare_strategies needs recitation cases");

  std::vector<TokenSeq> profile_prefixes;
  const std::size_t limit =
      profile_limit == 0 ? pairs.size() : std::min(profile_limit, pairs.size());
  profile_prefixes.reserve(limit);
  for (std::size_t i = 0; i < limit; ++i) profile_prefixes.push_back(pairs[i].prefix);
  const NeuronStats stats = profile_neurons(weights, profile_prefixes);

  // One selection per table cell; Random contributes one per seed.
  std::vector<NeuronSelection> selections;
  std::vector<std::pair<std::size_t, std::size_t>> row_span;  // [begin, end) into selections
  for (Strategy s : strategies) {
    const std::size_t begin = selections.size();
    if (s == Strategy::Random) {
      for (std::uint64_t seed : random_seeds) selections.push_back(select_neurons(stats, s, f, seed));
      if (random_seeds.empty()) selections.push_back(select_neurons(stats, s, f, 0));
    } else {
      selections.push_back(select_neurons(stats, s, f));
    }
    row_span.emplace_back(begin, selections.size());
  }

  // Shared extraction pass: one forward per pair serves every selection.
  std::unordered_map<std::uint64_t, const CorpusFile*> files;
  for (const CorpusFile& file : corpus) files[file.example_id] = &file;
  std::vector<const NeuronSelection*> sel_ptrs;
  sel_ptrs.reserve(selections.size());
  for (const NeuronSelection& s : selections) sel_ptrs.push_back(&s);

  std::vector<std::vector<FingerprintRecord>> per_selection(selections.size());
  for (auto& v : per_selection) v.reserve(pairs.size());
  parallel_ordered<std::vector<Fingerprint>>(
      pairs.size(), 512,
      [&](std::size_t i) { return extract_fingerprints(weights, sel_ptrs, pairs[i].prefix); },
      [&](std::size_t i, std::vector<Fingerprint>&& fps) {
        const TrainingPair& pair = pairs[i];
        auto fit = files.find(pair.example_id);
        for (std::size_t s = 0; s < fps.size(); ++s) {
          FingerprintRecord rec;
          rec.pair_id = pair.pair_id;
          rec.example_id = pair.example_id;
          rec.fingerprint = std::move(fps[s]);
          if (fit != files.end()) {
            rec.snippet = pair_snippet(*fit->second, pair.line_index);
            rec.source = fit->second->source;
          }
          per_selection[s].push_back(std::move(rec));
        }
      });

  StrategyTable table;
  table.ks = ks;
  std::sort(table.ks.begin(), table.ks.end());
  table.case_count = cases.size();

  for (std::size_t row_i = 0; row_i < strategies.size(); ++row_i) {
    const auto [begin, end] = row_span[row_i];
    StrategyRow row;
    row.label = strategy_name(strategies[row_i]);
    row.seed_count = static_cast<std::int32_t>(end - begin);
    for (std::size_t s = begin; s < end; ++s) {
      const FingerprintIndex index =
          FingerprintIndex::build(std::move(per_selection[s]), selections[s].selection_hash);
      const AccReport report = top_k_accuracy(cases, index, weights, selections[s], table.ks);
      for (const auto& [k, acc] : report.accuracy) {
        row.mean_acc[k] += acc / static_cast<double>(row.seed_count);
        auto mn = row.min_acc.find(k);
        row.min_acc[k] = mn == row.min_acc.end() ? acc : std::min(mn->second, acc);
        auto mx = row.max_acc.find(k);
        row.max_acc[k] = mx == row.max_acc.end() ? acc : std::max(mx->second, acc);
      }
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

std::string render_strategy_table(const StrategyTable& table) {
  // Columns mirror the accuracy table shape: Method, then Acc@k descending.
  std::vector<std::int32_t> ks(table.ks.rbegin(), table.ks.rend());

  auto pct = [](double v) {
    std::ostringstream s;
    s.setf(std::ios::fixed);
    s.precision(2);
    s << v * 100.0 << "%";
    return s.str();
  };

  std::vector<std::vector<std::string>> cells;
  for (const StrategyRow& row : table.rows) {
    std::vector<std::string> line{row.label};
    for (std::int32_t k : ks) {
      std::string cell = pct(row.mean_acc.at(k));
      if (row.seed_count > 1) {
        cell += " [" + pct(row.min_acc.at(k)) + ".." + pct(row.max_acc.at(k)) + "]";
      }
      line.push_back(std::move(cell));
    }
    cells.push_back(std::move(line));
  }

  std::vector<std::size_t> width{6};  // "Method"
  for (std::size_t c = 1; c <= ks.size(); ++c) {
    width.push_back(5 + std::to_string(ks[c - 1]).size());
  }
  for (const auto& line : cells) {
    for (std::size_t c = 0; c < line.size(); ++c) width[c] = std::max(width[c], line[c].size());
  }

  std::ostringstream final_out;
  final_out << std::left;
  final_out.width(static_cast<std::streamsize>(width[0]));
  final_out << "Method";
  for (std::size_t c = 1; c < width.size(); ++c) {
    final_out << " | ";
    final_out.width(static_cast<std::streamsize>(width[c]));
    final_out << ("Acc@" + std::to_string(ks[c - 1]));
  }
  final_out << "\n";
  for (std::size_t c = 0; c < width.size(); ++c) {
    final_out << std::string(width[c] + (c == 0 ? 0 : 3), '-');
  }
  final_out << "\n";
  for (const auto& line : cells) {
    for (std::size_t c = 0; c < line.size(); ++c) {
      if (c > 0) final_out << " | ";
      final_out.width(static_cast<std::streamsize>(width[c]));
      final_out << line[c];
    }
    final_out << "\n";
  }
  return final_out.str();
}

std::string hardware_note() {
  std::ifstream cpuinfo("/proc/cpuinfo");
  std::string line;
  std::string model = "unknown cpu";
  while (std::getline(cpuinfo, line)) {
    if (line.rfind("model name", 0) == 0) {
      const std::size_t colon = line.find(':');
      if (colon != std::string::npos && colon + 2 <= line.size()) model = line.substr(colon + 2);
      break;
    }
  }
  return model + ", " + std::to_string(std::thread::hardware_concurrency()) +
         " logical cpus, single-threaded bench";
}

LatencyReport bench_latency(const Weights& weights, const NeuronSelection& selection,
                            const FingerprintIndex& index, const std::vector<TokenSeq>& queries,
                            std::int32_t warmup, std::int32_t iters, std::int32_t beam_width,
                            std::size_t top_k) {
  if (warmup < 5 || iters < 30) {
    fail(ErrorCode::InsufficientSamples, "need warmup >= 5 and iters >= 30");
  }
  if (queries.empty()) fail(ErrorCode::EmptyInput, "bench_latency needs query prefixes");
  WorkerLimitGuard single_thread(1);

  auto query_at = [&](std::size_t i) -> const TokenSeq& { return queries[i % queries.size()]; };

  auto retrieve = [&](const TokenSeq& prefix) {
    const Fingerprint fp = extract_fingerprint(weights, selection, prefix);
    return index.query(selection.selection_hash, fp, top_k);
  };

  for (std::int32_t i = 0; i < warmup; ++i) {
    retrieve(query_at(static_cast<std::size_t>(i)));
    generate_line(weights, query_at(static_cast<std::size_t>(i)), beam_width);
  }

  std::vector<double> retrieval_ms(static_cast<std::size_t>(iters));
  for (std::int32_t i = 0; i < iters; ++i) {
    const auto t0 = Clock::now();
    retrieve(query_at(static_cast<std::size_t>(i)));
    retrieval_ms[static_cast<std::size_t>(i)] = ms_since(t0);
  }

  double generation_total = 0.0;
  for (std::int32_t i = 0; i < iters; ++i) {
    const auto t0 = Clock::now();
    generate_line(weights, query_at(static_cast<std::size_t>(i)), beam_width);
    generation_total += ms_since(t0);
  }

  std::vector<double> sorted = retrieval_ms;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();

  LatencyReport report;
  report.retrieval_mean_ms = 0.0;
  for (double v : retrieval_ms) report.retrieval_mean_ms += v;
  report.retrieval_mean_ms /= static_cast<double>(n);
  report.retrieval_median_ms = n % 2 == 1 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  const std::size_t p95_idx = std::min(n - 1, static_cast<std::size_t>(std::ceil(0.95 * n)) - 1);
  report.retrieval_p95_ms = sorted[p95_idx];
  report.generation_mean_ms = generation_total / static_cast<double>(iters);
  report.generation_over_retrieval = report.generation_mean_ms / report.retrieval_mean_ms;
  report.record_count = index.count();
  report.fingerprint_size = index.dim();
  report.iterations = iters;
  report.hardware = hardware_note();
  return report;
}

}  // namespace provgen
