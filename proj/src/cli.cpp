#include "provgen/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "provgen/error.hpp"
#include "provgen/eval.hpp"
#include "provgen/fingerprint.hpp"
#include "provgen/indexstore.hpp"
#include "provgen/model.hpp"
#include "provgen/pairing.hpp"
#include "provgen/parallel.hpp"
#include "provgen/recitation.hpp"
#include "provgen/rng.hpp"
#include "provgen/tokenizer.hpp"
#include "provgen/toygen.hpp"

namespace provgen::cli {

namespace {

std::vector<TrainingPair> pairs_for_corpus(const std::vector<CorpusFile>& corpus, const Vocab& vocab,
                                           std::int32_t max_prefix_tokens) {
  std::vector<std::vector<TrainingPair>> per_file(corpus.size());
  parallel_for(corpus.size(), [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      per_file[i] = split_pairs(corpus[i], vocab, 2, max_prefix_tokens);
    }
  });
  std::vector<TrainingPair> pairs;
  for (auto& v : per_file) {
    pairs.insert(pairs.end(), std::make_move_iterator(v.begin()), std::make_move_iterator(v.end()));
  }
  return pairs;
}

std::vector<TokenSeq> training_windows(const std::vector<CorpusFile>& corpus, const Vocab& vocab,
                                       std::int32_t window, std::int32_t stride) {
  std::vector<TokenSeq> windows;
  for (const CorpusFile& file : corpus) {
    const TokenSeq stream = encode(vocab, file.text);
    for (std::size_t start = 0; start + 2 <= stream.size();
         start += static_cast<std::size_t>(stride)) {
      const std::size_t end = std::min(stream.size(), start + static_cast<std::size_t>(window));
      windows.emplace_back(stream.begin() + static_cast<std::ptrdiff_t>(start),
                           stream.begin() + static_cast<std::ptrdiff_t>(end));
      if (end == stream.size()) break;
    }
  }
  return windows;
}

TokenSeq tail_tokens(const TokenSeq& seq, std::size_t n) {
  if (seq.size() <= n) return seq;
  return TokenSeq(seq.end() - static_cast<std::ptrdiff_t>(n), seq.end());
}

std::vector<std::int32_t> parse_ks(const std::string& csv) {
  std::vector<std::int32_t> ks;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) ks.push_back(std::stoi(item));
  }
  if (ks.empty()) fail(ErrorCode::FormatError, "no ks given");
  return ks;
}

std::vector<std::uint64_t> parse_seeds(const std::string& csv) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) seeds.push_back(std::stoull(item));
  }
  return seeds;
}

nlohmann::json acc_report_json(const AccReport& report) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& [k, acc] : report.accuracy) entries.push_back({{"k", k}, {"accuracy", acc}});
  return {{"strategy", report.strategy}, {"case_count", report.case_count}, {"accuracy", entries}};
}

void write_json_file(const nlohmann::json& j, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::IoError, "cannot open " + path + " for writing");
  out << j.dump(2) << '\n';
}

FingerprintIndex build_index_for_selection(const std::vector<CorpusFile>& corpus,
                                           const std::vector<TrainingPair>& pairs,
                                           const Weights& weights, const NeuronSelection& selection) {
  std::unordered_map<std::uint64_t, const CorpusFile*> files;
  for (const CorpusFile& file : corpus) files[file.example_id] = &file;

  std::vector<FingerprintRecord> records;
  records.reserve(pairs.size());
  parallel_ordered<Fingerprint>(
      pairs.size(), 512,
      [&](std::size_t i) { return extract_fingerprint(weights, selection, pairs[i].prefix); },
      [&](std::size_t i, Fingerprint&& fp) {
        const TrainingPair& pair = pairs[i];
        FingerprintRecord rec;
        rec.pair_id = pair.pair_id;
        rec.example_id = pair.example_id;
        rec.fingerprint = std::move(fp);
        auto fit = files.find(pair.example_id);
        if (fit != files.end()) {
          rec.snippet = pair_snippet(*fit->second, pair.line_index);
          rec.source = fit->second->source;
        }
        records.push_back(std::move(rec));
      });
  return FingerprintIndex::build(std::move(records), selection.selection_hash);
}

}  // namespace

int run(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  argv.push_back("provgen");
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data());
}

int run(int argc, const char* const* argv) {
  CLI::App app{"explain neural code generation by retrieving relevant training examples"};
  app.require_subcommand(1);

  // ---- gen-corpus ----
  auto* gen = app.add_subcommand("gen-corpus", "emit the deterministic toy corpus");
  struct {
    std::string out = "corpus.jsonl";
    ToyCorpusParams params;
  } gen_opt;
  gen->add_option("--out", gen_opt.out, "corpus JSONL path");
  gen->add_option("--seed", gen_opt.params.seed, "generator seed");
  gen->add_option("--files", gen_opt.params.files, "number of files");
  gen->add_option("--min-lines", gen_opt.params.min_lines, "min lines per file");
  gen->add_option("--max-lines", gen_opt.params.max_lines, "max lines per file");
  gen->add_option("--planted", gen_opt.params.planted, "planted rare lines");
  gen->callback([&] {
    save_corpus(generate_toy_corpus(gen_opt.params), gen_opt.out);
    std::cout << "wrote " << gen_opt.out << " (" << gen_opt.params.files << " files)\n";
  });

  // ---- build-vocab ----
  auto* bv = app.add_subcommand("build-vocab", "build the token vocabulary from a corpus");
  struct {
    std::string corpus = "corpus.jsonl";
    std::string out = "vocab.json";
    std::size_t max_size = 1024;
  } bv_opt;
  bv->add_option("--corpus", bv_opt.corpus, "corpus JSONL path");
  bv->add_option("--out", bv_opt.out, "vocab output path");
  bv->add_option("--max-size", bv_opt.max_size, "vocabulary size cap");
  bv->callback([&] {
    const auto corpus = load_corpus(bv_opt.corpus);
    std::vector<std::string> texts;
    texts.reserve(corpus.size());
    for (const auto& f : corpus) texts.push_back(f.text);
    const Vocab vocab = build_vocab(texts, bv_opt.max_size);
    save_vocab(vocab, bv_opt.out);
    std::cout << "wrote " << bv_opt.out << " (" << vocab.size() << " tokens)\n";
  });

  // ---- train ----
  auto* tr = app.add_subcommand("train", "train the toy next-token model");
  struct {
    std::string corpus = "corpus.jsonl";
    std::string vocab = "vocab.json";
    std::string out = "weights.bin";
    TrainHyper hyper;
    std::int32_t window = 64, stride = 32;
    ModelConfig config;
  } tr_opt;
  tr->add_option("--corpus", tr_opt.corpus, "corpus JSONL path");
  tr->add_option("--vocab", tr_opt.vocab, "vocab path");
  tr->add_option("--out", tr_opt.out, "weights output path");
  tr->add_option("--steps", tr_opt.hyper.steps, "optimizer steps");
  tr->add_option("--batch", tr_opt.hyper.batch, "sequences per step");
  tr->add_option("--lr", tr_opt.hyper.lr, "learning rate");
  tr->add_option("--seed", tr_opt.hyper.seed, "init and batch-sampling seed");
  tr->add_option("--window", tr_opt.window, "training window tokens");
  tr->add_option("--stride", tr_opt.stride, "window stride tokens");
  tr->add_option("--layers", tr_opt.config.n_layers, "transformer layers");
  tr->add_option("--d-model", tr_opt.config.d_model, "model width");
  tr->add_option("--heads", tr_opt.config.n_heads, "attention heads");
  tr->add_option("--d-ff", tr_opt.config.d_ff, "feed-forward width");
  tr->add_option("--max-pos", tr_opt.config.max_pos, "maximum sequence length");
  tr->callback([&] {
    const auto corpus = load_corpus(tr_opt.corpus);
    const Vocab vocab = load_vocab(tr_opt.vocab);
    tr_opt.config.vocab_size = static_cast<std::int32_t>(vocab.size());
    const auto windows = training_windows(corpus, vocab, tr_opt.window, tr_opt.stride);
    std::cerr << "training on " << windows.size() << " windows\n";
    const Weights weights = train_toy(windows, tr_opt.config, tr_opt.hyper,
                                      [](std::int64_t step, double loss) {
                                        std::fprintf(stderr, "step %6lld  loss %.4f\n",
                                                     static_cast<long long>(step), loss);
                                      });
    save_weights(weights, tr_opt.out);
    std::cout << "wrote " << tr_opt.out << "\n";
  });

  // ---- profile ----
  auto* pr = app.add_subcommand("profile", "profile neuron behavior over training prefixes");
  struct {
    std::string corpus = "corpus.jsonl";
    std::string vocab = "vocab.json";
    std::string weights = "weights.bin";
    std::string out = "stats.json";
    std::size_t limit = 0;
    std::uint64_t seed = 0;
    std::int32_t max_prefix_tokens = 224;
  } pr_opt;
  pr->add_option("--corpus", pr_opt.corpus, "corpus JSONL path");
  pr->add_option("--vocab", pr_opt.vocab, "vocab path");
  pr->add_option("--weights", pr_opt.weights, "weights path");
  pr->add_option("--out", pr_opt.out, "stats output path");
  pr->add_option("--limit", pr_opt.limit, "profile at most N prefixes (0 = all)");
  pr->add_option("--seed", pr_opt.seed, "prefix sampling seed");
  pr->add_option("--max-prefix-tokens", pr_opt.max_prefix_tokens, "prefix truncation");
  pr->callback([&] {
    const auto corpus = load_corpus(pr_opt.corpus);
    const Vocab vocab = load_vocab(pr_opt.vocab);
    const Weights weights = load_weights(pr_opt.weights);
    auto pairs = pairs_for_corpus(corpus, vocab, pr_opt.max_prefix_tokens);
    std::vector<std::size_t> order(pairs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    if (pr_opt.limit > 0 && pr_opt.limit < pairs.size()) {
      std::mt19937_64 rng(pr_opt.seed);
      fisher_yates_shuffle(order, rng);
      order.resize(pr_opt.limit);
    }
    std::vector<TokenSeq> prefixes;
    prefixes.reserve(order.size());
    for (std::size_t i : order) prefixes.push_back(pairs[i].prefix);
    const NeuronStats stats = profile_neurons(weights, prefixes);
    save_neuron_stats(stats, pr_opt.out);
    std::cout << "wrote " << pr_opt.out << " (" << stats.count << " prefixes, "
              << stats.neuron_count() << " neurons)\n";
  });

  // ---- select ----
  auto* se = app.add_subcommand("select", "select the critical fingerprint neurons");
  struct {
    std::string stats = "stats.json";
    std::string out = "selection.json";
    std::string strategy = "high_variance";
    std::int32_t f = 100;
    std::uint64_t seed = 0;
  } se_opt;
  se->add_option("--stats", se_opt.stats, "profiling stats path");
  se->add_option("--out", se_opt.out, "selection output path");
  se->add_option("--strategy", se_opt.strategy,
                 "high_variance|random|maximum|minimum|ffn_variance");
  se->add_option("--f", se_opt.f, "fingerprint size");
  se->add_option("--seed", se_opt.seed, "seed for the random strategy");
  se->callback([&] {
    const NeuronStats stats = load_neuron_stats(se_opt.stats);
    const auto strategy = strategy_from_name(se_opt.strategy);
    if (!strategy) fail(ErrorCode::FormatError, "unknown strategy '" + se_opt.strategy + "'");
    std::optional<std::uint64_t> seed;
    if (*strategy == Strategy::Random) seed = se_opt.seed;
    const NeuronSelection selection = select_neurons(stats, *strategy, se_opt.f, seed);
    save_selection(selection, se_opt.out);
    std::cout << "wrote " << se_opt.out << " (hash " << selection.selection_hash << ")\n";
  });

  // ---- fingerprint ----
  auto* fp = app.add_subcommand("fingerprint", "build the fingerprint index over all training pairs");
  struct {
    std::string corpus = "corpus.jsonl";
    std::string vocab = "vocab.json";
    std::string weights = "weights.bin";
    std::string selection = "selection.json";
    std::string out = "index.bin";
    std::int32_t max_prefix_tokens = 224;
    bool cluster = false;
    std::uint64_t cluster_seed = 0;
  } fp_opt;
  fp->add_option("--corpus", fp_opt.corpus, "corpus JSONL path");
  fp->add_option("--vocab", fp_opt.vocab, "vocab path");
  fp->add_option("--weights", fp_opt.weights, "weights path");
  fp->add_option("--selection", fp_opt.selection, "selection path");
  fp->add_option("--out", fp_opt.out, "index output path");
  fp->add_option("--max-prefix-tokens", fp_opt.max_prefix_tokens, "prefix truncation");
  fp->add_flag("--cluster", fp_opt.cluster, "also write IVF clustering metadata");
  fp->add_option("--cluster-seed", fp_opt.cluster_seed, "clustering seed");
  fp->callback([&] {
    const auto corpus = load_corpus(fp_opt.corpus);
    const Vocab vocab = load_vocab(fp_opt.vocab);
    const Weights weights = load_weights(fp_opt.weights);
    const NeuronSelection selection = load_selection(fp_opt.selection);
    const auto pairs = pairs_for_corpus(corpus, vocab, fp_opt.max_prefix_tokens);
    if (pairs.empty()) fail(ErrorCode::EmptyInput, "corpus yields no training pairs");
    FingerprintIndex index = build_index_for_selection(corpus, pairs, weights, selection);
    if (fp_opt.cluster) index.build_clustering(fp_opt.cluster_seed);
    index.save(fp_opt.out);
    std::cout << "wrote " << fp_opt.out << " (" << index.count() << " records, F=" << index.dim()
              << ")\n";
  });

  // ---- query ----
  auto* qu = app.add_subcommand("query", "generate the next line and retrieve relevant examples");
  struct {
    std::string index = "index.bin";
    std::string selection = "selection.json";
    std::string vocab = "vocab.json";
    std::string weights = "weights.bin";
    std::string prefix_file;
    bool use_stdin = false;
    std::size_t k = 10;
    std::int32_t beam = 5;
    std::int32_t max_prefix_tokens = 224;
    bool json = false;
  } qu_opt;
  qu->add_option("--index", qu_opt.index, "index path");
  qu->add_option("--selection", qu_opt.selection, "selection path");
  qu->add_option("--vocab", qu_opt.vocab, "vocab path");
  qu->add_option("--weights", qu_opt.weights, "weights path");
  qu->add_option("--prefix-file", qu_opt.prefix_file, "file containing the code prefix");
  qu->add_flag("--stdin", qu_opt.use_stdin, "read the code prefix from stdin");
  qu->add_option("--k", qu_opt.k, "returned training examples");
  qu->add_option("--beam", qu_opt.beam, "beam width");
  qu->add_option("--max-prefix-tokens", qu_opt.max_prefix_tokens, "prefix truncation");
  qu->add_flag("--json", qu_opt.json, "machine-readable output");
  qu->callback([&] {
    std::string text;
    if (qu_opt.use_stdin) {
      std::ostringstream ss;
      ss << std::cin.rdbuf();
      text = ss.str();
    } else if (!qu_opt.prefix_file.empty()) {
      std::ifstream in(qu_opt.prefix_file, std::ios::binary);
      if (!in) fail(ErrorCode::IoError, "cannot open " + qu_opt.prefix_file);
      std::ostringstream ss;
      ss << in.rdbuf();
      text = ss.str();
    } else {
      fail(ErrorCode::FormatError, "query needs --prefix-file or --stdin");
    }

    const Vocab vocab = load_vocab(qu_opt.vocab);
    const Weights weights = load_weights(qu_opt.weights);
    const NeuronSelection selection = load_selection(qu_opt.selection);
    const FingerprintIndex index = FingerprintIndex::load(qu_opt.index);

    TokenSeq prefix = tail_tokens(encode(vocab, text),
                                  static_cast<std::size_t>(qu_opt.max_prefix_tokens));
    if (prefix.empty()) fail(ErrorCode::EmptyPrefix, "query prefix is empty after tokenization");

    const TokenSeq line = generate_line(weights, prefix, qu_opt.beam);
    const std::string line_text = decode(vocab, line);
    const Fingerprint fingerprint = extract_fingerprint(weights, selection, prefix);
    const auto hits = index.query(selection.selection_hash, fingerprint, qu_opt.k);

    if (qu_opt.json) {
      nlohmann::json results = nlohmann::json::array();
      for (std::size_t r = 0; r < hits.size(); ++r) {
        results.push_back({{"rank", r + 1},
                           {"pair_id", hits[r].pair_id},
                           {"example_id", hits[r].example_id},
                           {"distance", hits[r].distance},
                           {"snippet", hits[r].snippet},
                           {"source", hits[r].source}});
      }
      std::cout << nlohmann::json{{"generated_line", line_text}, {"results", results}}.dump(2)
                << "\n";
    } else {
      std::cout << "generated> " << line_text << "\n\nrelevant training examples:\n";
      for (std::size_t r = 0; r < hits.size(); ++r) {
        std::cout << "  #" << (r + 1) << "  pair " << hits[r].pair_id << "  distance "
                  << hits[r].distance << "\n      source: " << hits[r].source << "\n";
        std::istringstream snippet(hits[r].snippet);
        std::string snippet_line;
        while (std::getline(snippet, snippet_line)) {
          std::cout << "      | " << snippet_line << "\n";
        }
      }
    }
  });

  // ---- recitations ----
  auto* re = app.add_subcommand("recitations", "mine ground-truth recitation cases");
  struct {
    std::string corpus = "corpus.jsonl";
    std::string vocab = "vocab.json";
    std::string weights = "weights.bin";
    std::string out = "cases.jsonl";
    std::size_t limit = 300;
    std::uint64_t seed = 0;
    std::int32_t beam = 5;
    bool rare_only = false;
    std::int32_t context_tokens = 224;
    std::int32_t max_prefix_tokens = 224;
  } re_opt;
  re->add_option("--corpus", re_opt.corpus, "corpus JSONL path");
  re->add_option("--vocab", re_opt.vocab, "vocab path");
  re->add_option("--weights", re_opt.weights, "weights path");
  re->add_option("--out", re_opt.out, "cases output path");
  re->add_option("--limit", re_opt.limit, "test prefixes to sample (0 = all)");
  re->add_option("--seed", re_opt.seed, "sampling seed");
  re->add_option("--beam", re_opt.beam, "beam width for next-line generation");
  re->add_flag("--rare-only", re_opt.rare_only,
               "sample only prefixes whose corpus target line is rare");
  re->add_option("--context-tokens", re_opt.context_tokens, "test prefix truncation");
  re->add_option("--max-prefix-tokens", re_opt.max_prefix_tokens, "pairing prefix truncation");
  re->callback([&] {
    const auto corpus = load_corpus(re_opt.corpus);
    const Vocab vocab = load_vocab(re_opt.vocab);
    const Weights weights = load_weights(re_opt.weights);
    const auto pairs = pairs_for_corpus(corpus, vocab, re_opt.max_prefix_tokens);
    const TrainingLineSet set = build_training_line_set(corpus, pairs);

    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      if (re_opt.rare_only) {
        const auto it = set.lines.find(pairs[i].target_line);
        if (it == set.lines.end() || it->second.occurrences >= kRecitationMaxOccurrences) continue;
      }
      candidates.push_back(i);
    }
    if (re_opt.limit > 0 && re_opt.limit < candidates.size()) {
      std::mt19937_64 rng(re_opt.seed);
      fisher_yates_shuffle(candidates, rng);
      candidates.resize(re_opt.limit);
      std::sort(candidates.begin(), candidates.end());
    }

    std::vector<TokenSeq> prefixes;
    prefixes.reserve(candidates.size());
    for (std::size_t i : candidates) {
      prefixes.push_back(tail_tokens(pairs[i].prefix, static_cast<std::size_t>(re_opt.context_tokens)));
    }
    const auto cases = mine_recitations(weights, vocab, prefixes, set, re_opt.beam);
    save_cases(cases, vocab, re_opt.out);
    std::cout << "wrote " << re_opt.out << " (" << cases.size() << " cases from "
              << prefixes.size() << " prefixes)\n";
  });

  // ---- evaluate ----
  auto* ev = app.add_subcommand("evaluate", "score retrieval accuracy against mined recitations");
  struct {
    std::string cases = "cases.jsonl";
    std::string index = "index.bin";
    std::string selection = "selection.json";
    std::string weights = "weights.bin";
    std::string ks = "1,5,10";
    std::string json_out;
  } ev_opt;
  ev->add_option("--cases", ev_opt.cases, "cases path");
  ev->add_option("--index", ev_opt.index, "index path");
  ev->add_option("--selection", ev_opt.selection, "selection path");
  ev->add_option("--weights", ev_opt.weights, "weights path");
  ev->add_option("--ks", ev_opt.ks, "comma-separated k values");
  ev->add_option("--json-out", ev_opt.json_out, "write the report as JSON");
  ev->callback([&] {
    const auto cases = load_cases(ev_opt.cases);
    const FingerprintIndex index = FingerprintIndex::load(ev_opt.index);
    const NeuronSelection selection = load_selection(ev_opt.selection);
    const Weights weights = load_weights(ev_opt.weights);
    const AccReport report = top_k_accuracy(cases, index, weights, selection, parse_ks(ev_opt.ks));
    std::cout << "strategy " << report.strategy << ", " << report.case_count << " cases\n";
    for (const auto& [k, acc] : report.accuracy) {
      std::printf("  Acc@%-3d %.2f%%\n", k, acc * 100.0);
    }
    if (!ev_opt.json_out.empty()) write_json_file(acc_report_json(report), ev_opt.json_out);
  });

  // ---- compare ----
  auto* cm = app.add_subcommand("compare", "compare neuron-selection strategies");
  struct {
    std::string corpus = "corpus.jsonl";
    std::string cases = "cases.jsonl";
    std::string vocab = "vocab.json";
    std::string weights = "weights.bin";
    std::string strategies = "high_variance,random,maximum,minimum,ffn_variance";
    std::string seeds = "1,2,3";
    std::int32_t f = 100;
    std::string ks = "1,5,10";
    std::size_t profile_limit = 2000;
    std::int32_t max_prefix_tokens = 224;
    std::string json_out;
  } cm_opt;
  cm->add_option("--corpus", cm_opt.corpus, "corpus JSONL path");
  cm->add_option("--cases", cm_opt.cases, "cases path");
  cm->add_option("--vocab", cm_opt.vocab, "vocab path");
  cm->add_option("--weights", cm_opt.weights, "weights path");
  cm->add_option("--strategies", cm_opt.strategies, "comma-separated strategy names");
  cm->add_option("--seeds", cm_opt.seeds, "selection seeds for the random strategy");
  cm->add_option("--f", cm_opt.f, "fingerprint size");
  cm->add_option("--ks", cm_opt.ks, "comma-separated k values");
  cm->add_option("--profile-limit", cm_opt.profile_limit, "profiling prefix cap (0 = all)");
  cm->add_option("--max-prefix-tokens", cm_opt.max_prefix_tokens, "prefix truncation");
  cm->add_option("--json-out", cm_opt.json_out, "write the table as JSON");
  cm->callback([&] {
    const auto corpus = load_corpus(cm_opt.corpus);
    const auto cases = load_cases(cm_opt.cases);
    const Vocab vocab = load_vocab(cm_opt.vocab);
    const Weights weights = load_weights(cm_opt.weights);
    const auto pairs = pairs_for_corpus(corpus, vocab, cm_opt.max_prefix_tokens);

    std::vector<Strategy> strategies;
    std::stringstream ss(cm_opt.strategies);
    std::string name;
    while (std::getline(ss, name, ',')) {
      const auto s = strategy_from_name(name);
      if (!s) fail(ErrorCode::FormatError, "unknown strategy '" + name + "'");
      strategies.push_back(*s);
    }

    const StrategyTable table =
        compare_strategies(pairs, corpus, cases, weights, strategies, cm_opt.f,
                           parse_seeds(cm_opt.seeds), parse_ks(cm_opt.ks), cm_opt.profile_limit);
    std::cout << render_strategy_table(table);
    if (!cm_opt.json_out.empty()) {
      nlohmann::json rows = nlohmann::json::array();
      for (const StrategyRow& row : table.rows) {
        nlohmann::json accs = nlohmann::json::array();
        for (const auto& [k, acc] : row.mean_acc) {
          accs.push_back({{"k", k},
                          {"mean", acc},
                          {"min", row.min_acc.at(k)},
                          {"max", row.max_acc.at(k)}});
        }
        rows.push_back({{"label", row.label}, {"seed_count", row.seed_count}, {"accuracy", accs}});
      }
      write_json_file({{"case_count", table.case_count}, {"rows", rows}}, cm_opt.json_out);
    }
  });

  // ---- bench ----
  auto* be = app.add_subcommand("bench", "benchmark retrieval vs generation latency");
  struct {
    std::string corpus = "corpus.jsonl";
    std::string vocab = "vocab.json";
    std::string weights = "weights.bin";
    std::string selection = "selection.json";
    std::string index = "index.bin";
    std::int32_t warmup = 5, iters = 30, beam = 10;
    std::size_t k = 10;
    std::uint64_t seed = 0;
    std::int32_t max_prefix_tokens = 224;
    std::string json_out;
  } be_opt;
  be->add_option("--corpus", be_opt.corpus, "corpus JSONL path");
  be->add_option("--vocab", be_opt.vocab, "vocab path");
  be->add_option("--weights", be_opt.weights, "weights path");
  be->add_option("--selection", be_opt.selection, "selection path");
  be->add_option("--index", be_opt.index, "index path");
  be->add_option("--warmup", be_opt.warmup, "warmup iterations");
  be->add_option("--iters", be_opt.iters, "measured iterations");
  be->add_option("--beam", be_opt.beam, "generation beam width");
  be->add_option("--k", be_opt.k, "retrieval count");
  be->add_option("--seed", be_opt.seed, "query sampling seed");
  be->add_option("--max-prefix-tokens", be_opt.max_prefix_tokens, "prefix truncation");
  be->add_option("--json-out", be_opt.json_out, "write the report as JSON");
  be->callback([&] {
    const auto corpus = load_corpus(be_opt.corpus);
    const Vocab vocab = load_vocab(be_opt.vocab);
    const Weights weights = load_weights(be_opt.weights);
    const NeuronSelection selection = load_selection(be_opt.selection);
    const FingerprintIndex index = FingerprintIndex::load(be_opt.index);

    auto pairs = pairs_for_corpus(corpus, vocab, be_opt.max_prefix_tokens);
    std::mt19937_64 rng(be_opt.seed);
    fisher_yates_shuffle(pairs, rng);
    const std::size_t want = static_cast<std::size_t>(be_opt.warmup + be_opt.iters);
    std::vector<TokenSeq> queries;
    for (std::size_t i = 0; i < pairs.size() && i < want; ++i) queries.push_back(pairs[i].prefix);

    const LatencyReport report = bench_latency(weights, selection, index, queries, be_opt.warmup,
                                               be_opt.iters, be_opt.beam, be_opt.k);
    std::printf("records %llu  F %u  iters %d\n", static_cast<unsigned long long>(report.record_count),
                report.fingerprint_size, report.iterations);
    std::printf("retrieval  mean %.3f ms  median %.3f ms  p95 %.3f ms\n", report.retrieval_mean_ms,
                report.retrieval_median_ms, report.retrieval_p95_ms);
    std::printf("generation mean %.3f ms  (%.1fx retrieval)\n", report.generation_mean_ms,
                report.generation_over_retrieval);
    std::printf("hardware: %s\n", report.hardware.c_str());
    if (!be_opt.json_out.empty()) {
      write_json_file({{"retrieval_mean_ms", report.retrieval_mean_ms},
                       {"retrieval_median_ms", report.retrieval_median_ms},
                       {"retrieval_p95_ms", report.retrieval_p95_ms},
                       {"generation_mean_ms", report.generation_mean_ms},
                       {"generation_over_retrieval", report.generation_over_retrieval},
                       {"record_count", report.record_count},
                       {"fingerprint_size", report.fingerprint_size},
                       {"iterations", report.iterations},
                       {"hardware", report.hardware}},
                      be_opt.json_out);
    }
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);  // help text, exit 0
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    std::cerr << app.help() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace provgen::cli
