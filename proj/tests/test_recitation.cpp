#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <random>
#include <string>

#include "provgen/error.hpp"
#include "provgen/model.hpp"
#include "provgen/recitation.hpp"
#include "provgen/tokenizer.hpp"

using namespace provgen;

namespace {

// Full DP-table Levenshtein, independent of the two-row implementation.
std::size_t dp_table_distance(const std::u32string& a, const std::u32string& b) {
  std::vector<std::vector<std::size_t>> d(a.size() + 1, std::vector<std::size_t>(b.size() + 1));
  for (std::size_t i = 0; i <= a.size(); ++i) d[i][0] = i;
  for (std::size_t j = 0; j <= b.size(); ++j) d[0][j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1,
                          d[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    }
  }
  return d[a.size()][b.size()];
}

std::string to_utf8(const std::u32string& s) {
  std::string out;
  for (char32_t cp : s) {
    if (cp < 0x80) {
      out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
      out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
      out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
  }
  return out;
}

std::u32string random_cps(std::mt19937_64& rng, std::size_t max_len) {
  static const std::u32string alphabet = U"abcdefg ()=+,churchéα中";
  std::u32string s;
  const std::size_t len = rng() % (max_len + 1);
  for (std::size_t i = 0; i < len; ++i) s.push_back(alphabet[rng() % alphabet.size()]);
  return s;
}

}  // namespace

TEST_CASE("edit distance basics") {
  CHECK(edit_distance("", "") == 0);
  CHECK(edit_distance("same", "same") == 0);
  CHECK(edit_distance("", "abc") == 3);
  CHECK(edit_distance("abc", "") == 3);
  CHECK(edit_distance("kitten", "sitting") == 3);
  CHECK(edit_distance("return 0", "return 1") == 1);
}

TEST_CASE("edit distance counts unicode scalar values, not bytes") {
  CHECK(edit_distance("café", "cafe") == 1);
  CHECK(edit_distance("中文", "中") == 1);
}

TEST_CASE("edit distance matches the full DP oracle on random pairs") {
  std::mt19937_64 rng(7);
  for (int it = 0; it < 1000; ++it) {
    const std::u32string a = random_cps(rng, 40), b = random_cps(rng, 40);
    CHECK(edit_distance(to_utf8(a), to_utf8(b)) == dp_table_distance(a, b));
  }
}

TEST_CASE("edit distance is a metric on random triples") {
  std::mt19937_64 rng(11);
  for (int it = 0; it < 1000; ++it) {
    const std::string a = to_utf8(random_cps(rng, 24));
    const std::string b = to_utf8(random_cps(rng, 24));
    const std::string c = to_utf8(random_cps(rng, 24));
    const std::size_t ab = edit_distance(a, b);
    const std::size_t ba = edit_distance(b, a);
    const std::size_t ac = edit_distance(a, c);
    const std::size_t bc = edit_distance(b, c);
    CHECK(ab == ba);
    CHECK(edit_distance(a, a) == 0);
    CHECK(ac <= ab + bc);
  }
}

TEST_CASE("normalize_line strips and collapses whitespace") {
  CHECK(normalize_line("  a  =\t 1  ") == "a = 1");
  CHECK(normalize_line("\t\t") == "");
  CHECK(normalize_line("x") == "x");
  CHECK(normalize_line("a        b") == "a b");
}

TEST_CASE("nearest_training_line basics") {
  TrainingLineSet set;
  set.lines["return 0"] = {4, {10}};
  set.lines["return 1"] = {1, {11}};

  const NearestLine exact = nearest_training_line("  return   0 ", set);
  CHECK(exact.line == "return 0");
  CHECK(exact.distance == 0);
  CHECK(exact.occurrences == 4);

  const NearestLine near = nearest_training_line("return 2", set);
  CHECK(near.distance == 1);
  CHECK(near.line == "return 0");  // tie with "return 1" broken lexicographically

  try {
    nearest_training_line("x", TrainingLineSet{});
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptyTrainingSet);
  }
}

TEST_CASE("pruned nearest-line search equals the unpruned scan") {
  std::mt19937_64 rng(13);
  TrainingLineSet set;
  std::vector<std::string> lines;
  for (int i = 0; i < 200; ++i) {
    const std::string line = to_utf8(random_cps(rng, 30));
    if (normalize_line(line).empty()) continue;
    set.lines[normalize_line(line)] = {1 + rng() % 5, {static_cast<std::uint64_t>(i)}};
  }
  for (const auto& [line, info] : set.lines) lines.push_back(line);

  for (int q = 0; q < 50; ++q) {
    const std::string query = normalize_line(to_utf8(random_cps(rng, 30)));
    // Unpruned oracle over the same normalized lines, lexicographic ties.
    std::string best_line;
    std::size_t best = SIZE_MAX;
    for (const auto& line : lines) {
      const std::size_t d = edit_distance(query, line);
      if (d < best) {
        best = d;
        best_line = line;
      }
    }
    const NearestLine got = nearest_training_line(query, set);
    CHECK(got.distance == best);
    CHECK(got.line == best_line);
  }
}

TEST_CASE("training line set counts occurrences over the whole corpus") {
  std::vector<CorpusFile> corpus;
  corpus.push_back({0, "a", "x = 1\ny = 2\nx = 1\n"});
  corpus.push_back({1, "b", "x = 1\nz = 3\n"});
  std::vector<TrainingPair> pairs;
  TrainingPair p;
  p.pair_id = 42;
  p.example_id = 0;
  p.target_line = "x = 1";
  pairs.push_back(p);
  p.pair_id = 43;
  pairs.push_back(p);  // duplicate pair id for the same line: deduplicated? distinct ids kept
  const TrainingLineSet set = build_training_line_set(corpus, pairs);
  REQUIRE(set.lines.count("x = 1") == 1);
  CHECK(set.lines.at("x = 1").occurrences == 3);
  CHECK(set.lines.at("x = 1").pair_ids == std::vector<std::uint64_t>{42, 43});
}

namespace {

// Tiny overfit model for mining tests: two files, each repeating the block
// "u v / w q" so the next line after "u v" is always "w q".
struct MiningFixture {
  Vocab vocab;
  Weights weights;
  std::vector<CorpusFile> corpus;
  std::vector<TrainingPair> pairs;
  TrainingLineSet set;

  MiningFixture() {
    corpus.push_back({0, "toy://0", "u v\nw q\nu v\nw q\nu v\nw q\n"});
    corpus.push_back({1, "toy://1", "h h\nu v\nw q\nh h\nu v\nw q\n"});
    std::vector<std::string> texts;
    for (const auto& f : corpus) texts.push_back(f.text);
    vocab = build_vocab(texts, 16);

    ModelConfig cfg;
    cfg.n_layers = 2;
    cfg.d_model = 16;
    cfg.n_heads = 2;
    cfg.d_ff = 32;
    cfg.vocab_size = static_cast<std::int32_t>(vocab.size());
    cfg.max_pos = 32;

    std::vector<TokenSeq> windows;
    for (const auto& f : corpus) windows.push_back(encode(vocab, f.text));
    TrainHyper hyper;
    hyper.steps = 500;
    hyper.batch = 4;
    hyper.lr = 3e-3;
    hyper.seed = 5;
    weights = train_toy(windows, cfg, hyper);

    for (const auto& f : corpus) {
      for (auto& pr : split_pairs(f, vocab)) pairs.push_back(std::move(pr));
    }
    set = build_training_line_set(corpus, pairs);
  }
};

const MiningFixture& fixture() {
  static MiningFixture f;
  return f;
}

}  // namespace

TEST_CASE("mine_recitations keeps exact rare matches with ground truth ids") {
  const auto& f = fixture();
  // Prefix ending right after "u v\n": the trained model must predict "w q".
  const TokenSeq prefix = encode(f.vocab, "u v\nw q\nu v\n");
  const auto cases = mine_recitations(f.weights, f.vocab, {prefix}, f.set, 3);
  REQUIRE(cases.size() == 1);
  CHECK(cases[0].predicted_line == "w q");
  CHECK(cases[0].matched_line == "w q");
  CHECK(cases[0].edit_distance == 0);
  CHECK(cases[0].occurrences == 5);
  CHECK(!cases[0].ground_truth_pair_ids.empty());
  // Every stored case satisfies the type invariant.
  CHECK(cases[0].occurrences < kRecitationMaxOccurrences);
}

TEST_CASE("matches at ten or more occurrences are excluded (strict threshold)") {
  const auto& f = fixture();
  TrainingLineSet inflated = f.set;
  inflated.lines.at("w q").occurrences = 10;
  const TokenSeq prefix = encode(f.vocab, "u v\nw q\nu v\n");
  CHECK(mine_recitations(f.weights, f.vocab, {prefix}, inflated, 3).empty());

  inflated.lines.at("w q").occurrences = 9;
  CHECK(mine_recitations(f.weights, f.vocab, {prefix}, inflated, 3).size() == 1);
}

TEST_CASE("mining output follows prefix order and skips non-reciting prefixes") {
  const auto& f = fixture();
  const TokenSeq reciting = encode(f.vocab, "u v\nw q\nu v\n");
  const TokenSeq boring = encode(f.vocab, "h h\n");  // continuation is not deterministic
  const auto cases = mine_recitations(f.weights, f.vocab, {reciting, boring, reciting}, f.set, 3);
  CHECK(cases.size() >= 2);
  CHECK(cases.front().predicted_line == "w q");
  CHECK(cases.back().predicted_line == "w q");
}

TEST_CASE("cases jsonl round trip") {
  const auto& f = fixture();
  const TokenSeq prefix = encode(f.vocab, "u v\nw q\nu v\n");
  const auto cases = mine_recitations(f.weights, f.vocab, {prefix}, f.set, 3);
  REQUIRE(!cases.empty());

  const auto path = std::filesystem::temp_directory_path() / "provgen_cases_test.jsonl";
  save_cases(cases, f.vocab, path);
  const auto loaded = load_cases(path);
  REQUIRE(loaded.size() == cases.size());
  CHECK(loaded[0].test_prefix == cases[0].test_prefix);
  CHECK(loaded[0].predicted_line == cases[0].predicted_line);
  CHECK(loaded[0].matched_line == cases[0].matched_line);
  CHECK(loaded[0].edit_distance == cases[0].edit_distance);
  CHECK(loaded[0].occurrences == cases[0].occurrences);
  CHECK(loaded[0].ground_truth_pair_ids == cases[0].ground_truth_pair_ids);
  std::filesystem::remove(path);
}
