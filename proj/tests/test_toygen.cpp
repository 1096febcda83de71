#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>
#include <set>

#include "provgen/pairing.hpp"
#include "provgen/recitation.hpp"
#include "provgen/tokenizer.hpp"
#include "provgen/toygen.hpp"

using namespace provgen;

namespace {

std::map<std::string, std::uint64_t> line_occurrences(const std::vector<CorpusFile>& corpus) {
  std::map<std::string, std::uint64_t> counts;
  for (const auto& file : corpus) {
    for (const auto& raw : split_lines(file.text)) {
      const std::string norm = normalize_line(raw);
      if (!norm.empty()) ++counts[norm];
    }
  }
  return counts;
}

}  // namespace

TEST_CASE("generator is deterministic per seed") {
  const ToyCorpusParams params{.files = 20, .min_lines = 20, .max_lines = 40, .seed = 3};
  const auto a = generate_toy_corpus(params);
  const auto b = generate_toy_corpus(params);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].text == b[i].text);

  ToyCorpusParams other = params;
  other.seed = 4;
  const auto c = generate_toy_corpus(other);
  bool any_diff = false;
  for (std::size_t i = 0; i < a.size(); ++i) any_diff |= a[i].text != c[i].text;
  CHECK(any_diff);
}

TEST_CASE("default corpus shape: 200 files of 50..150 lines") {
  const ToyCorpusParams params{.seed = 9};
  const auto corpus = generate_toy_corpus(params);
  CHECK(corpus.size() == 200);
  for (const auto& file : corpus) {
    const auto lines = split_lines(file.text);
    CHECK(lines.size() >= 50);
    // Block granularity can overshoot the target by at most one block.
    CHECK(lines.size() <= 150 + 3);
    CHECK(file.text.back() == '\n');
  }
  std::set<std::string> sources;
  for (const auto& file : corpus) sources.insert(file.source);
  CHECK(sources.size() == corpus.size());
}

TEST_CASE("planted lines appear in exactly two files with occurrence 2") {
  const ToyCorpusParams params{.seed = 31};
  const auto corpus = generate_toy_corpus(params);
  const auto counts = line_occurrences(corpus);
  const auto plants = planted_lines(params);
  REQUIRE(plants.size() == 30);

  for (const auto& line : plants) {
    REQUIRE(counts.count(line) == 1);
    CHECK(counts.at(line) == 2);
    std::size_t files_with = 0;
    for (const auto& file : corpus) {
      if (file.text.find(line) != std::string::npos) ++files_with;
    }
    CHECK(files_with == 2);
  }
}

TEST_CASE("planted lines are reachable pair targets") {
  const ToyCorpusParams params{.seed = 17};
  const auto corpus = generate_toy_corpus(params);
  std::vector<std::string> texts;
  for (const auto& f : corpus) texts.push_back(f.text);
  const Vocab vocab = build_vocab(texts, 1024);

  std::map<std::string, int> target_pairs;
  for (const auto& file : corpus) {
    for (const auto& p : split_pairs(file, vocab)) ++target_pairs[p.target_line];
  }
  for (const auto& line : planted_lines(params)) {
    REQUIRE(target_pairs.count(line) == 1);
    CHECK(target_pairs.at(line) == 2);
  }
}

TEST_CASE("corpus text encodes without UNK under the default vocab cap") {
  const ToyCorpusParams params{.files = 40, .seed = 23};
  const auto corpus = generate_toy_corpus(params);
  std::vector<std::string> texts;
  for (const auto& f : corpus) texts.push_back(f.text);
  const Vocab vocab = build_vocab(texts, 1024);
  CHECK(vocab.size() <= 1024);
  for (const auto& f : corpus) {
    for (TokenId id : encode(vocab, f.text)) CHECK(id != Vocab::kUnk);
    CHECK(decode(vocab, encode(vocab, f.text)) == f.text);  // canonical spacing round trip
  }
}

TEST_CASE("non-planted lines are overwhelmingly common") {
  const ToyCorpusParams params{.seed = 41};
  const auto corpus = generate_toy_corpus(params);
  const auto counts = line_occurrences(corpus);
  const auto plants = planted_lines(params);
  const std::set<std::string> planted_set(plants.begin(), plants.end());

  std::size_t rare_other = 0, total = 0;
  for (const auto& [line, count] : counts) {
    ++total;
    if (count < 10 && !planted_set.count(line) && line.rfind("pack", 0) != 0) ++rare_other;
  }
  // Poisson tails may leave a handful of rare copy-combos; everything else
  // recurs across many files.
  CHECK(total > 300);
  CHECK(rare_other <= 8);
}
