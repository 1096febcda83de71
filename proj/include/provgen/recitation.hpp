#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "provgen/model.hpp"
#include "provgen/pairing.hpp"
#include "provgen/tokenizer.hpp"

namespace provgen {

// Levenshtein distance over Unicode scalar values, unit costs.
std::size_t edit_distance(std::string_view a, std::string_view b);

// Strip leading/trailing whitespace, collapse internal space/tab runs to one
// space. Applied to both sides of every line match.
std::string normalize_line(std::string_view line);

struct LineInfo {
  std::uint64_t occurrences = 0;                // over all lines of the whole corpus
  std::vector<std::uint64_t> pair_ids;          // pairs whose target equals the line
};

// Normalized target lines of the training pairs, with corpus-wide occurrence
// counts. std::map keeps keys ordered so the lexicographic tie rule falls
// out of iteration order.
struct TrainingLineSet {
  std::map<std::string, LineInfo> lines;

  bool empty() const { return lines.empty(); }
};

TrainingLineSet build_training_line_set(const std::vector<CorpusFile>& corpus,
                                        const std::vector<TrainingPair>& pairs);

struct NearestLine {
  std::string line;
  std::size_t distance = 0;
  std::uint64_t occurrences = 0;
};

// Training line minimizing edit distance to the (normalized) query, ties
// broken lexicographically. Prunes with the length-difference lower bound.
NearestLine nearest_training_line(std::string_view line, const TrainingLineSet& set);

struct RecitationCase {
  TokenSeq test_prefix;
  std::string predicted_line;
  std::string matched_line;
  std::size_t edit_distance = 0;
  std::uint64_t occurrences = 0;
  std::vector<std::uint64_t> ground_truth_pair_ids;
};

constexpr std::uint64_t kRecitationMaxOccurrences = 10;  // strict: kept iff occurrences < 10

// Generates the next line for every test prefix and keeps exact matches of
// sufficiently rare training lines. Output order follows the prefix order.
std::vector<RecitationCase> mine_recitations(const Weights& weights, const Vocab& vocab,
                                             const std::vector<TokenSeq>& test_prefixes,
                                             const TrainingLineSet& set, std::int32_t beam_width);

void save_cases(const std::vector<RecitationCase>& cases, const Vocab& vocab,
                const std::filesystem::path& path);
std::vector<RecitationCase> load_cases(const std::filesystem::path& path);

}  // namespace provgen
