#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "provgen/tokenizer.hpp"

namespace provgen {

struct CorpusFile {
  std::uint64_t example_id = 0;
  std::string source;
  std::string text;
};

// One (prefix, target-line) unit per eligible line boundary. line_index is
// the 0-based index of the target line within its file; pair_id encodes
// (example_id, line_index) injectively for files under 2^20 lines.
struct TrainingPair {
  std::uint64_t pair_id = 0;
  std::uint64_t example_id = 0;
  std::uint32_t line_index = 0;
  TokenSeq prefix;
  std::string target_line;  // normalized
};

constexpr std::uint64_t kPairLineBits = 20;

inline std::uint64_t make_pair_id(std::uint64_t example_id, std::uint64_t line_index) {
  return example_id * (1ULL << kPairLineBits) + line_index;
}

std::vector<std::string> split_lines(const std::string& text);

std::vector<TrainingPair> split_pairs(const CorpusFile& file, const Vocab& vocab,
                                      std::int32_t min_prefix_lines = 2,
                                      std::int32_t max_prefix_tokens = 224);

// Target line plus up to 3 preceding lines, newline-joined.
std::string pair_snippet(const CorpusFile& file, std::uint32_t line_index);

void save_corpus(const std::vector<CorpusFile>& corpus, const std::filesystem::path& path);
std::vector<CorpusFile> load_corpus(const std::filesystem::path& path);

}  // namespace provgen
