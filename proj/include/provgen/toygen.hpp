#pragma once

#include <cstdint>
#include <vector>

#include "provgen/pairing.hpp"

namespace provgen {

// Deterministic template-generated corpus: files are concatenations of small
// multi-line stanzas whose continuation lines are a function of their first
// line, so every common line recurs across many files. `planted` extra rare
// stanzas (a trigger line followed by a unique payload line) each land in
// exactly two files.
struct ToyCorpusParams {
  std::int32_t files = 200;
  std::int32_t min_lines = 50;
  std::int32_t max_lines = 150;
  std::int32_t block_types = 120;
  std::int32_t planted = 30;
  std::uint64_t seed = 1;
};

std::vector<CorpusFile> generate_toy_corpus(const ToyCorpusParams& params);

// The payload lines of the planted stanzas (normalized), in plant order.
std::vector<std::string> planted_lines(const ToyCorpusParams& params);

}  // namespace provgen
