#include "provgen/toygen.hpp"

#include <random>
#include <set>
#include <string>

#include "provgen/error.hpp"
#include "provgen/recitation.hpp"
#include "provgen/rng.hpp"

namespace provgen {

namespace {

struct Block {
  std::vector<std::string> lines;
};

constexpr std::int32_t kValPool = 40;       // shared identifier pool for copy blocks
constexpr std::int32_t kCommonCombos = 120; // distinct common (a, b) pairs
constexpr std::uint64_t kPackPercent = 30;  // share of copy blocks per file

std::string num(std::uint64_t n) { return std::to_string(n % 17); }

// Statement stanzas: identifiers embed the block id, so lines are distinct
// across types and continuations are deterministic given the first line.
Block make_stanza(std::int32_t b, std::mt19937_64& rng) {
  const char* ops[3] = {"+", "-", "*"};
  const std::string id = std::to_string(b);
  const std::string op = ops[uniform_below(rng, 3)];
  const std::string n1 = num(rng()), n2 = num(rng()), n3 = num(rng());
  Block block;
  switch (b % 6) {
    case 0:
      block.lines = {"def fn" + id + " ( a , b ) :",
                     "r" + id + " = a " + op + " b " + op + " " + n1,
                     "return r" + id};
      break;
    case 1:
      block.lines = {"v" + id + " = load ( src" + id + " , " + n1 + " )",
                     "if v" + id + " > " + n2 + " :",
                     "v" + id + " = v" + id + " " + op + " " + n3};
      break;
    case 2:
      block.lines = {"for i" + id + " in range ( " + n1 + " ) :",
                     "acc" + id + " = acc" + id + " + i" + id,
                     "emit ( acc" + id + " , " + n2 + " )"};
      break;
    case 3:
      block.lines = {"s" + id + " = text" + id + " . strip ( )",
                     "t" + id + " = s" + id + " . lower ( )",
                     "out" + id + " . append ( t" + id + " )"};
      break;
    case 4:
      block.lines = {"x" + id + " = " + n1 + " " + op + " k" + id,
                     "y" + id + " = x" + id + " + " + n2,
                     "store ( y" + id + " , " + n3 + " )"};
      break;
    default:
      block.lines = {"while q" + id + " < " + n1 + " :",
                     "q" + id + " = q" + id + " + " + n2};
      break;
  }
  return block;
}

// Copy blocks: the second line repeats the first line's identifiers, so the
// continuation is predictable for any (a, b) once the rule is learned. The
// planted rare lines are exactly such blocks over pairs that appear nowhere
// else in the corpus.
Block make_pack_block(std::int32_t a, std::int32_t b) {
  const std::string va = "val" + std::to_string(a), vb = "val" + std::to_string(b);
  Block block;
  block.lines = {"pack ( " + va + " , " + vb + " )", "unpack ( " + va + " , " + vb + " )"};
  return block;
}

struct ToyPlan {
  std::vector<Block> stanzas;
  std::vector<Block> common_packs;
  std::vector<Block> planted;
  std::vector<std::vector<std::int32_t>> file_blocks;  // >=0: stanza; <0: ~id common pack
  std::vector<std::vector<std::pair<std::int32_t, std::int32_t>>> file_plants;  // (slot, plant id)
};

ToyPlan make_plan(const ToyCorpusParams& p) {
  if (p.files < 2 || p.block_types < 1 || p.min_lines < 4 || p.max_lines < p.min_lines) {
    fail(ErrorCode::FormatError, "bad toy corpus parameters");
  }
  std::mt19937_64 rng(p.seed);
  ToyPlan plan;
  plan.stanzas.reserve(p.block_types);
  for (std::int32_t b = 0; b < p.block_types; ++b) plan.stanzas.push_back(make_stanza(b, rng));

  // Distinct identifier pairs: the first kCommonCombos recur across files,
  // the next `planted` pairs land in exactly two files each.
  std::set<std::pair<std::int32_t, std::int32_t>> used;
  auto draw_combo = [&]() {
    while (true) {
      const std::int32_t a = static_cast<std::int32_t>(uniform_below(rng, kValPool));
      std::int32_t b = static_cast<std::int32_t>(uniform_below(rng, kValPool - 1));
      if (b >= a) ++b;
      if (used.insert({a, b}).second) return std::make_pair(a, b);
    }
  };
  for (std::int32_t i = 0; i < kCommonCombos; ++i) {
    const auto [a, b] = draw_combo();
    plan.common_packs.push_back(make_pack_block(a, b));
  }
  for (std::int32_t k = 0; k < p.planted; ++k) {
    const auto [a, b] = draw_combo();
    plan.planted.push_back(make_pack_block(a, b));
  }

  plan.file_blocks.resize(p.files);
  plan.file_plants.resize(p.files);
  for (std::int32_t f = 0; f < p.files; ++f) {
    const std::int32_t target =
        p.min_lines + static_cast<std::int32_t>(uniform_below(rng, p.max_lines - p.min_lines + 1));
    std::int32_t lines = 0;
    while (lines < target) {
      if (uniform_below(rng, 100) < kPackPercent) {
        const std::int32_t c = static_cast<std::int32_t>(uniform_below(rng, kCommonCombos));
        plan.file_blocks[f].push_back(~c);
        lines += 2;
      } else {
        const std::int32_t b = static_cast<std::int32_t>(uniform_below(rng, p.block_types));
        plan.file_blocks[f].push_back(b);
        lines += static_cast<std::int32_t>(plan.stanzas[b].lines.size());
      }
    }
  }

  // Each plant goes into two distinct files, after at least one block.
  for (std::int32_t k = 0; k < p.planted; ++k) {
    const std::int32_t fa = static_cast<std::int32_t>(uniform_below(rng, p.files));
    std::int32_t fb = static_cast<std::int32_t>(uniform_below(rng, p.files - 1));
    if (fb >= fa) ++fb;
    for (std::int32_t f : {fa, fb}) {
      const auto n_slots = static_cast<std::int32_t>(plan.file_blocks[f].size());
      const std::int32_t slot = 1 + static_cast<std::int32_t>(uniform_below(rng, n_slots));
      plan.file_plants[f].push_back({slot, k});
    }
  }
  return plan;
}

std::string render_file(const ToyPlan& plan, std::int32_t f) {
  // Plants sorted by slot descending so earlier insertions do not shift
  // later slots.
  auto plants = plan.file_plants[f];
  std::sort(plants.begin(), plants.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second > b.second;
  });

  std::vector<const Block*> blocks;
  blocks.reserve(plan.file_blocks[f].size() + plants.size());
  for (std::int32_t b : plan.file_blocks[f]) {
    blocks.push_back(b >= 0 ? &plan.stanzas[b] : &plan.common_packs[~b]);
  }
  for (const auto& [slot, k] : plants) {
    blocks.insert(blocks.begin() + slot, &plan.planted[k]);
  }

  std::string text;
  for (const Block* block : blocks) {
    for (const std::string& line : block->lines) {
      text += line;
      text.push_back('\n');
    }
  }
  return text;
}

}  // namespace

std::vector<CorpusFile> generate_toy_corpus(const ToyCorpusParams& params) {
  const ToyPlan plan = make_plan(params);
  std::vector<CorpusFile> corpus;
  corpus.reserve(params.files);
  for (std::int32_t f = 0; f < params.files; ++f) {
    CorpusFile file;
    file.example_id = static_cast<std::uint64_t>(f);
    file.source = "toy://corpus/" + std::to_string(params.seed) + "/file" + std::to_string(f) + ".py";
    file.text = render_file(plan, f);
    corpus.push_back(std::move(file));
  }
  return corpus;
}

std::vector<std::string> planted_lines(const ToyCorpusParams& params) {
  const ToyPlan plan = make_plan(params);
  std::vector<std::string> lines;
  lines.reserve(plan.planted.size());
  for (const Block& b : plan.planted) lines.push_back(normalize_line(b.lines.back()));
  return lines;
}

}  // namespace provgen
