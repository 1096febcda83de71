#include <algorithm>
#include <numeric>

#include "engine.hpp"
#include "provgen/error.hpp"
#include "provgen/model.hpp"
#include "provgen/parallel.hpp"

namespace provgen {

namespace {

struct Beam {
  TokenSeq gen;
  double score = 0.0;
  bool frozen = false;
};

bool beam_better(const Beam& a, const Beam& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.gen < b.gen;
}

// Shared engine for beam_search and generate_line. Every live beam expands
// with its top-K next tokens; the pool of frozen beams plus expansions keeps
// the top K by (score, lexicographic tokens). A beam freezes on a stop token
// or when the position budget runs out.
Beam beam_run(const Weights& w, const TokenSeq& prefix, std::int32_t beam_width,
              std::int32_t max_len, bool stop_on_newline) {
  detail::validate_input(w, prefix);
  if (beam_width < 1) fail(ErrorCode::FormatError, "beam width must be >= 1");
  if (max_len < 1) fail(ErrorCode::FormatError, "max_len must be >= 1");

  const std::size_t k = static_cast<std::size_t>(beam_width);
  const std::size_t max_seq = static_cast<std::size_t>(w.config.max_pos);
  const int vocab = w.config.vocab_size;
  const std::size_t expand = std::min<std::size_t>(k, static_cast<std::size_t>(vocab));

  auto is_stop = [stop_on_newline](TokenId id) {
    return id == Vocab::kEnd || (stop_on_newline && id == Vocab::kNewline);
  };

  std::vector<Beam> beams{Beam{}};
  std::vector<std::size_t> live;
  std::vector<std::vector<double>> logprobs;

  for (std::int32_t step = 0; step < max_len; ++step) {
    live.clear();
    for (std::size_t i = 0; i < beams.size(); ++i) {
      if (!beams[i].frozen) live.push_back(i);
    }
    if (live.empty()) break;

    logprobs.resize(live.size());
    parallel_for(live.size(), [&](std::size_t lo, std::size_t hi) {
      for (std::size_t i = lo; i < hi; ++i) {
        TokenSeq seq = prefix;
        const Beam& b = beams[live[i]];
        seq.insert(seq.end(), b.gen.begin(), b.gen.end());
        logprobs[i] = forward_last_logprobs(w, seq);
      }
    });

    std::vector<Beam> pool;
    pool.reserve(beams.size() - live.size() + live.size() * expand);
    for (const Beam& b : beams) {
      if (b.frozen) pool.push_back(b);
    }
    std::vector<int> order(vocab);
    for (std::size_t i = 0; i < live.size(); ++i) {
      const Beam& b = beams[live[i]];
      const std::vector<double>& lp = logprobs[i];
      std::iota(order.begin(), order.end(), 0);
      std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(expand),
                        order.end(), [&lp](int x, int y) {
                          if (lp[x] != lp[y]) return lp[x] > lp[y];
                          return x < y;
                        });
      for (std::size_t e = 0; e < expand; ++e) {
        const TokenId tok = static_cast<TokenId>(order[e]);
        Beam next;
        next.gen = b.gen;
        next.gen.push_back(tok);
        next.score = b.score + lp[tok];
        next.frozen = is_stop(tok) || prefix.size() + next.gen.size() >= max_seq;
        pool.push_back(std::move(next));
      }
    }

    std::sort(pool.begin(), pool.end(), beam_better);
    if (pool.size() > k) pool.resize(k);
    beams = std::move(pool);

    bool all_frozen = true;
    for (const Beam& b : beams) all_frozen &= b.frozen;
    if (all_frozen) break;
  }

  return beams.front();  // kept sorted by (score, lexicographic)
}

}  // namespace

BeamResult beam_search(const Weights& weights, const TokenSeq& prefix, std::int32_t beam_width,
                       std::int32_t max_len) {
  Beam best = beam_run(weights, prefix, beam_width, max_len, /*stop_on_newline=*/false);
  return BeamResult{std::move(best.gen), best.score};
}

TokenSeq generate_line(const Weights& weights, const TokenSeq& prefix, std::int32_t beam_width,
                       std::int32_t max_len) {
  Beam best = beam_run(weights, prefix, beam_width, max_len, /*stop_on_newline=*/true);
  TokenSeq line;
  for (TokenId id : best.gen) {
    if (id == Vocab::kEnd || id == Vocab::kNewline) break;
    line.push_back(id);
  }
  return line;
}

}  // namespace provgen
