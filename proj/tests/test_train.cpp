#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "provgen/error.hpp"
#include "provgen/model.hpp"
#include "provgen/tokenizer.hpp"

using namespace provgen;

namespace {

ModelConfig small_config(std::int32_t vocab, std::int32_t layers = 1) {
  ModelConfig cfg;
  cfg.n_layers = layers;
  cfg.d_model = 16;
  cfg.n_heads = 2;
  cfg.d_ff = 32;
  cfg.vocab_size = vocab;
  cfg.max_pos = 32;
  return cfg;
}

}  // namespace

TEST_CASE("steps=0 returns the seeded initialization unchanged") {
  const std::vector<TokenSeq> corpus{{4, 5, 4, 5}};
  TrainHyper hyper;
  hyper.steps = 0;
  hyper.seed = 77;
  const Weights trained = train_toy(corpus, small_config(8), hyper);
  const Weights init = init_weights(small_config(8), 77);
  CHECK(trained.data == init.data);
}

TEST_CASE("same seed twice gives bit-identical weights") {
  const std::vector<TokenSeq> corpus{{4, 5, 6, 4, 5, 6}, {5, 6, 4, 5}};
  TrainHyper hyper;
  hyper.steps = 25;
  hyper.batch = 4;
  hyper.lr = 1e-3;
  hyper.seed = 9;
  const Weights a = train_toy(corpus, small_config(8), hyper);
  const Weights b = train_toy(corpus, small_config(8), hyper);
  CHECK(a.data == b.data);
}

TEST_CASE("training reduces the loss on a toy corpus") {
  // 50 short alternating-pattern files.
  std::vector<TokenSeq> corpus;
  for (int f = 0; f < 50; ++f) {
    TokenSeq seq;
    const TokenId a = 4 + static_cast<TokenId>(f % 3);
    const TokenId b = 7 + static_cast<TokenId>(f % 2);
    for (int i = 0; i < 6; ++i) {
      seq.push_back(a);
      seq.push_back(b);
    }
    corpus.push_back(std::move(seq));
  }

  double first_loss = 0.0, last_loss = 0.0;
  TrainHyper hyper;
  hyper.steps = 2000;
  hyper.batch = 8;
  hyper.lr = 1e-3;
  hyper.seed = 3;
  train_toy(corpus, small_config(10), hyper, [&](std::int64_t step, double loss) {
    if (step == 1) first_loss = loss;
    last_loss = loss;
  });
  INFO("loss ", first_loss, " -> ", last_loss);
  CHECK(first_loss > 0.0);
  CHECK(last_loss < first_loss);
}

TEST_CASE("an overfit 1-layer model completes the alternating pattern") {
  // "a b a b ..." forces argmax(logits | a) = b once the loss is near zero.
  std::vector<TokenSeq> corpus;
  TokenSeq pattern;
  for (int i = 0; i < 12; ++i) {
    pattern.push_back(4);
    pattern.push_back(5);
  }
  corpus.push_back(pattern);

  TrainHyper hyper;
  hyper.steps = 400;
  hyper.batch = 4;
  hyper.lr = 3e-3;
  hyper.seed = 1;
  double final_loss = 1e9;
  const Weights w = train_toy(corpus, small_config(8), hyper,
                              [&](std::int64_t, double loss) { final_loss = loss; });
  CHECK(final_loss < 0.05);

  const ForwardResult r = forward(w, {4});
  TokenId argmax = 0;
  for (TokenId v = 1; v < static_cast<TokenId>(w.config.vocab_size); ++v) {
    if (r.logit(0, v) > r.logit(0, argmax)) argmax = v;
  }
  CHECK(argmax == 5);
}

TEST_CASE("empty corpus and short sequences are rejected") {
  try {
    train_toy({}, small_config(8), TrainHyper{});
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::CorpusEmpty);
  }
  try {
    train_toy({TokenSeq{1}}, small_config(8), TrainHyper{});
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SequenceTooShort);
  }
}

TEST_CASE("planted next-line recitation after overfitting") {
  // Vocabulary indices: reserved 0..3, then identifiers 4..11. The corpus is
  // two "files" where line "8 9" is always followed by "10 11".
  std::vector<TokenSeq> corpus;
  for (int f = 0; f < 2; ++f) {
    TokenSeq seq;
    const TokenId filler = 4 + static_cast<TokenId>(f);
    for (int r = 0; r < 2; ++r) {
      seq.push_back(filler);
      seq.push_back(Vocab::kNewline);
      seq.push_back(8);
      seq.push_back(9);
      seq.push_back(Vocab::kNewline);
      seq.push_back(10);
      seq.push_back(11);
      seq.push_back(Vocab::kNewline);
    }
    corpus.push_back(std::move(seq));
  }

  TrainHyper hyper;
  hyper.steps = 600;
  hyper.batch = 4;
  hyper.lr = 3e-3;
  hyper.seed = 2;
  const Weights w = train_toy(corpus, small_config(12, 2), hyper);

  const TokenSeq prefix{4, Vocab::kNewline, 8, 9, Vocab::kNewline};
  const TokenSeq line = generate_line(w, prefix, 3);
  CHECK(line == TokenSeq{10, 11});
}
