#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "provgen/error.hpp"
#include "provgen/model.hpp"

using namespace provgen;

namespace {

ModelConfig grad_config() {
  ModelConfig cfg;
  cfg.n_layers = 2;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  cfg.d_ff = 16;
  cfg.vocab_size = 12;
  cfg.max_pos = 16;
  return cfg;
}

std::vector<TokenSeq> grad_batch(std::int32_t vocab) {
  std::mt19937_64 rng(42);
  std::vector<TokenSeq> batch;
  for (std::size_t len : {7, 5}) {
    TokenSeq seq(len);
    for (auto& id : seq) id = static_cast<TokenId>(rng() % vocab);
    batch.push_back(std::move(seq));
  }
  return batch;
}

// Central finite differences against the actually-realized float
// perturbations; pass/fail by |ga - gf| <= atol + rtol * max(|ga|, |gf|).
// The absolute floor absorbs the O(eps^2) truncation of the FD reference
// itself, which dominates wherever the true gradient is near zero.
struct GradCheckResult {
  double max_rel = 0.0;
  std::size_t worst_param = 0;
  bool ok = true;
};

GradCheckResult finite_difference_check(Weights& w, const std::vector<TokenSeq>& batch, float eps,
                                        double rtol, double atol) {
  const LossGrads analytic = loss_and_grads(w, batch);
  GradCheckResult result;
  for (std::size_t i = 0; i < w.data.size(); ++i) {
    const float orig = w.data[i];
    w.data[i] = orig + eps;
    const float w_plus = w.data[i];
    const double loss_plus = loss_and_grads(w, batch).loss;
    w.data[i] = orig - eps;
    const float w_minus = w.data[i];
    const double loss_minus = loss_and_grads(w, batch).loss;
    w.data[i] = orig;

    const double fd = (loss_plus - loss_minus) / (static_cast<double>(w_plus) - w_minus);
    const double ga = static_cast<double>(analytic.grads[i]);
    const double err = std::abs(ga - fd);
    const double bound = atol + rtol * std::max(std::abs(ga), std::abs(fd));
    const double rel = err / std::max(std::abs(ga) + std::abs(fd), 1e-8);
    if (err > bound) {
      result.ok = false;
      if (rel > result.max_rel) {
        result.max_rel = rel;
        result.worst_param = i;
      }
    }
  }
  return result;
}

}  // namespace

TEST_CASE("zero weights give loss = ln(vocab_size)") {
  const ModelConfig cfg = grad_config();
  Weights w;
  w.config = cfg;
  w.layout = make_weights_layout(cfg);
  w.data.assign(w.layout.total, 0.0f);
  const LossGrads lg = loss_and_grads(w, grad_batch(cfg.vocab_size));
  CHECK(lg.loss == doctest::Approx(std::log(static_cast<double>(cfg.vocab_size))).epsilon(1e-12));
}

TEST_CASE("analytic gradients match central finite differences (eps=1e-3, rel 1e-3)") {
  Weights w = init_weights(grad_config(), 7);
  const auto batch = grad_batch(w.config.vocab_size);
  const GradCheckResult r = finite_difference_check(w, batch, 1e-3f, 1e-3, 2e-4);
  INFO("worst param ", r.worst_param, " rel err ", r.max_rel);
  CHECK(r.ok);
}

TEST_CASE("gradient check holds for a second random initialization") {
  Weights w = init_weights(grad_config(), 2024);
  const auto batch = grad_batch(w.config.vocab_size);
  const GradCheckResult r = finite_difference_check(w, batch, 1e-3f, 1e-3, 2e-4);
  INFO("worst param ", r.worst_param, " rel err ", r.max_rel);
  CHECK(r.ok);
}

TEST_CASE("duplicating the batch leaves loss and grads unchanged") {
  const Weights w = init_weights(grad_config(), 11);
  const auto batch = grad_batch(w.config.vocab_size);
  std::vector<TokenSeq> doubled = batch;
  doubled.insert(doubled.end(), batch.begin(), batch.end());

  const LossGrads a = loss_and_grads(w, batch);
  const LossGrads b = loss_and_grads(w, doubled);
  CHECK(a.loss == doctest::Approx(b.loss).epsilon(1e-12));
  double max_diff = 0.0;
  for (std::size_t i = 0; i < a.grads.size(); ++i) {
    max_diff = std::max(max_diff,
                        static_cast<double>(std::abs(a.grads[i] - b.grads[i])) /
                            std::max(1.0, static_cast<double>(std::abs(a.grads[i]))));
  }
  CHECK(max_diff < 2e-7);
}

TEST_CASE("short sequences are rejected") {
  const Weights w = init_weights(grad_config(), 1);
  try {
    loss_and_grads(w, {TokenSeq{3}});
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SequenceTooShort);
  }
}
