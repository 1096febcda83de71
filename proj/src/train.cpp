#include <cmath>
#include <random>

#include "engine.hpp"
#include "provgen/error.hpp"
#include "provgen/model.hpp"
#include "provgen/parallel.hpp"
#include "provgen/rng.hpp"

namespace provgen {

namespace detail {

void run_backward(const Weights& w, std::span<const TokenId> ids, const Activations<double>& acts,
                  const std::vector<double>& dlogits, std::vector<double>& grad) {
  const ModelConfig& cfg = w.config;
  const int T = acts.len;
  const int d = cfg.d_model;
  const int dff = cfg.d_ff;
  const int nh = cfg.n_heads;
  const int dh = cfg.head_dim();
  const int V = cfg.vocab_size;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const std::size_t td = static_cast<std::size_t>(T) * d;

  // Tied output head: logits[t,v] = dot(lnf_out[t,:], wte[v,:]).
  std::vector<double> dhf(td, 0.0);
  {
    const float* wte = w.at(w.layout.wte);
    for (int t = 0; t < T; ++t) {
      const double* dyr = dlogits.data() + static_cast<std::size_t>(t) * V;
      double* dxr = dhf.data() + static_cast<std::size_t>(t) * d;
      for (int v = 0; v < V; ++v) {
        const double a = dyr[v];
        if (a == 0.0) continue;
        const float* we = wte + static_cast<std::size_t>(v) * d;
        for (int c = 0; c < d; ++c) dxr[c] += a * static_cast<double>(we[c]);
      }
    }
    // d wte (head side): dwte[v,c] += sum_t dlogits[t,v] * lnf_out[t,c]
    double* dwte = grad.data() + w.layout.wte;
    for (int t = 0; t < T; ++t) {
      const double* dyr = dlogits.data() + static_cast<std::size_t>(t) * V;
      const double* hr = acts.lnf_out.data() + static_cast<std::size_t>(t) * d;
      for (int v = 0; v < V; ++v) {
        const double a = dyr[v];
        if (a == 0.0) continue;
        double* row = dwte + static_cast<std::size_t>(v) * d;
        for (int c = 0; c < d; ++c) row[c] += a * hr[c];
      }
    }
  }

  std::vector<double> dx(td, 0.0);
  layernorm_backward(dhf.data(), acts.lnf_norm.data(), acts.lnf_rstd.data(), w.at(w.layout.lnf_g),
                     grad.data() + w.layout.lnf_g, grad.data() + w.layout.lnf_b, dx.data(), T, d);

  std::vector<double> dffn_act(static_cast<std::size_t>(T) * dff);
  std::vector<double> dffn_pre(static_cast<std::size_t>(T) * dff);
  std::vector<double> dh2(td), dctx(td), dq(td), dk(td), dv(td), dh1(td);
  std::vector<double> datt_row(T), ds_row(T);

  for (int l = cfg.n_layers - 1; l >= 0; --l) {
    const LayerOffsets& off = w.layout.layers[l];
    const LayerActs<double>& a = acts.layers[l];

    // FFN sublayer: x_ffn = x_attn + gelu(ln2_out*W1+b1)*W2+b2. dx holds
    // d x_ffn; the residual term passes through, the FFN path adds to it.
    matmul_dw(a.ffn_act.data(), dx.data(), grad.data() + off.w2, grad.data() + off.b2, T, dff, d);
    std::fill(dffn_act.begin(), dffn_act.end(), 0.0);
    matmul_dx(dx.data(), w.at(off.w2), dffn_act.data(), T, dff, d);
    for (std::size_t i = 0; i < dffn_pre.size(); ++i) {
      dffn_pre[i] = dffn_act[i] * gelu_grad_scalar(a.ffn_pre[i]);
    }
    matmul_dw(a.ln2_out.data(), dffn_pre.data(), grad.data() + off.w1, grad.data() + off.b1, T, d, dff);
    std::fill(dh2.begin(), dh2.end(), 0.0);
    matmul_dx(dffn_pre.data(), w.at(off.w1), dh2.data(), T, d, dff);
    layernorm_backward(dh2.data(), a.ln2_norm.data(), a.ln2_rstd.data(), w.at(off.ln2_g),
                       grad.data() + off.ln2_g, grad.data() + off.ln2_b, dx.data(), T, d);

    // Attention sublayer. dx now holds d x_attn.
    matmul_dw(a.attctx.data(), dx.data(), grad.data() + off.wo, grad.data() + off.bo, T, d, d);
    std::fill(dctx.begin(), dctx.end(), 0.0);
    matmul_dx(dx.data(), w.at(off.wo), dctx.data(), T, d, d);

    std::fill(dq.begin(), dq.end(), 0.0);
    std::fill(dk.begin(), dk.end(), 0.0);
    std::fill(dv.begin(), dv.end(), 0.0);
    for (int h = 0; h < nh; ++h) {
      const int c0 = h * dh;
      const double* att = a.att.data() + static_cast<std::size_t>(h) * T * T;
      for (int t = 0; t < T; ++t) {
        const double* arow = att + static_cast<std::size_t>(t) * T;
        const double* dctx_t = dctx.data() + static_cast<std::size_t>(t) * d + c0;
        double dot = 0.0;
        for (int u = 0; u <= t; ++u) {
          const double* vu = a.v.data() + static_cast<std::size_t>(u) * d + c0;
          double* dvu = dv.data() + static_cast<std::size_t>(u) * d + c0;
          double acc = 0.0;
          const double p = arow[u];
          for (int c = 0; c < dh; ++c) {
            acc += dctx_t[c] * vu[c];
            dvu[c] += p * dctx_t[c];
          }
          datt_row[u] = acc;
          dot += p * acc;
        }
        double* dq_t = dq.data() + static_cast<std::size_t>(t) * d + c0;
        const double* q_t = a.q.data() + static_cast<std::size_t>(t) * d + c0;
        for (int u = 0; u <= t; ++u) {
          const double ds = arow[u] * (datt_row[u] - dot) * scale;
          const double* ku = a.k.data() + static_cast<std::size_t>(u) * d + c0;
          double* dku = dk.data() + static_cast<std::size_t>(u) * d + c0;
          for (int c = 0; c < dh; ++c) {
            dq_t[c] += ds * ku[c];
            dku[c] += ds * q_t[c];
          }
        }
      }
    }

    matmul_dw(a.ln1_out.data(), dq.data(), grad.data() + off.wq, grad.data() + off.bq, T, d, d);
    matmul_dw(a.ln1_out.data(), dk.data(), grad.data() + off.wk, grad.data() + off.bk, T, d, d);
    matmul_dw(a.ln1_out.data(), dv.data(), grad.data() + off.wv, grad.data() + off.bv, T, d, d);
    std::fill(dh1.begin(), dh1.end(), 0.0);
    matmul_dx(dq.data(), w.at(off.wq), dh1.data(), T, d, d);
    matmul_dx(dk.data(), w.at(off.wk), dh1.data(), T, d, d);
    matmul_dx(dv.data(), w.at(off.wv), dh1.data(), T, d, d);
    layernorm_backward(dh1.data(), a.ln1_norm.data(), a.ln1_rstd.data(), w.at(off.ln1_g),
                       grad.data() + off.ln1_g, grad.data() + off.ln1_b, dx.data(), T, d);
    // dx now holds the gradient w.r.t. this layer's input stream.
  }

  double* dwte = grad.data() + w.layout.wte;
  double* dwpe = grad.data() + w.layout.wpe;
  for (int t = 0; t < T; ++t) {
    const double* dxr = dx.data() + static_cast<std::size_t>(t) * d;
    double* te = dwte + static_cast<std::size_t>(ids[t]) * d;
    double* pe = dwpe + static_cast<std::size_t>(t) * d;
    for (int c = 0; c < d; ++c) {
      te[c] += dxr[c];
      pe[c] += dxr[c];
    }
  }
}

}  // namespace detail

namespace {

struct SampleResult {
  double loss = 0.0;
  std::vector<double> grad;
};

SampleResult sample_loss_grads(const Weights& w, const TokenSeq& seq, double inv_n) {
  const int V = w.config.vocab_size;
  detail::Activations<double> acts;
  detail::run_forward<double>(w, seq, acts, /*logits_last_only=*/false);

  const int T = acts.len;
  std::vector<double> dlogits(static_cast<std::size_t>(T) * V, 0.0);
  double loss = 0.0;
  for (int t = 0; t + 1 < T; ++t) {
    const double* lrow = acts.logits.data() + static_cast<std::size_t>(t) * V;
    const TokenId target = seq[t + 1];
    double mx = lrow[0];
    for (int v = 1; v < V; ++v) mx = std::max(mx, lrow[v]);
    double denom = 0.0;
    for (int v = 0; v < V; ++v) denom += std::exp(lrow[v] - mx);
    const double lse = mx + std::log(denom);
    loss += (lse - lrow[target]) * inv_n;
    double* drow = dlogits.data() + static_cast<std::size_t>(t) * V;
    const double inv_denom = 1.0 / denom;
    for (int v = 0; v < V; ++v) drow[v] = std::exp(lrow[v] - mx) * inv_denom * inv_n;
    drow[target] -= inv_n;
  }

  SampleResult result;
  result.loss = loss;
  result.grad.assign(w.data.size(), 0.0);
  detail::run_backward(w, seq, acts, dlogits, result.grad);
  return result;
}

}  // namespace

LossGrads loss_and_grads(const Weights& w, const std::vector<TokenSeq>& batch) {
  if (batch.empty()) fail(ErrorCode::EmptyInput, "loss_and_grads requires a nonempty batch");
  std::size_t n_positions = 0;
  for (const auto& seq : batch) {
    if (seq.size() < 2) fail(ErrorCode::SequenceTooShort, "training sequences need >= 2 tokens");
    detail::validate_input(w, seq);
    n_positions += seq.size() - 1;
  }
  const double inv_n = 1.0 / static_cast<double>(n_positions);

  // Per-sample gradients folded in sample order: bit-identical results for
  // any thread count.
  std::vector<double> total(w.data.size(), 0.0);
  double loss = 0.0;
  parallel_ordered<SampleResult>(
      batch.size(), batch.size(),
      [&](std::size_t i) { return sample_loss_grads(w, batch[i], inv_n); },
      [&](std::size_t, SampleResult&& r) {
        loss += r.loss;
        for (std::size_t i = 0; i < total.size(); ++i) total[i] += r.grad[i];
      });

  LossGrads out;
  out.loss = loss;
  out.grads.resize(total.size());
  for (std::size_t i = 0; i < total.size(); ++i) out.grads[i] = static_cast<float>(total[i]);
  return out;
}

Weights train_toy(const std::vector<TokenSeq>& corpus, const ModelConfig& config,
                  const TrainHyper& hyper, const TrainLogFn& log) {
  if (corpus.empty()) fail(ErrorCode::CorpusEmpty, "train_toy requires a nonempty corpus");
  config.validate();
  for (const auto& seq : corpus) {
    if (seq.size() < 2) fail(ErrorCode::SequenceTooShort, "training sequences need >= 2 tokens");
  }

  Weights weights = init_weights(config, hyper.seed);
  if (hyper.steps == 0) return weights;
  if (hyper.batch <= 0) fail(ErrorCode::FormatError, "batch must be positive");

  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  std::vector<double> m(weights.data.size(), 0.0), v(weights.data.size(), 0.0);
  std::mt19937_64 batch_rng(hyper.seed * 0x9E3779B97F4A7C15ULL + 0x2545F4914F6CDD1DULL);

  for (std::int64_t step = 1; step <= hyper.steps; ++step) {
    std::vector<TokenSeq> batch;
    batch.reserve(hyper.batch);
    for (std::int32_t b = 0; b < hyper.batch; ++b) {
      batch.push_back(corpus[uniform_below(batch_rng, corpus.size())]);
    }

    const LossGrads lg = loss_and_grads(weights, batch);
    if (!std::isfinite(lg.loss)) {
      fail(ErrorCode::TrainingDiverged, "loss is not finite at step " + std::to_string(step));
    }

    const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(step));
    bool finite = true;
    for (std::size_t i = 0; i < weights.data.size(); ++i) {
      const double g = static_cast<double>(lg.grads[i]);
      m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * g;
      v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * g * g;
      const double update = hyper.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + kEps);
      const float next = static_cast<float>(static_cast<double>(weights.data[i]) - update);
      weights.data[i] = next;
      finite &= std::isfinite(next);
    }
    if (!finite) {
      fail(ErrorCode::TrainingDiverged, "weights became non-finite at step " + std::to_string(step));
    }
    if (log && (step % 100 == 0 || step == 1 || step == hyper.steps)) log(step, lg.loss);
  }
  return weights;
}

}  // namespace provgen
