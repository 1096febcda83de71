#pragma once

// Internal transformer compute kernels shared by forward, training and
// decoding. Float specialization is the inference path (fp32 matmuls with
// 64-bit softmax/layernorm reductions); the double specialization backs
// loss_and_grads so analytic gradients can be checked against central finite
// differences at tight tolerance.

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "provgen/error.hpp"
#include "provgen/model.hpp"

namespace provgen::detail {

inline void validate_input(const Weights& w, std::span<const TokenId> ids) {
  if (ids.empty()) fail(ErrorCode::EmptyPrefix, "model input is empty");
  if (ids.size() > static_cast<std::size_t>(w.config.max_pos)) {
    fail(ErrorCode::PrefixTooLong, "input length " + std::to_string(ids.size()) +
                                       " exceeds max_pos " + std::to_string(w.config.max_pos));
  }
  for (TokenId id : ids) {
    if (id >= static_cast<TokenId>(w.config.vocab_size)) {
      fail(ErrorCode::InvalidTokenId, "token id " + std::to_string(id) + " >= vocab_size");
    }
  }
}

// y[T x N] = x[T x M] * W[M x N] + b
template <class S>
inline void affine(const S* x, const float* w, const float* b, S* y, int T, int M, int N) {
  for (int t = 0; t < T; ++t) {
    S* yrow = y + static_cast<std::size_t>(t) * N;
    if (b) {
      for (int j = 0; j < N; ++j) yrow[j] = static_cast<S>(b[j]);
    } else {
      for (int j = 0; j < N; ++j) yrow[j] = S(0);
    }
    const S* xrow = x + static_cast<std::size_t>(t) * M;
    for (int m = 0; m < M; ++m) {
      const S a = xrow[m];
      const float* wrow = w + static_cast<std::size_t>(m) * N;
      for (int j = 0; j < N; ++j) yrow[j] += a * static_cast<S>(wrow[j]);
    }
  }
}

// norm/out/rstd per position; mean and variance accumulate in 64-bit.
template <class S>
inline void layernorm_forward(const S* x, const float* g, const float* b, S* norm, S* out, S* rstd,
                              int T, int d, double eps) {
  for (int t = 0; t < T; ++t) {
    const S* xr = x + static_cast<std::size_t>(t) * d;
    double mu = 0.0;
    for (int c = 0; c < d; ++c) mu += static_cast<double>(xr[c]);
    mu /= d;
    double var = 0.0;
    for (int c = 0; c < d; ++c) {
      const double dv = static_cast<double>(xr[c]) - mu;
      var += dv * dv;
    }
    var /= d;
    const double r = 1.0 / std::sqrt(var + eps);
    rstd[t] = static_cast<S>(r);
    S* nr = norm + static_cast<std::size_t>(t) * d;
    S* orow = out + static_cast<std::size_t>(t) * d;
    for (int c = 0; c < d; ++c) {
      const S n = static_cast<S>((static_cast<double>(xr[c]) - mu) * r);
      nr[c] = n;
      orow[c] = static_cast<S>(g[c]) * n + static_cast<S>(b[c]);
    }
  }
}

inline double gelu_scalar(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }

inline double gelu_grad_scalar(double x) {
  constexpr double kInvSqrt2Pi = 0.3989422804014327;
  return 0.5 * (1.0 + std::erf(x * M_SQRT1_2)) + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

template <class S>
struct LayerActs {
  std::vector<S> ln1_norm, ln1_out, q, k, v, att, attctx, x_attn;
  std::vector<S> ln2_norm, ln2_out, ffn_pre, ffn_act, x_ffn;
  std::vector<S> ln1_rstd, ln2_rstd;

  void resize(int T, int d, int dff, int nh) {
    const std::size_t td = static_cast<std::size_t>(T) * d;
    ln1_norm.resize(td); ln1_out.resize(td);
    q.resize(td); k.resize(td); v.resize(td);
    att.resize(static_cast<std::size_t>(nh) * T * T);
    attctx.resize(td); x_attn.resize(td);
    ln2_norm.resize(td); ln2_out.resize(td);
    ffn_pre.resize(static_cast<std::size_t>(T) * dff);
    ffn_act.resize(static_cast<std::size_t>(T) * dff);
    x_ffn.resize(td);
    ln1_rstd.resize(T); ln2_rstd.resize(T);
  }
};

template <class S>
struct Activations {
  int len = 0;
  bool logits_last_only = false;
  std::vector<S> x0;
  std::vector<LayerActs<S>> layers;
  std::vector<S> lnf_norm, lnf_out, lnf_rstd;
  std::vector<S> logits;  // len x V, or 1 x V when logits_last_only

  void resize(const ModelConfig& cfg, int T, bool last_only) {
    len = T;
    logits_last_only = last_only;
    const std::size_t td = static_cast<std::size_t>(T) * cfg.d_model;
    x0.resize(td);
    layers.resize(cfg.n_layers);
    for (auto& l : layers) l.resize(T, cfg.d_model, cfg.d_ff, cfg.n_heads);
    lnf_norm.resize(td); lnf_out.resize(td); lnf_rstd.resize(T);
    logits.resize(static_cast<std::size_t>(last_only ? 1 : T) * cfg.vocab_size);
  }
};

template <class S>
void run_forward(const Weights& w, std::span<const TokenId> ids, Activations<S>& acts,
                 bool logits_last_only) {
  const ModelConfig& cfg = w.config;
  const int T = static_cast<int>(ids.size());
  const int d = cfg.d_model;
  const int dff = cfg.d_ff;
  const int nh = cfg.n_heads;
  const int dh = cfg.head_dim();
  const int V = cfg.vocab_size;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  acts.resize(cfg, T, logits_last_only);

  const float* wte = w.at(w.layout.wte);
  const float* wpe = w.at(w.layout.wpe);
  for (int t = 0; t < T; ++t) {
    const float* te = wte + static_cast<std::size_t>(ids[t]) * d;
    const float* pe = wpe + static_cast<std::size_t>(t) * d;
    S* xr = acts.x0.data() + static_cast<std::size_t>(t) * d;
    for (int c = 0; c < d; ++c) xr[c] = static_cast<S>(te[c]) + static_cast<S>(pe[c]);
  }

  const S* x = acts.x0.data();
  for (int l = 0; l < cfg.n_layers; ++l) {
    const LayerOffsets& off = w.layout.layers[l];
    LayerActs<S>& a = acts.layers[l];

    layernorm_forward(x, w.at(off.ln1_g), w.at(off.ln1_b), a.ln1_norm.data(), a.ln1_out.data(),
                      a.ln1_rstd.data(), T, d, cfg.layernorm_eps);
    affine(a.ln1_out.data(), w.at(off.wq), w.at(off.bq), a.q.data(), T, d, d);
    affine(a.ln1_out.data(), w.at(off.wk), w.at(off.bk), a.k.data(), T, d, d);
    affine(a.ln1_out.data(), w.at(off.wv), w.at(off.bv), a.v.data(), T, d, d);

    for (int h = 0; h < nh; ++h) {
      const int c0 = h * dh;
      S* att = a.att.data() + static_cast<std::size_t>(h) * T * T;
      for (int t = 0; t < T; ++t) {
        const S* qt = a.q.data() + static_cast<std::size_t>(t) * d + c0;
        S* arow = att + static_cast<std::size_t>(t) * T;
        double mx = -1e300;
        for (int u = 0; u <= t; ++u) {
          const S* ku = a.k.data() + static_cast<std::size_t>(u) * d + c0;
          S dot = S(0);
          for (int c = 0; c < dh; ++c) dot += qt[c] * ku[c];
          const double s = static_cast<double>(dot) * scale;
          arow[u] = static_cast<S>(s);
          if (s > mx) mx = s;
        }
        double denom = 0.0;
        for (int u = 0; u <= t; ++u) denom += std::exp(static_cast<double>(arow[u]) - mx);
        const double inv = 1.0 / denom;
        for (int u = 0; u <= t; ++u) {
          arow[u] = static_cast<S>(std::exp(static_cast<double>(arow[u]) - mx) * inv);
        }
        for (int u = t + 1; u < T; ++u) arow[u] = S(0);

        S* ctx = a.attctx.data() + static_cast<std::size_t>(t) * d + c0;
        for (int c = 0; c < dh; ++c) ctx[c] = S(0);
        for (int u = 0; u <= t; ++u) {
          const S p = arow[u];
          const S* vu = a.v.data() + static_cast<std::size_t>(u) * d + c0;
          for (int c = 0; c < dh; ++c) ctx[c] += p * vu[c];
        }
      }
    }

    affine(a.attctx.data(), w.at(off.wo), w.at(off.bo), a.x_attn.data(), T, d, d);
    for (std::size_t i = 0; i < a.x_attn.size(); ++i) a.x_attn[i] += x[i];

    layernorm_forward(a.x_attn.data(), w.at(off.ln2_g), w.at(off.ln2_b), a.ln2_norm.data(),
                      a.ln2_out.data(), a.ln2_rstd.data(), T, d, cfg.layernorm_eps);
    affine(a.ln2_out.data(), w.at(off.w1), w.at(off.b1), a.ffn_pre.data(), T, d, dff);
    for (std::size_t i = 0; i < a.ffn_pre.size(); ++i) {
      a.ffn_act[i] = static_cast<S>(gelu_scalar(static_cast<double>(a.ffn_pre[i])));
    }
    affine(a.ffn_act.data(), w.at(off.w2), w.at(off.b2), a.x_ffn.data(), T, dff, d);
    for (std::size_t i = 0; i < a.x_ffn.size(); ++i) a.x_ffn[i] += a.x_attn[i];
    x = a.x_ffn.data();
  }

  // Final layernorm + tied output projection.
  layernorm_forward(x, w.at(w.layout.lnf_g), w.at(w.layout.lnf_b), acts.lnf_norm.data(),
                    acts.lnf_out.data(), acts.lnf_rstd.data(), T, d, cfg.layernorm_eps);
  const int t_begin = logits_last_only ? T - 1 : 0;
  for (int t = t_begin; t < T; ++t) {
    const S* hf = acts.lnf_out.data() + static_cast<std::size_t>(t) * d;
    S* lrow = acts.logits.data() + static_cast<std::size_t>(logits_last_only ? 0 : t) * V;
    for (int v = 0; v < V; ++v) {
      const float* we = wte + static_cast<std::size_t>(v) * d;
      S dot = S(0);
      for (int c = 0; c < d; ++c) dot += hf[c] * static_cast<S>(we[c]);
      lrow[v] = dot;
    }
  }
}

// dx[T x M] += dy[T x N] * W^T
inline void matmul_dx(const double* dy, const float* w, double* dx, int T, int M, int N) {
  for (int t = 0; t < T; ++t) {
    const double* dyr = dy + static_cast<std::size_t>(t) * N;
    double* dxr = dx + static_cast<std::size_t>(t) * M;
    for (int m = 0; m < M; ++m) {
      const float* wrow = w + static_cast<std::size_t>(m) * N;
      double acc = 0.0;
      for (int j = 0; j < N; ++j) acc += dyr[j] * static_cast<double>(wrow[j]);
      dxr[m] += acc;
    }
  }
}

// dW[M x N] += x^T * dy ; db[N] += sum_t dy
inline void matmul_dw(const double* x, const double* dy, double* dw, double* db, int T, int M, int N) {
  for (int t = 0; t < T; ++t) {
    const double* xr = x + static_cast<std::size_t>(t) * M;
    const double* dyr = dy + static_cast<std::size_t>(t) * N;
    for (int m = 0; m < M; ++m) {
      const double a = xr[m];
      double* dwr = dw + static_cast<std::size_t>(m) * N;
      for (int j = 0; j < N; ++j) dwr[j] += a * dyr[j];
    }
    if (db) {
      for (int j = 0; j < N; ++j) db[j] += dyr[j];
    }
  }
}

// dx += layernorm backward of dout; dg/db accumulate.
inline void layernorm_backward(const double* dout, const double* norm, const double* rstd,
                               const float* g, double* dg, double* db, double* dx, int T, int d) {
  for (int t = 0; t < T; ++t) {
    const double* dor = dout + static_cast<std::size_t>(t) * d;
    const double* nr = norm + static_cast<std::size_t>(t) * d;
    double* dxr = dx + static_cast<std::size_t>(t) * d;
    double m1 = 0.0, m2 = 0.0;
    for (int c = 0; c < d; ++c) {
      const double dn = dor[c] * static_cast<double>(g[c]);
      m1 += dn;
      m2 += dn * nr[c];
      dg[c] += dor[c] * nr[c];
      db[c] += dor[c];
    }
    m1 /= d;
    m2 /= d;
    const double r = rstd[t];
    for (int c = 0; c < d; ++c) {
      const double dn = dor[c] * static_cast<double>(g[c]);
      dxr[c] += r * (dn - m1 - nr[c] * m2);
    }
  }
}

// Accumulates parameter gradients for one sample into `grad` (already
// scaled dlogits, i.e. d loss / d logits including any 1/N factor).
void run_backward(const Weights& w, std::span<const TokenId> ids, const Activations<double>& acts,
                  const std::vector<double>& dlogits, std::vector<double>& grad);

}  // namespace provgen::detail
