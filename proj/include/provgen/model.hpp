#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "provgen/tokenizer.hpp"

namespace provgen {

struct ModelConfig {
  std::int32_t n_layers = 4;
  std::int32_t d_model = 64;
  std::int32_t n_heads = 4;
  std::int32_t d_ff = 256;
  std::int32_t vocab_size = 0;
  std::int32_t max_pos = 256;
  double layernorm_eps = 1e-5;

  void validate() const;
  std::int32_t head_dim() const { return d_model / n_heads; }
};

// Parameter offsets (in floats) into the flat weight buffer, in canonical
// tensor order: wte, wpe, per layer (ln1, attention projections, ln2, ffn),
// final layernorm. The output projection is tied to wte.
struct LayerOffsets {
  std::size_t ln1_g, ln1_b;
  std::size_t wq, bq, wk, bk, wv, bv, wo, bo;
  std::size_t ln2_g, ln2_b;
  std::size_t w1, b1, w2, b2;
};

struct WeightsLayout {
  std::size_t wte = 0, wpe = 0;
  std::vector<LayerOffsets> layers;
  std::size_t lnf_g = 0, lnf_b = 0;
  std::size_t total = 0;
};

WeightsLayout make_weights_layout(const ModelConfig& config);

struct TensorSpec {
  std::string name;
  std::vector<std::int64_t> shape;
  std::size_t offset;  // float offset into the flat buffer
  std::size_t size;    // element count
};

std::vector<TensorSpec> weight_tensor_specs(const ModelConfig& config);

struct Weights {
  ModelConfig config;
  WeightsLayout layout;
  std::vector<float> data;

  const float* at(std::size_t offset) const { return data.data() + offset; }
  float* at(std::size_t offset) { return data.data() + offset; }
  bool all_finite() const;
};

// Seeded N(0, 0.02) projections/embeddings, unit layernorm gains, zero biases.
Weights init_weights(const ModelConfig& config, std::uint64_t seed);

// Header line of JSON (version, config, tensor table with byte offsets)
// terminated by '\n', then raw little-endian f32 in header order.
void save_weights(const Weights& weights, const std::filesystem::path& path);
Weights load_weights(const std::filesystem::path& path);

enum class Sublayer : std::uint8_t { Attn = 0, Ffn = 1 };

inline const char* sublayer_name(Sublayer s) { return s == Sublayer::Attn ? "attn" : "ffn"; }

// Post-residual sublayer outputs for every layer, channel and input position.
class ActivationTrace {
 public:
  ActivationTrace() = default;
  ActivationTrace(std::int32_t n_layers, std::int32_t d_model, std::int32_t len)
      : n_layers_(n_layers), d_model_(d_model), len_(len),
        values_(static_cast<std::size_t>(n_layers) * 2 * len * d_model) {}

  float value(std::int32_t layer, Sublayer sublayer, std::int32_t channel, std::int32_t position) const {
    return values_[index(layer, sublayer, channel, position)];
  }
  float* row(std::int32_t layer, Sublayer sublayer, std::int32_t position) {
    return values_.data() + index(layer, sublayer, 0, position);
  }
  const float* row(std::int32_t layer, Sublayer sublayer, std::int32_t position) const {
    return values_.data() + index(layer, sublayer, 0, position);
  }
  std::int32_t len() const { return len_; }
  std::int32_t n_layers() const { return n_layers_; }
  std::int32_t d_model() const { return d_model_; }

 private:
  std::size_t index(std::int32_t layer, Sublayer sublayer, std::int32_t channel, std::int32_t position) const {
    const std::size_t s = sublayer == Sublayer::Attn ? 0 : 1;
    return ((static_cast<std::size_t>(layer) * 2 + s) * len_ + position) * d_model_ + channel;
  }

  std::int32_t n_layers_ = 0, d_model_ = 0, len_ = 0;
  std::vector<float> values_;
};

struct ForwardResult {
  std::vector<float> logits;  // len x vocab_size, row-major
  std::int32_t len = 0;
  std::int32_t vocab_size = 0;
  ActivationTrace trace;

  float logit(std::int32_t position, TokenId token) const {
    return logits[static_cast<std::size_t>(position) * vocab_size + token];
  }
};

// Causal forward pass with full logits and activation trace. Bit-stable for
// fixed weights and input on one platform.
ForwardResult forward(const Weights& weights, const TokenSeq& input);

// Fast paths over the same math: logits at the last position only, and the
// trace row (layer-major, attn before ffn, d_model channels each) at the
// last position only.
std::vector<double> forward_last_logprobs(const Weights& weights, const TokenSeq& input);
std::vector<float> forward_last_taps(const Weights& weights, const TokenSeq& input);

struct LossGrads {
  double loss = 0.0;
  std::vector<float> grads;  // same layout as Weights::data
};

// Mean next-token negative log-likelihood over all positions of the batch,
// with exact analytic gradients (forward and backward accumulate in 64-bit).
LossGrads loss_and_grads(const Weights& weights, const std::vector<TokenSeq>& batch);

struct TrainHyper {
  std::int64_t steps = 2000;
  std::int32_t batch = 16;
  double lr = 1e-3;
  std::uint64_t seed = 1;
};

using TrainLogFn = std::function<void(std::int64_t step, double loss)>;

// Adam (beta1=0.9, beta2=0.999, eps=1e-8) over seeded batches drawn from
// `corpus`. Logs loss every 100 steps via `log` when provided.
Weights train_toy(const std::vector<TokenSeq>& corpus, const ModelConfig& config,
                  const TrainHyper& hyper, const TrainLogFn& log = nullptr);

struct BeamResult {
  TokenSeq tokens;  // generated suffix, including the terminating END if any
  double score = 0.0;
};

// Classic beam search: every live beam expands with its top-K next tokens,
// the pooled candidates (up to K^2, plus frozen beams) keep the top K by raw
// summed log-probability. END freezes a beam but it keeps competing. Ties
// break toward the lexicographically smaller token sequence.
BeamResult beam_search(const Weights& weights, const TokenSeq& prefix, std::int32_t beam_width,
                       std::int32_t max_len);

// beam_search that also stops beams at NEWLINE; returns the winning line
// with the stop token stripped.
TokenSeq generate_line(const Weights& weights, const TokenSeq& prefix, std::int32_t beam_width,
                       std::int32_t max_len = 32);

}  // namespace provgen
