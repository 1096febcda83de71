#include "provgen/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include <json.hpp>

#include "engine.hpp"
#include "provgen/error.hpp"

static_assert(std::endian::native == std::endian::little, "weight files are little-endian");

namespace provgen {

void ModelConfig::validate() const {
  if (n_layers <= 0 || d_model <= 0 || n_heads <= 0 || d_ff <= 0 || max_pos <= 0) {
    fail(ErrorCode::FormatError, "model dimensions must be positive");
  }
  if (d_model % n_heads != 0) fail(ErrorCode::FormatError, "d_model must be divisible by n_heads");
  if (vocab_size < 4) fail(ErrorCode::FormatError, "vocab_size must be >= 4");
  if (layernorm_eps <= 0.0) fail(ErrorCode::FormatError, "layernorm_eps must be positive");
}

WeightsLayout make_weights_layout(const ModelConfig& cfg) {
  WeightsLayout lay;
  std::size_t off = 0;
  auto take = [&off](std::size_t n) {
    const std::size_t at = off;
    off += n;
    return at;
  };
  const std::size_t d = cfg.d_model, dff = cfg.d_ff;
  lay.wte = take(static_cast<std::size_t>(cfg.vocab_size) * d);
  lay.wpe = take(static_cast<std::size_t>(cfg.max_pos) * d);
  lay.layers.resize(cfg.n_layers);
  for (auto& l : lay.layers) {
    l.ln1_g = take(d); l.ln1_b = take(d);
    l.wq = take(d * d); l.bq = take(d);
    l.wk = take(d * d); l.bk = take(d);
    l.wv = take(d * d); l.bv = take(d);
    l.wo = take(d * d); l.bo = take(d);
    l.ln2_g = take(d); l.ln2_b = take(d);
    l.w1 = take(d * dff); l.b1 = take(dff);
    l.w2 = take(dff * d); l.b2 = take(d);
  }
  lay.lnf_g = take(d);
  lay.lnf_b = take(d);
  lay.total = off;
  return lay;
}

std::vector<TensorSpec> weight_tensor_specs(const ModelConfig& cfg) {
  const WeightsLayout lay = make_weights_layout(cfg);
  const std::int64_t d = cfg.d_model, dff = cfg.d_ff;
  std::vector<TensorSpec> specs;
  auto add = [&specs](std::string name, std::vector<std::int64_t> shape, std::size_t offset) {
    std::size_t n = 1;
    for (auto s : shape) n *= static_cast<std::size_t>(s);
    specs.push_back({std::move(name), std::move(shape), offset, n});
  };
  add("wte", {cfg.vocab_size, d}, lay.wte);
  add("wpe", {cfg.max_pos, d}, lay.wpe);
  for (std::int32_t l = 0; l < cfg.n_layers; ++l) {
    const LayerOffsets& o = lay.layers[l];
    const std::string p = "layers." + std::to_string(l) + ".";
    add(p + "ln1.gain", {d}, o.ln1_g); add(p + "ln1.bias", {d}, o.ln1_b);
    add(p + "attn.wq", {d, d}, o.wq); add(p + "attn.bq", {d}, o.bq);
    add(p + "attn.wk", {d, d}, o.wk); add(p + "attn.bk", {d}, o.bk);
    add(p + "attn.wv", {d, d}, o.wv); add(p + "attn.bv", {d}, o.bv);
    add(p + "attn.wo", {d, d}, o.wo); add(p + "attn.bo", {d}, o.bo);
    add(p + "ln2.gain", {d}, o.ln2_g); add(p + "ln2.bias", {d}, o.ln2_b);
    add(p + "ffn.w1", {d, dff}, o.w1); add(p + "ffn.b1", {dff}, o.b1);
    add(p + "ffn.w2", {dff, d}, o.w2); add(p + "ffn.b2", {d}, o.b2);
  }
  add("lnf.gain", {d}, lay.lnf_g);
  add("lnf.bias", {d}, lay.lnf_b);
  return specs;
}

bool Weights::all_finite() const {
  for (float v : data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Weights init_weights(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Weights w;
  w.config = cfg;
  w.layout = make_weights_layout(cfg);
  w.data.assign(w.layout.total, 0.0f);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 0.02);
  auto fill_normal = [&](std::size_t off, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) w.data[off + i] = static_cast<float>(dist(rng));
  };
  auto fill_ones = [&](std::size_t off, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) w.data[off + i] = 1.0f;
  };

  const std::size_t d = cfg.d_model, dff = cfg.d_ff;
  fill_normal(w.layout.wte, static_cast<std::size_t>(cfg.vocab_size) * d);
  fill_normal(w.layout.wpe, static_cast<std::size_t>(cfg.max_pos) * d);
  for (const auto& l : w.layout.layers) {
    fill_ones(l.ln1_g, d);
    fill_normal(l.wq, d * d);
    fill_normal(l.wk, d * d);
    fill_normal(l.wv, d * d);
    fill_normal(l.wo, d * d);
    fill_ones(l.ln2_g, d);
    fill_normal(l.w1, d * dff);
    fill_normal(l.w2, dff * d);
  }
  fill_ones(w.layout.lnf_g, d);
  return w;
}

void save_weights(const Weights& w, const std::filesystem::path& path) {
  nlohmann::json header;
  header["version"] = 1;
  header["config"] = {
      {"n_layers", w.config.n_layers}, {"d_model", w.config.d_model},
      {"n_heads", w.config.n_heads},   {"d_ff", w.config.d_ff},
      {"vocab_size", w.config.vocab_size}, {"max_pos", w.config.max_pos},
      {"layernorm_eps", w.config.layernorm_eps},
  };
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& spec : weight_tensor_specs(w.config)) {
    tensors.push_back({{"name", spec.name}, {"shape", spec.shape},
                       {"offset", spec.offset * sizeof(float)}});
  }
  header["tensors"] = std::move(tensors);

  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  out << header.dump() << '\n';
  out.write(reinterpret_cast<const char*>(w.data.data()),
            static_cast<std::streamsize>(w.data.size() * sizeof(float)));
  if (!out) fail(ErrorCode::IoError, "failed writing " + path.string());
}

Weights load_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
  std::string header_line;
  if (!std::getline(in, header_line)) fail(ErrorCode::FormatError, "missing weights header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_line);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::FormatError, std::string("bad weights header: ") + e.what());
  }
  if (header.value("version", 0) != 1) fail(ErrorCode::FormatError, "unsupported weights version");

  const auto& jc = header.at("config");
  ModelConfig cfg;
  cfg.n_layers = jc.at("n_layers").get<std::int32_t>();
  cfg.d_model = jc.at("d_model").get<std::int32_t>();
  cfg.n_heads = jc.at("n_heads").get<std::int32_t>();
  cfg.d_ff = jc.at("d_ff").get<std::int32_t>();
  cfg.vocab_size = jc.at("vocab_size").get<std::int32_t>();
  cfg.max_pos = jc.at("max_pos").get<std::int32_t>();
  cfg.layernorm_eps = jc.at("layernorm_eps").get<double>();
  cfg.validate();

  Weights w;
  w.config = cfg;
  w.layout = make_weights_layout(cfg);
  w.data.resize(w.layout.total);
  in.read(reinterpret_cast<char*>(w.data.data()),
          static_cast<std::streamsize>(w.data.size() * sizeof(float)));
  if (in.gcount() != static_cast<std::streamsize>(w.data.size() * sizeof(float))) {
    fail(ErrorCode::FormatError, "weights file truncated: " + path.string());
  }
  if (!w.all_finite()) fail(ErrorCode::FormatError, "weights contain non-finite values");
  return w;
}

ForwardResult forward(const Weights& w, const TokenSeq& input) {
  detail::validate_input(w, input);
  detail::Activations<float> acts;
  detail::run_forward<float>(w, input, acts, /*logits_last_only=*/false);

  const int T = acts.len;
  const int d = w.config.d_model;
  ForwardResult result;
  result.len = T;
  result.vocab_size = w.config.vocab_size;
  result.logits = acts.logits;
  result.trace = ActivationTrace(w.config.n_layers, d, T);
  for (std::int32_t l = 0; l < w.config.n_layers; ++l) {
    const auto& layer = acts.layers[l];
    for (int t = 0; t < T; ++t) {
      std::memcpy(result.trace.row(l, Sublayer::Attn, t),
                  layer.x_attn.data() + static_cast<std::size_t>(t) * d, sizeof(float) * d);
      std::memcpy(result.trace.row(l, Sublayer::Ffn, t),
                  layer.x_ffn.data() + static_cast<std::size_t>(t) * d, sizeof(float) * d);
    }
  }
  return result;
}

std::vector<double> forward_last_logprobs(const Weights& w, const TokenSeq& input) {
  detail::validate_input(w, input);
  detail::Activations<float> acts;
  detail::run_forward<float>(w, input, acts, /*logits_last_only=*/true);

  const int V = w.config.vocab_size;
  std::vector<double> logp(V);
  double mx = -1e300;
  for (int v = 0; v < V; ++v) mx = std::max(mx, static_cast<double>(acts.logits[v]));
  double denom = 0.0;
  for (int v = 0; v < V; ++v) denom += std::exp(static_cast<double>(acts.logits[v]) - mx);
  const double lse = mx + std::log(denom);
  for (int v = 0; v < V; ++v) logp[v] = static_cast<double>(acts.logits[v]) - lse;
  return logp;
}

std::vector<float> forward_last_taps(const Weights& w, const TokenSeq& input) {
  detail::validate_input(w, input);
  detail::Activations<float> acts;
  detail::run_forward<float>(w, input, acts, /*logits_last_only=*/true);

  const int d = w.config.d_model;
  const int t = acts.len - 1;
  std::vector<float> taps(static_cast<std::size_t>(w.config.n_layers) * 2 * d);
  float* out = taps.data();
  for (std::int32_t l = 0; l < w.config.n_layers; ++l) {
    const auto& layer = acts.layers[l];
    std::memcpy(out, layer.x_attn.data() + static_cast<std::size_t>(t) * d, sizeof(float) * d);
    out += d;
    std::memcpy(out, layer.x_ffn.data() + static_cast<std::size_t>(t) * d, sizeof(float) * d);
    out += d;
  }
  return taps;
}

}  // namespace provgen
