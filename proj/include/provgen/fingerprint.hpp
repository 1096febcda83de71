#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "provgen/model.hpp"
#include "provgen/tokenizer.hpp"

namespace provgen {

inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 1099511628211ULL;
  }
  return h;
}

struct NeuronId {
  std::int32_t layer = 0;
  Sublayer sublayer = Sublayer::Attn;
  std::int32_t channel = 0;

  friend bool operator==(const NeuronId&, const NeuronId&) = default;
};

// Streaming mean/variance/extrema accumulator (Welford), with the standard
// parallel combine for sharded profiling.
struct Welford {
  std::int64_t count = 0;
  double mean = 0.0;
  double m2 = 0.0;
  double min_v = 0.0;
  double max_v = 0.0;

  void add(double x) {
    if (count == 0) {
      min_v = max_v = x;
    } else {
      min_v = std::min(min_v, x);
      max_v = std::max(max_v, x);
    }
    ++count;
    const double delta = x - mean;
    mean += delta / static_cast<double>(count);
    m2 += delta * (x - mean);
  }

  void merge(const Welford& o) {
    if (o.count == 0) return;
    if (count == 0) {
      *this = o;
      return;
    }
    const double n1 = static_cast<double>(count), n2 = static_cast<double>(o.count);
    const double delta = o.mean - mean;
    const double n = n1 + n2;
    mean += delta * n2 / n;
    m2 += o.m2 + delta * delta * n1 * n2 / n;
    count += o.count;
    min_v = std::min(min_v, o.min_v);
    max_v = std::max(max_v, o.max_v);
  }

  double variance() const { return count > 0 ? m2 / static_cast<double>(count) : 0.0; }
};

// Per-neuron profiling statistics at the fingerprint position, in canonical
// neuron order: (layer, sublayer attn-then-ffn, channel).
struct NeuronStats {
  std::int32_t n_layers = 0;
  std::int32_t d_model = 0;
  std::int64_t count = 0;
  std::vector<double> mean, variance, min_v, max_v;

  std::size_t neuron_count() const { return mean.size(); }
  std::size_t index_of(const NeuronId& n) const {
    const std::size_t s = n.sublayer == Sublayer::Attn ? 0 : 1;
    return (static_cast<std::size_t>(n.layer) * 2 + s) * d_model + n.channel;
  }
  NeuronId neuron_at(std::size_t idx) const {
    NeuronId n;
    n.channel = static_cast<std::int32_t>(idx % d_model);
    const std::size_t ls = idx / d_model;
    n.sublayer = (ls % 2 == 0) ? Sublayer::Attn : Sublayer::Ffn;
    n.layer = static_cast<std::int32_t>(ls / 2);
    return n;
  }
};

enum class Strategy { HighVariance, Random, Maximum, Minimum, FfnVariance };

const char* strategy_name(Strategy s);
std::optional<Strategy> strategy_from_name(std::string_view name);

struct NeuronSelection {
  Strategy strategy = Strategy::HighVariance;
  std::optional<std::uint64_t> seed;  // set for Random only
  std::vector<NeuronId> neurons;      // exactly F, ordered by rank
  std::uint64_t selection_hash = 0;

  std::size_t size() const { return neurons.size(); }
};

using Fingerprint = std::vector<float>;

// The single position every fingerprint is read at: the prefix position
// whose logits produce the first generated token.
std::size_t fingerprint_position(const TokenSeq& prefix);

// Streaming stats of every neuron's activation at the fingerprint position
// over the given prefixes. Deterministic for any worker count.
NeuronStats profile_neurons(const Weights& weights, const std::vector<TokenSeq>& prefixes);

NeuronSelection select_neurons(const NeuronStats& stats, Strategy strategy, std::int32_t f,
                               std::optional<std::uint64_t> seed = std::nullopt);

// One forward pass; reads the trace at fingerprint_position(prefix) for each
// selected neuron in selection order.
Fingerprint extract_fingerprint(const Weights& weights, const NeuronSelection& selection,
                                const TokenSeq& prefix);

// Same pass shared across several selections (index/eval builds).
std::vector<Fingerprint> extract_fingerprints(const Weights& weights,
                                              std::span<const NeuronSelection* const> selections,
                                              const TokenSeq& prefix);

void validate_selection(const NeuronSelection& selection, const ModelConfig& config);

// Canonical serialization (sorted keys, no whitespace) hashed with FNV-1a.
std::string canonical_selection_json(const NeuronSelection& selection);
std::uint64_t compute_selection_hash(const NeuronSelection& selection);

void save_selection(const NeuronSelection& selection, const std::filesystem::path& path);
NeuronSelection load_selection(const std::filesystem::path& path);

void save_neuron_stats(const NeuronStats& stats, const std::filesystem::path& path);
NeuronStats load_neuron_stats(const std::filesystem::path& path);

}  // namespace provgen
