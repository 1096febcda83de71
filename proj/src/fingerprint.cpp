#include "provgen/fingerprint.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <set>

#include <json.hpp>

#include "provgen/error.hpp"
#include "provgen/parallel.hpp"
#include "provgen/rng.hpp"

namespace provgen {

const char* strategy_name(Strategy s) {
  switch (s) {
    case Strategy::HighVariance: return "high_variance";
    case Strategy::Random: return "random";
    case Strategy::Maximum: return "maximum";
    case Strategy::Minimum: return "minimum";
    case Strategy::FfnVariance: return "ffn_variance";
  }
  return "unknown";
}

std::optional<Strategy> strategy_from_name(std::string_view name) {
  if (name == "high_variance") return Strategy::HighVariance;
  if (name == "random") return Strategy::Random;
  if (name == "maximum") return Strategy::Maximum;
  if (name == "minimum") return Strategy::Minimum;
  if (name == "ffn_variance") return Strategy::FfnVariance;
  return std::nullopt;
}

std::size_t fingerprint_position(const TokenSeq& prefix) {
  if (prefix.empty()) fail(ErrorCode::EmptyPrefix, "fingerprint position of an empty prefix");
  return prefix.size() - 1;
}

NeuronStats profile_neurons(const Weights& weights, const std::vector<TokenSeq>& prefixes) {
  if (prefixes.empty()) fail(ErrorCode::EmptyInput, "profile_neurons requires prefixes");

  NeuronStats stats;
  stats.n_layers = weights.config.n_layers;
  stats.d_model = weights.config.d_model;
  const std::size_t n_neurons = static_cast<std::size_t>(stats.n_layers) * 2 * stats.d_model;

  std::vector<Welford> acc(n_neurons);
  // Taps are produced in parallel but folded in prefix order, so the result
  // does not depend on the worker count at all.
  parallel_ordered<std::vector<float>>(
      prefixes.size(), 256,
      [&](std::size_t i) { return forward_last_taps(weights, prefixes[i]); },
      [&](std::size_t, std::vector<float>&& taps) {
        for (std::size_t n = 0; n < n_neurons; ++n) acc[n].add(static_cast<double>(taps[n]));
      });

  stats.count = acc[0].count;
  stats.mean.resize(n_neurons);
  stats.variance.resize(n_neurons);
  stats.min_v.resize(n_neurons);
  stats.max_v.resize(n_neurons);
  for (std::size_t n = 0; n < n_neurons; ++n) {
    stats.mean[n] = acc[n].mean;
    stats.variance[n] = acc[n].variance();
    stats.min_v[n] = acc[n].min_v;
    stats.max_v[n] = acc[n].max_v;
  }
  return stats;
}

namespace {

std::vector<std::size_t> sublayer_neuron_indices(const NeuronStats& stats, Sublayer s) {
  std::vector<std::size_t> out;
  out.reserve(static_cast<std::size_t>(stats.n_layers) * stats.d_model);
  for (std::int32_t l = 0; l < stats.n_layers; ++l) {
    for (std::int32_t c = 0; c < stats.d_model; ++c) {
      out.push_back(stats.index_of(NeuronId{l, s, c}));
    }
  }
  return out;
}

}  // namespace

NeuronSelection select_neurons(const NeuronStats& stats, Strategy strategy, std::int32_t f,
                               std::optional<std::uint64_t> seed) {
  if (f <= 0) fail(ErrorCode::SelectionTooLarge, "F must be positive");

  const Sublayer pool_sublayer = strategy == Strategy::FfnVariance ? Sublayer::Ffn : Sublayer::Attn;
  std::vector<std::size_t> pool = sublayer_neuron_indices(stats, pool_sublayer);
  if (static_cast<std::size_t>(f) > pool.size()) {
    fail(ErrorCode::SelectionTooLarge,
         "F=" + std::to_string(f) + " exceeds " + std::to_string(pool.size()) + " eligible neurons");
  }

  // Rankings break ties by (layer, channel) ascending, which is the pool's
  // iteration order, so stable_sort on the key alone is enough.
  switch (strategy) {
    case Strategy::HighVariance:
    case Strategy::FfnVariance:
      std::stable_sort(pool.begin(), pool.end(), [&](std::size_t a, std::size_t b) {
        return stats.variance[a] > stats.variance[b];
      });
      break;
    case Strategy::Maximum:
      std::stable_sort(pool.begin(), pool.end(), [&](std::size_t a, std::size_t b) {
        return stats.mean[a] > stats.mean[b];
      });
      break;
    case Strategy::Minimum:
      std::stable_sort(pool.begin(), pool.end(), [&](std::size_t a, std::size_t b) {
        return stats.mean[a] < stats.mean[b];
      });
      break;
    case Strategy::Random: {
      std::mt19937_64 rng(seed.value_or(0));
      fisher_yates_shuffle(pool, rng);
      break;
    }
  }

  NeuronSelection sel;
  sel.strategy = strategy;
  if (strategy == Strategy::Random) sel.seed = seed.value_or(0);
  sel.neurons.reserve(f);
  for (std::int32_t i = 0; i < f; ++i) sel.neurons.push_back(stats.neuron_at(pool[i]));
  sel.selection_hash = compute_selection_hash(sel);
  return sel;
}

void validate_selection(const NeuronSelection& selection, const ModelConfig& config) {
  if (selection.neurons.empty()) fail(ErrorCode::SelectionConfigMismatch, "selection is empty");
  std::set<std::tuple<std::int32_t, int, std::int32_t>> seen;
  for (const NeuronId& n : selection.neurons) {
    if (n.layer < 0 || n.layer >= config.n_layers || n.channel < 0 || n.channel >= config.d_model) {
      fail(ErrorCode::SelectionConfigMismatch,
           "neuron (layer=" + std::to_string(n.layer) + ", channel=" + std::to_string(n.channel) +
               ") outside model dimensions");
    }
    if (!seen.insert({n.layer, static_cast<int>(n.sublayer), n.channel}).second) {
      fail(ErrorCode::SelectionConfigMismatch, "duplicate neuron in selection");
    }
  }
}

Fingerprint extract_fingerprint(const Weights& weights, const NeuronSelection& selection,
                                const TokenSeq& prefix) {
  const NeuronSelection* sel = &selection;
  return std::move(extract_fingerprints(weights, std::span(&sel, 1), prefix).front());
}

std::vector<Fingerprint> extract_fingerprints(const Weights& weights,
                                              std::span<const NeuronSelection* const> selections,
                                              const TokenSeq& prefix) {
  for (const NeuronSelection* sel : selections) validate_selection(*sel, weights.config);
  const std::vector<float> taps = forward_last_taps(weights, prefix);
  const std::size_t d = static_cast<std::size_t>(weights.config.d_model);

  std::vector<Fingerprint> out;
  out.reserve(selections.size());
  for (const NeuronSelection* sel : selections) {
    Fingerprint fp;
    fp.reserve(sel->neurons.size());
    for (const NeuronId& n : sel->neurons) {
      const std::size_t s = n.sublayer == Sublayer::Attn ? 0 : 1;
      fp.push_back(taps[(static_cast<std::size_t>(n.layer) * 2 + s) * d + n.channel]);
    }
    out.push_back(std::move(fp));
  }
  return out;
}

std::string canonical_selection_json(const NeuronSelection& selection) {
  nlohmann::json j;
  j["version"] = 1;
  j["strategy"] = strategy_name(selection.strategy);
  if (selection.seed) {
    j["seed"] = *selection.seed;
  } else {
    j["seed"] = nullptr;
  }
  j["F"] = selection.neurons.size();
  nlohmann::json neurons = nlohmann::json::array();
  for (const NeuronId& n : selection.neurons) {
    neurons.push_back({{"layer", n.layer}, {"sublayer", sublayer_name(n.sublayer)},
                       {"channel", n.channel}});
  }
  j["neurons"] = std::move(neurons);
  return j.dump();  // nlohmann objects keep keys sorted; dump() emits no whitespace
}

std::uint64_t compute_selection_hash(const NeuronSelection& selection) {
  return fnv1a64(canonical_selection_json(selection));
}

void save_selection(const NeuronSelection& selection, const std::filesystem::path& path) {
  nlohmann::json j = nlohmann::json::parse(canonical_selection_json(selection));
  j["selection_hash"] = std::to_string(selection.selection_hash);
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
  if (!out) fail(ErrorCode::IoError, "failed writing " + path.string());
}

NeuronSelection load_selection(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::FormatError, "bad selection file " + path.string() + ": " + e.what());
  }
  if (j.value("version", 0) != 1) fail(ErrorCode::FormatError, "unsupported selection version");

  NeuronSelection sel;
  const auto strategy = strategy_from_name(j.at("strategy").get<std::string>());
  if (!strategy) fail(ErrorCode::FormatError, "unknown strategy in " + path.string());
  sel.strategy = *strategy;
  if (!j.at("seed").is_null()) sel.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& jn : j.at("neurons")) {
    NeuronId n;
    n.layer = jn.at("layer").get<std::int32_t>();
    n.channel = jn.at("channel").get<std::int32_t>();
    const std::string s = jn.at("sublayer").get<std::string>();
    if (s == "attn") {
      n.sublayer = Sublayer::Attn;
    } else if (s == "ffn") {
      n.sublayer = Sublayer::Ffn;
    } else {
      fail(ErrorCode::FormatError, "unknown sublayer '" + s + "'");
    }
    sel.neurons.push_back(n);
  }
  if (sel.neurons.size() != j.at("F").get<std::size_t>()) {
    fail(ErrorCode::FormatError, "selection F does not match neuron list length");
  }
  sel.selection_hash = compute_selection_hash(sel);
  if (j.contains("selection_hash")) {
    const std::uint64_t stored = std::stoull(j.at("selection_hash").get<std::string>());
    if (stored != sel.selection_hash) {
      fail(ErrorCode::FormatError, "stored selection_hash does not match canonical serialization");
    }
  }
  return sel;
}

void save_neuron_stats(const NeuronStats& stats, const std::filesystem::path& path) {
  nlohmann::json j;
  j["version"] = 1;
  j["n_layers"] = stats.n_layers;
  j["d_model"] = stats.d_model;
  j["count"] = stats.count;
  nlohmann::json neurons = nlohmann::json::array();
  for (std::size_t i = 0; i < stats.neuron_count(); ++i) {
    const NeuronId n = stats.neuron_at(i);
    neurons.push_back({{"layer", n.layer},
                       {"sublayer", sublayer_name(n.sublayer)},
                       {"channel", n.channel},
                       {"mean", stats.mean[i]},
                       {"variance", stats.variance[i]},
                       {"min", stats.min_v[i]},
                       {"max", stats.max_v[i]}});
  }
  j["neurons"] = std::move(neurons);
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  out << j.dump() << '\n';
  if (!out) fail(ErrorCode::IoError, "failed writing " + path.string());
}

NeuronStats load_neuron_stats(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::FormatError, "bad stats file " + path.string() + ": " + e.what());
  }
  if (j.value("version", 0) != 1) fail(ErrorCode::FormatError, "unsupported stats version");

  NeuronStats stats;
  stats.n_layers = j.at("n_layers").get<std::int32_t>();
  stats.d_model = j.at("d_model").get<std::int32_t>();
  stats.count = j.at("count").get<std::int64_t>();
  const std::size_t n = static_cast<std::size_t>(stats.n_layers) * 2 * stats.d_model;
  stats.mean.resize(n);
  stats.variance.resize(n);
  stats.min_v.resize(n);
  stats.max_v.resize(n);
  if (j.at("neurons").size() != n) fail(ErrorCode::FormatError, "stats neuron count mismatch");
  for (const auto& jn : j.at("neurons")) {
    NeuronId id;
    id.layer = jn.at("layer").get<std::int32_t>();
    id.channel = jn.at("channel").get<std::int32_t>();
    id.sublayer = jn.at("sublayer").get<std::string>() == "attn" ? Sublayer::Attn : Sublayer::Ffn;
    const std::size_t i = stats.index_of(id);
    stats.mean[i] = jn.at("mean").get<double>();
    stats.variance[i] = jn.at("variance").get<double>();
    stats.min_v[i] = jn.at("min").get<double>();
    stats.max_v[i] = jn.at("max").get<double>();
  }
  return stats;
}

}  // namespace provgen
