#include "sigguard/defense.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "sigguard/rng.hpp"

namespace sigguard {

void DefenseConfig::validate() const {
  if (lambda_similarity < 0.0 || !std::isfinite(lambda_similarity)) {
    throw std::invalid_argument("lambda_similarity must be finite and >= 0");
  }
  if (!(pair_fraction > 0.0 && pair_fraction <= 1.0)) {
    throw std::invalid_argument("pair_fraction must be in (0, 1]");
  }
  if (layer_scope == LayerScope::kExplicit && explicit_layers.empty()) {
    throw std::invalid_argument("explicit layer scope needs at least one layer index");
  }
}

PairSelection select_defended_pairs(int layer_width, PairMode mode, double pair_fraction,
                                    std::uint64_t pair_seed) {
  if (!(pair_fraction > 0.0 && pair_fraction <= 1.0)) {
    throw std::invalid_argument("pair_fraction must be in (0, 1]");
  }
  PairSelection sel;
  if (layer_width < 2) return sel;

  std::vector<std::pair<int, int>> all;
  if (mode == PairMode::kAllPairs) {
    for (int i = 0; i < layer_width; ++i) {
      for (int j = i + 1; j < layer_width; ++j) all.emplace_back(i, j);
    }
  } else {
    for (int i = 0; i + 1 < layer_width; ++i) all.emplace_back(i, i + 1);
  }
  const auto total = static_cast<std::size_t>(all.size());
  const auto want = static_cast<std::size_t>(std::ceil(pair_fraction * static_cast<double>(total)));
  if (want >= total) {
    sel.pairs = std::move(all);
    return sel;
  }
  // Seeded Fisher-Yates prefix, then sorted back for a canonical order.
  rng::Stream stream(rng::mix(pair_seed, 0xbea72ULL));
  for (std::size_t i = 0; i < want; ++i) {
    const std::size_t j = i + stream.below(total - i);
    std::swap(all[i], all[j]);
  }
  all.resize(want);
  std::sort(all.begin(), all.end());
  sel.pairs = std::move(all);
  return sel;
}

double layer_similarity_loss(const Matrix& weights, const PairSelection& pairs,
                             bool include_biases, std::span<const double> biases,
                             Matrix* weight_grad, std::vector<double>* bias_grad) {
  for (auto [i, j] : pairs.pairs) {
    if (i < 0 || j < 0 || i >= weights.rows || j >= weights.rows || i >= j) {
      throw std::invalid_argument("pair selection out of range for layer weight matrix");
    }
  }
  if (weight_grad && (weight_grad->rows != weights.rows || weight_grad->cols != weights.cols)) {
    throw std::invalid_argument("weight gradient buffer shape mismatch");
  }
  if (include_biases && static_cast<int>(biases.size()) != weights.rows) {
    throw std::invalid_argument("bias vector length does not match layer width");
  }
  double loss = 0.0;
  for (auto [i, j] : pairs.pairs) {
    for (int c = 0; c < weights.cols; ++c) {
      const double d = weights.at(i, c) - weights.at(j, c);
      loss += d * d;
      if (weight_grad) {
        weight_grad->at(i, c) += 2.0 * d;
        weight_grad->at(j, c) -= 2.0 * d;
      }
    }
    if (include_biases) {
      const double d = biases[i] - biases[j];
      loss += d * d;
      if (bias_grad) {
        (*bias_grad)[i] += 2.0 * d;
        (*bias_grad)[j] -= 2.0 * d;
      }
    }
  }
  return loss;
}

namespace {

std::vector<int> layers_in_scope(const Architecture& arch, const DefenseConfig& config) {
  const int hidden = arch.hidden_layer_count();
  switch (config.layer_scope) {
    case LayerScope::kFirstLayer:
      return {0};
    case LayerScope::kAllLayers: {
      std::vector<int> all(hidden);
      std::iota(all.begin(), all.end(), 0);
      return all;
    }
    case LayerScope::kExplicit:
      for (int l : config.explicit_layers) {
        if (l < 0 || l >= hidden) {
          throw std::out_of_range("defense layer scope index " + std::to_string(l) +
                                  " outside hidden layers 0.." + std::to_string(hidden - 1));
        }
      }
      return config.explicit_layers;
  }
  throw std::logic_error("unreachable layer scope");
}

}  // namespace

std::vector<PairSelection> defended_pair_selections(const Architecture& arch,
                                                    const DefenseConfig& config) {
  config.validate();
  std::vector<PairSelection> selections(arch.hidden_layer_count());
  for (int l = 0; l < arch.hidden_layer_count(); ++l) selections[l].layer_index = l;
  for (int l : layers_in_scope(arch, config)) {
    selections[l] = select_defended_pairs(arch.layer_sizes[l + 1], config.pair_mode,
                                          config.pair_fraction,
                                          rng::mix(config.pair_seed, static_cast<std::uint64_t>(l)));
    selections[l].layer_index = l;
  }
  return selections;
}

double total_similarity_loss(const MLPModel& model, const DefenseConfig& config,
                             std::vector<Matrix>* weight_grads,
                             std::vector<std::vector<double>>* bias_grads) {
  const auto selections = defended_pair_selections(model.architecture, config);
  if (weight_grads) {
    weight_grads->clear();
    for (const auto& w : model.weights) weight_grads->emplace_back(w.rows, w.cols);
  }
  if (bias_grads) {
    bias_grads->clear();
    for (const auto& b : model.biases) bias_grads->emplace_back(b.size(), 0.0);
  }
  double loss = 0.0;
  for (const auto& sel : selections) {
    if (sel.pairs.empty()) continue;
    const int l = sel.layer_index;
    loss += layer_similarity_loss(model.weights[l], sel, config.include_biases, model.biases[l],
                                  weight_grads ? &(*weight_grads)[l] : nullptr,
                                  bias_grads ? &(*bias_grads)[l] : nullptr);
  }
  return loss;
}

std::string to_string(LayerScope scope) {
  switch (scope) {
    case LayerScope::kFirstLayer: return "first-layer";
    case LayerScope::kAllLayers: return "all-layers";
    case LayerScope::kExplicit: return "explicit";
  }
  return "?";
}

std::string to_string(PairMode mode) {
  return mode == PairMode::kAllPairs ? "all-pairs" : "chain";
}

LayerScope layer_scope_from_string(const std::string& s) {
  if (s == "first-layer") return LayerScope::kFirstLayer;
  if (s == "all-layers") return LayerScope::kAllLayers;
  if (s == "explicit") return LayerScope::kExplicit;
  throw std::invalid_argument("unknown layer scope: " + s);
}

PairMode pair_mode_from_string(const std::string& s) {
  if (s == "all-pairs") return PairMode::kAllPairs;
  if (s == "chain") return PairMode::kChain;
  throw std::invalid_argument("unknown pair mode: " + s);
}

}  // namespace sigguard
