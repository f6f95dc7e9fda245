#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sigguard/mlp.hpp"

namespace sigguard {

enum class LayerScope { kFirstLayer, kAllLayers, kExplicit };
enum class PairMode { kAllPairs, kChain };

// Configuration of the weight-similarity regularizer added to the training
// loss. layer_scope selects which hidden layers contribute; pair_mode and
// pair_fraction select which neuron pairs inside each layer are penalized.
struct DefenseConfig {
  double lambda_similarity = 0.0;
  LayerScope layer_scope = LayerScope::kFirstLayer;
  std::vector<int> explicit_layers;  // hidden layer indices, 0-based, for kExplicit
  PairMode pair_mode = PairMode::kAllPairs;
  double pair_fraction = 1.0;
  std::uint64_t pair_seed = 0;
  bool include_biases = false;

  void validate() const;
};

struct PairSelection {
  int layer_index = 0;                     // hidden layer index, 0-based
  std::vector<std::pair<int, int>> pairs;  // (i, j) with i < j, no duplicates
};

// Deterministic pair pick for one layer. All-pairs mode draws
// ceil(fraction * n(n-1)/2) distinct pairs seeded by pair_seed; chain mode
// subsamples from the n-1 adjacent pairs the same way. A layer narrower than
// two neurons yields an empty selection.
PairSelection select_defended_pairs(int layer_width, PairMode mode, double pair_fraction,
                                    std::uint64_t pair_seed);

// Sum over the selected pairs of squared elementwise weight differences,
// plus squared bias differences iff include_biases. If grad buffers are
// given they must be pre-sized and zeroed; the analytic gradient is added
// into them.
double layer_similarity_loss(const Matrix& weights, const PairSelection& pairs,
                             bool include_biases, std::span<const double> biases,
                             Matrix* weight_grad = nullptr,
                             std::vector<double>* bias_grad = nullptr);

// Pair selections for every hidden layer in scope (one entry per hidden
// layer of the model; out-of-scope layers get empty selections).
std::vector<PairSelection> defended_pair_selections(const Architecture& arch,
                                                    const DefenseConfig& config);

// Sum of layer_similarity_loss over the in-scope hidden layers. Output-layer
// weights never participate. Gradient buffers, when given, must match the
// model's weight layout and are filled (not accumulated).
double total_similarity_loss(const MLPModel& model, const DefenseConfig& config,
                             std::vector<Matrix>* weight_grads = nullptr,
                             std::vector<std::vector<double>>* bias_grads = nullptr);

std::string to_string(LayerScope scope);
std::string to_string(PairMode mode);
LayerScope layer_scope_from_string(const std::string& s);
PairMode pair_mode_from_string(const std::string& s);

}  // namespace sigguard
