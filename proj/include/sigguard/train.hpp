#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>

#include "sigguard/dataset.hpp"
#include "sigguard/defense.hpp"
#include "sigguard/mlp.hpp"

namespace sigguard {

struct AdamParams {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct TrainingConfig {
  int epochs = 10;
  int batch_size = 64;
  double learning_rate = 1e-3;
  AdamParams adam;
  std::uint64_t seed = 0;
  std::optional<DefenseConfig> defense;

  void validate() const;
};

// Raised when a batch loss stops being finite; names the epoch and batch.
class TrainingDivergedError : public std::runtime_error {
 public:
  TrainingDivergedError(int epoch, int batch)
      : std::runtime_error("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch)),
        epoch(epoch),
        batch(batch) {}
  int epoch;
  int batch;
};

// Mini-batch Adam on MSE plus the optional similarity term. Gradients are
// exact backpropagation; shuffling order is derived from the seed, so a fixed
// (architecture, dataset, config) is bit-reproducible.
MLPModel train(const Architecture& arch, const Dataset& dataset, const TrainingConfig& config);

// Fraction of samples whose predicted class matches the target class under
// the dataset's label mode. Throws on empty or regression datasets.
double accuracy(const MLPModel& model, const Dataset& dataset);

// Composite loss (mean per-sample summed squared error + lambda * similarity)
// and its exact parameter gradients over a sample range. Exposed for gradient
// checking; train() uses the same path.
double composite_loss_and_gradients(const MLPModel& model, const Dataset& dataset,
                                    std::size_t first, std::size_t count,
                                    const std::optional<DefenseConfig>& defense,
                                    std::vector<Matrix>& weight_grads,
                                    std::vector<std::vector<double>>& bias_grads);

}  // namespace sigguard
