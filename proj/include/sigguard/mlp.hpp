#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace sigguard {

// Layer sizes including input and output, e.g. {784, 8, 8, 1}. Hidden layers
// are ReLU, the output layer is linear; that is fixed for the whole toolkit.
struct Architecture {
  std::vector<int> layer_sizes;

  int input_dim() const { return layer_sizes.front(); }
  int output_dim() const { return layer_sizes.back(); }
  // Number of weight layers (= number of hidden layers + 1).
  int layer_count() const { return static_cast<int>(layer_sizes.size()) - 1; }
  int hidden_layer_count() const { return layer_count() - 1; }

  // Throws std::invalid_argument unless there are >= 3 entries, all >= 1.
  void validate() const;

  bool operator==(const Architecture&) const = default;
};

// Dense row-major matrix: rows = neurons of the layer, cols = layer inputs.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}

  double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }

  std::span<const double> row(int r) const {
    return {data.data() + static_cast<std::size_t>(r) * cols, static_cast<std::size_t>(cols)};
  }
  std::span<double> row(int r) {
    return {data.data() + static_cast<std::size_t>(r) * cols, static_cast<std::size_t>(cols)};
  }

  bool operator==(const Matrix&) const = default;
};

struct MLPModel {
  Architecture architecture;
  std::vector<Matrix> weights;              // weights[l] has shape (sizes[l+1] x sizes[l])
  std::vector<std::vector<double>> biases;  // biases[l] has length sizes[l+1]
  std::uint64_t training_seed = 0;
  std::map<std::string, std::string> metadata;

  // Shape consistency with the architecture plus finiteness of every value.
  void check_consistent() const;
};

// Deterministic He-style uniform initialization: weights uniform in
// (-sqrt(6/fan_in), +sqrt(6/fan_in)) from a per-layer stream derived from the
// seed, biases zero. Same (architecture, seed) gives bit-identical models.
MLPModel init_model(const Architecture& arch, std::uint64_t seed);

std::vector<double> forward(const MLPModel& model, std::span<const double> x);

struct ForwardTrace {
  std::vector<std::vector<double>> pre_activations;  // one vector per weight layer
  std::vector<std::vector<char>> active;             // hidden layers only; 1 iff pre > 0
  std::vector<double> output;
};

// forward() plus every pre-activation and hidden activation state.
ForwardTrace forward_hidden_states(const MLPModel& model, std::span<const double> x);

}  // namespace sigguard
