#include "sigguard/mlp.hpp"

#include <cmath>
#include <stdexcept>

#include "sigguard/rng.hpp"

namespace sigguard {

void Architecture::validate() const {
  if (layer_sizes.size() < 3) {
    throw std::invalid_argument("architecture needs input, at least one hidden and output layer");
  }
  for (int s : layer_sizes) {
    if (s < 1) throw std::invalid_argument("architecture layer sizes must be >= 1");
  }
}

void MLPModel::check_consistent() const {
  architecture.validate();
  const auto& sizes = architecture.layer_sizes;
  if (weights.size() != static_cast<std::size_t>(architecture.layer_count()) ||
      biases.size() != weights.size()) {
    throw std::invalid_argument("model layer count does not match architecture");
  }
  for (int l = 0; l < architecture.layer_count(); ++l) {
    if (weights[l].rows != sizes[l + 1] || weights[l].cols != sizes[l]) {
      throw std::invalid_argument("weight matrix shape mismatch at layer " + std::to_string(l));
    }
    if (biases[l].size() != static_cast<std::size_t>(sizes[l + 1])) {
      throw std::invalid_argument("bias vector length mismatch at layer " + std::to_string(l));
    }
    for (double v : weights[l].data) {
      if (!std::isfinite(v)) throw std::invalid_argument("non-finite weight value");
    }
    for (double v : biases[l]) {
      if (!std::isfinite(v)) throw std::invalid_argument("non-finite bias value");
    }
  }
}

MLPModel init_model(const Architecture& arch, std::uint64_t seed) {
  arch.validate();
  MLPModel model;
  model.architecture = arch;
  model.training_seed = seed;
  const auto& sizes = arch.layer_sizes;
  for (int l = 0; l < arch.layer_count(); ++l) {
    const int fan_in = sizes[l];
    const int fan_out = sizes[l + 1];
    const double limit = std::sqrt(6.0 / fan_in);
    rng::Stream stream(rng::mix(seed, static_cast<std::uint64_t>(l)));
    Matrix w(fan_out, fan_in);
    for (double& v : w.data) v = stream.uniform(-limit, limit);
    model.weights.push_back(std::move(w));
    model.biases.emplace_back(fan_out, 0.0);
  }
  model.metadata["init"] = "he-uniform";
  return model;
}

namespace {

void check_input(const MLPModel& model, std::span<const double> x) {
  if (static_cast<int>(x.size()) != model.architecture.input_dim()) {
    throw std::invalid_argument("input dimension " + std::to_string(x.size()) +
                                " does not match model input size " +
                                std::to_string(model.architecture.input_dim()));
  }
  for (double v : x) {
    if (!std::isfinite(v)) throw std::invalid_argument("non-finite input component");
  }
}

}  // namespace

std::vector<double> forward(const MLPModel& model, std::span<const double> x) {
  check_input(model, x);
  const int layers = model.architecture.layer_count();
  std::vector<double> cur(x.begin(), x.end());
  std::vector<double> next;
  for (int l = 0; l < layers; ++l) {
    const Matrix& w = model.weights[l];
    next.assign(w.rows, 0.0);
    for (int r = 0; r < w.rows; ++r) {
      double acc = model.biases[l][r];
      const double* wr = w.data.data() + static_cast<std::size_t>(r) * w.cols;
      for (int c = 0; c < w.cols; ++c) acc += wr[c] * cur[c];
      next[r] = (l + 1 < layers && acc < 0.0) ? 0.0 : acc;  // ReLU on hidden layers
    }
    cur.swap(next);
  }
  return cur;
}

ForwardTrace forward_hidden_states(const MLPModel& model, std::span<const double> x) {
  check_input(model, x);
  ForwardTrace trace;
  const int layers = model.architecture.layer_count();
  std::vector<double> cur(x.begin(), x.end());
  for (int l = 0; l < layers; ++l) {
    const Matrix& w = model.weights[l];
    std::vector<double> pre(w.rows, 0.0);
    for (int r = 0; r < w.rows; ++r) {
      double acc = model.biases[l][r];
      const double* wr = w.data.data() + static_cast<std::size_t>(r) * w.cols;
      for (int c = 0; c < w.cols; ++c) acc += wr[c] * cur[c];
      pre[r] = acc;
    }
    trace.pre_activations.push_back(pre);
    if (l + 1 < layers) {
      std::vector<char> state(w.rows);
      for (int r = 0; r < w.rows; ++r) {
        state[r] = pre[r] > 0.0 ? 1 : 0;
        pre[r] = pre[r] > 0.0 ? pre[r] : 0.0;
      }
      trace.active.push_back(std::move(state));
    }
    cur.swap(pre);
  }
  trace.output = cur;
  return trace;
}

}  // namespace sigguard
