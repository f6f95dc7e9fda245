#include "sigguard/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sigguard/rng.hpp"

namespace sigguard {

void TrainingConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be > 0");
  if (defense) defense->validate();
}

namespace {

struct BackpropBuffers {
  std::vector<std::vector<double>> post;  // activations per layer, post[0] = input
  std::vector<std::vector<double>> pre;   // pre-activations per weight layer
  std::vector<std::vector<double>> delta; // dL/dpre per weight layer
};

// Accumulates dL/dparams for one sample; returns its summed squared error.
// The 2/batch MSE scaling is applied by the caller through `scale`.
double backprop_sample(const MLPModel& model, std::span<const double> x,
                       std::span<const double> target, double scale, BackpropBuffers& buf,
                       std::vector<Matrix>& weight_grads,
                       std::vector<std::vector<double>>& bias_grads) {
  const int layers = model.architecture.layer_count();
  buf.post.resize(layers + 1);
  buf.pre.resize(layers);
  buf.delta.resize(layers);
  buf.post[0].assign(x.begin(), x.end());
  for (int l = 0; l < layers; ++l) {
    const Matrix& w = model.weights[l];
    buf.pre[l].assign(w.rows, 0.0);
    buf.post[l + 1].assign(w.rows, 0.0);
    for (int r = 0; r < w.rows; ++r) {
      double acc = model.biases[l][r];
      const double* wr = w.data.data() + static_cast<std::size_t>(r) * w.cols;
      const double* in = buf.post[l].data();
      for (int c = 0; c < w.cols; ++c) acc += wr[c] * in[c];
      buf.pre[l][r] = acc;
      buf.post[l + 1][r] = (l + 1 < layers && acc < 0.0) ? 0.0 : acc;
    }
  }

  double sample_loss = 0.0;
  const auto& out = buf.post[layers];
  buf.delta[layers - 1].assign(out.size(), 0.0);
  for (std::size_t k = 0; k < out.size(); ++k) {
    const double err = out[k] - target[k];
    sample_loss += err * err;
    buf.delta[layers - 1][k] = 2.0 * err * scale;
  }
  for (int l = layers - 1; l >= 0; --l) {
    const Matrix& w = model.weights[l];
    const auto& delta = buf.delta[l];
    const auto& in = buf.post[l];
    Matrix& gw = weight_grads[l];
    auto& gb = bias_grads[l];
    for (int r = 0; r < w.rows; ++r) {
      const double d = delta[r];
      if (d == 0.0) continue;
      gb[r] += d;
      double* gwr = gw.data.data() + static_cast<std::size_t>(r) * gw.cols;
      for (int c = 0; c < w.cols; ++c) gwr[c] += d * in[c];
    }
    if (l > 0) {
      auto& prev_delta = buf.delta[l - 1];
      prev_delta.assign(w.cols, 0.0);
      for (int r = 0; r < w.rows; ++r) {
        const double d = delta[r];
        if (d == 0.0) continue;
        const double* wr = w.data.data() + static_cast<std::size_t>(r) * w.cols;
        for (int c = 0; c < w.cols; ++c) prev_delta[c] += d * wr[c];
      }
      // ReLU gate of the preceding hidden layer.
      for (int c = 0; c < w.cols; ++c) {
        if (buf.pre[l - 1][c] <= 0.0) prev_delta[c] = 0.0;
      }
    }
  }
  return sample_loss;
}

}  // namespace

double composite_loss_and_gradients(const MLPModel& model, const Dataset& dataset,
                                    std::size_t first, std::size_t count,
                                    const std::optional<DefenseConfig>& defense,
                                    std::vector<Matrix>& weight_grads,
                                    std::vector<std::vector<double>>& bias_grads) {
  weight_grads.clear();
  bias_grads.clear();
  for (const auto& w : model.weights) weight_grads.emplace_back(w.rows, w.cols);
  for (const auto& b : model.biases) bias_grads.emplace_back(b.size(), 0.0);

  BackpropBuffers buf;
  const double scale = 1.0 / static_cast<double>(count);
  double loss = 0.0;
  for (std::size_t i = first; i < first + count; ++i) {
    loss += scale * backprop_sample(model, dataset.inputs[i], dataset.targets[i], scale, buf,
                                    weight_grads, bias_grads);
  }

  if (defense && defense->lambda_similarity > 0.0) {
    std::vector<Matrix> sim_w;
    std::vector<std::vector<double>> sim_b;
    const double sim = total_similarity_loss(model, *defense, &sim_w, &sim_b);
    const double lambda = defense->lambda_similarity;
    loss += lambda * sim;
    for (std::size_t l = 0; l < weight_grads.size(); ++l) {
      for (std::size_t k = 0; k < weight_grads[l].data.size(); ++k) {
        weight_grads[l].data[k] += lambda * sim_w[l].data[k];
      }
      for (std::size_t k = 0; k < bias_grads[l].size(); ++k) {
        bias_grads[l][k] += lambda * sim_b[l][k];
      }
    }
  }
  return loss;
}

MLPModel train(const Architecture& arch, const Dataset& dataset, const TrainingConfig& config) {
  arch.validate();
  config.validate();
  dataset.validate();
  if (dataset.size() == 0) throw std::invalid_argument("cannot train on an empty dataset");
  if (dataset.input_dim() != arch.input_dim()) {
    throw std::invalid_argument("dataset input dimension does not match architecture");
  }
  if (dataset.target_dim() != arch.output_dim()) {
    throw std::invalid_argument("dataset target dimension does not match architecture");
  }

  MLPModel model = init_model(arch, config.seed);

  std::vector<Matrix> m_w, v_w, g_w;
  std::vector<std::vector<double>> m_b, v_b, g_b;
  for (const auto& w : model.weights) {
    m_w.emplace_back(w.rows, w.cols);
    v_w.emplace_back(w.rows, w.cols);
  }
  for (const auto& b : model.biases) {
    m_b.emplace_back(b.size(), 0.0);
    v_b.emplace_back(b.size(), 0.0);
  }

  const double beta1 = config.adam.beta1;
  const double beta2 = config.adam.beta2;
  const double adam_eps = config.adam.epsilon;
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  Dataset shuffled;
  shuffled.inputs.resize(dataset.size());
  shuffled.targets.resize(dataset.size());

  long step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    rng::Stream shuffle_stream(rng::mix(config.seed, 0x5183ffULL, static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = 0; i + 1 < order.size(); ++i) {
      const std::size_t j = i + shuffle_stream.below(order.size() - i);
      std::swap(order[i], order[j]);
    }
    for (std::size_t i = 0; i < order.size(); ++i) {
      shuffled.inputs[i] = dataset.inputs[order[i]];
      shuffled.targets[i] = dataset.targets[order[i]];
    }

    const std::size_t n = dataset.size();
    int batch_index = 0;
    for (std::size_t start = 0; start < n; start += config.batch_size, ++batch_index) {
      const std::size_t count = std::min<std::size_t>(config.batch_size, n - start);
      const double loss =
          composite_loss_and_gradients(model, shuffled, start, count, config.defense, g_w, g_b);
      if (!std::isfinite(loss)) throw TrainingDivergedError(epoch, batch_index);

      ++step;
      const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
      for (std::size_t l = 0; l < model.weights.size(); ++l) {
        auto& w = model.weights[l].data;
        auto& gm = m_w[l].data;
        auto& gv = v_w[l].data;
        const auto& g = g_w[l].data;
        for (std::size_t k = 0; k < w.size(); ++k) {
          gm[k] = beta1 * gm[k] + (1.0 - beta1) * g[k];
          gv[k] = beta2 * gv[k] + (1.0 - beta2) * g[k] * g[k];
          w[k] -= config.learning_rate * (gm[k] / bc1) / (std::sqrt(gv[k] / bc2) + adam_eps);
        }
        auto& b = model.biases[l];
        auto& bm = m_b[l];
        auto& bv = v_b[l];
        const auto& gb = g_b[l];
        for (std::size_t k = 0; k < b.size(); ++k) {
          bm[k] = beta1 * bm[k] + (1.0 - beta1) * gb[k];
          bv[k] = beta2 * bv[k] + (1.0 - beta2) * gb[k] * gb[k];
          b[k] -= config.learning_rate * (bm[k] / bc1) / (std::sqrt(bv[k] / bc2) + adam_eps);
        }
      }
    }
  }

  model.training_seed = config.seed;
  model.metadata["dataset"] = dataset.name;
  model.metadata["epochs"] = std::to_string(config.epochs);
  model.metadata["batch_size"] = std::to_string(config.batch_size);
  model.metadata["learning_rate"] = std::to_string(config.learning_rate);
  model.metadata["optimizer"] = "adam(b1=0.9,b2=0.999,eps=1e-8)";
  model.metadata["base_loss"] = "mse";
  if (config.defense) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", config.defense->lambda_similarity);
    model.metadata["lambda_similarity"] = buf;
    model.metadata["defense_scope"] = to_string(config.defense->layer_scope);
    model.metadata["defense_pair_mode"] = to_string(config.defense->pair_mode);
  } else {
    model.metadata["lambda_similarity"] = "0";
  }
  return model;
}

double accuracy(const MLPModel& model, const Dataset& dataset) {
  if (dataset.size() == 0) throw std::invalid_argument("accuracy of an empty dataset is undefined");
  if (dataset.label_mode == LabelMode::kNone) {
    throw std::invalid_argument("accuracy undefined for regression dataset " + dataset.name);
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto out = forward(model, dataset.inputs[i]);
    const auto& target = dataset.targets[i];
    long pred = 0, truth = 0;
    switch (dataset.label_mode) {
      case LabelMode::kOneHot: {
        pred = std::max_element(out.begin(), out.end()) - out.begin();
        truth = std::max_element(target.begin(), target.end()) - target.begin();
        break;
      }
      case LabelMode::kBuckets: {
        const int n = dataset.bucket_count;
        pred = std::clamp<long>(std::lround(out[0] * (n - 1)), 0, n - 1);
        truth = std::clamp<long>(std::lround(target[0] * (n - 1)), 0, n - 1);
        break;
      }
      case LabelMode::kThreshold: {
        pred = out[0] >= dataset.threshold ? 1 : 0;
        truth = target[0] >= dataset.threshold ? 1 : 0;
        break;
      }
      case LabelMode::kNone:
        break;
    }
    if (pred == truth) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(dataset.size());
}

}  // namespace sigguard
