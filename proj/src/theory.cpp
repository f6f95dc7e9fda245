#include "sigguard/theory.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "sigguard/rng.hpp"

namespace sigguard {

namespace {
constexpr double kPivotFloor = 1e-12;
}

InputRange::InputRange(double low, double high, int dimension)
    : low(low), high(high), dimension(dimension) {
  if (!(low < high)) throw std::invalid_argument("input range needs low < high");
  if (low > 0.0 || high < 0.0) {
    throw std::invalid_argument("input range must straddle zero; use the general variant");
  }
  if (dimension < 2) throw std::invalid_argument("input range dimension must be >= 2");
}

std::vector<double> k_coefficients(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("neuron weight vectors differ in size");
  const std::size_t n = a.size();
  if (n < 2) throw std::invalid_argument("need at least two input dimensions");
  const double an = a[n - 1];
  const double bn = b[n - 1];
  if (std::abs(an) < kPivotFloor || std::abs(bn) < kPivotFloor) {
    throw PivotSingularError("pivot (last) coordinate is ~0 for one of the neurons");
  }
  std::vector<double> k(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) k[i] = b[i] / bn - a[i] / an;
  return k;
}

double normal_angle(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("neuron weight vectors differ in size");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw ZeroVectorError("normal_angle of a zero vector");
  const double cosine = std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
  return std::acos(cosine);
}

namespace {

// One-directional bound: between-measure over the box from a's frame.
double p_between_one_ordering(std::span<const double> a, std::span<const double> b,
                              double abs_integral, double width_sq) {
  const auto k = k_coefficients(a, b);
  double k_sum = 0.0;
  for (double v : k) k_sum += std::abs(v);
  return k_sum * abs_integral / width_sq;
}

PairProbability assemble(std::span<const double> a, std::span<const double> b,
                         double abs_integral, double width_sq) {
  // The two orderings agree algebraically (K flips sign); evaluating both and
  // keeping the larger guards the asymmetric-looking formula at no real cost.
  const double p_ab = p_between_one_ordering(a, b, abs_integral, width_sq);
  const double p_ba = p_between_one_ordering(b, a, abs_integral, width_sq);
  PairProbability out;
  out.k_coeffs = k_coefficients(a, b);
  out.p_between = std::min(1.0, std::max(p_ab, p_ba));
  out.theta = normal_angle(a, b);
  if (out.theta <= std::numbers::pi / 2.0) {
    out.direction_case = DirectionCase::kSame;
    out.success_probability = out.p_between;
  } else {
    out.direction_case = DirectionCase::kOpposite;
    out.success_probability = 1.0 - out.p_between;
  }
  return out;
}

}  // namespace

PairProbability pair_attack_probability(std::span<const double> a, std::span<const double> b,
                                        const InputRange& range) {
  const double abs_integral = (range.high * range.high + range.low * range.low) / 2.0;
  const double width = range.high - range.low;
  return assemble(a, b, abs_integral, width * width);
}

PairProbability pair_attack_probability_general(std::span<const double> a,
                                                std::span<const double> b, double low,
                                                double high) {
  if (!(low < high)) throw std::invalid_argument("input range needs low < high");
  // Exact integral of |x| over [low, high] for any placement of zero.
  const double abs_integral = (high * std::abs(high) - low * std::abs(low)) / 2.0;
  const double width = high - low;
  return assemble(a, b, abs_integral, width * width);
}

McEstimate monte_carlo_disagreement(std::span<const double> a, std::span<const double> b,
                                    double bias_a, double bias_b, const InputRange& range,
                                    std::uint64_t n_samples, std::uint64_t seed) {
  if (a.size() != b.size()) throw std::invalid_argument("neuron weight vectors differ in size");
  if (n_samples < 1) throw std::invalid_argument("n_samples must be >= 1");
  rng::Stream stream(rng::mix(seed, 0x4eaf00ULL));
  const std::size_t dim = a.size();
  std::uint64_t disagreements = 0;
  std::vector<double> x(dim);
  for (std::uint64_t s = 0; s < n_samples; ++s) {
    double da = bias_a, db = bias_b;
    for (std::size_t d = 0; d < dim; ++d) {
      const double v = stream.uniform(range.low, range.high);
      da += a[d] * v;
      db += b[d] * v;
    }
    if ((da >= 0.0) != (db >= 0.0)) ++disagreements;
  }
  McEstimate est;
  est.n_samples = n_samples;
  est.estimate = static_cast<double>(disagreements) / static_cast<double>(n_samples);
  est.std_error = std::sqrt(est.estimate * (1.0 - est.estimate) / static_cast<double>(n_samples));
  return est;
}

ModelProbabilityReport model_attack_probability(const MLPModel& model, int layer_index,
                                                const InputRange& range,
                                                std::uint64_t mc_samples) {
  if (layer_index < 0 || layer_index >= model.architecture.layer_count()) {
    throw std::invalid_argument("layer index out of range");
  }
  const Matrix& w = model.weights[layer_index];
  if (w.rows < 2) throw LayerTooNarrowError("layer has fewer than two neurons");
  if (w.cols != range.dimension) {
    throw std::invalid_argument("input range dimension does not match layer input size");
  }

  ModelProbabilityReport report;
  report.layer_index = layer_index;
  for (int i = 0; i < w.rows; ++i) {
    for (int j = i + 1; j < w.rows; ++j) {
      PairProbabilityEntry entry;
      entry.i = i;
      entry.j = j;
      try {
        entry.prob = pair_attack_probability(w.row(i), w.row(j), range);
      } catch (const PivotSingularError&) {
        // The closed form has no answer here; measure the disagreement
        // region directly (zero biases, matching the closed form's setting).
        entry.monte_carlo_fallback = true;
        const auto mc = monte_carlo_disagreement(
            w.row(i), w.row(j), 0.0, 0.0, range, mc_samples,
            rng::mix(0x7afabacc, static_cast<std::uint64_t>(i) << 20 | static_cast<std::uint64_t>(j)));
        entry.prob.p_between = mc.estimate;
        entry.prob.success_probability = mc.estimate;
        entry.prob.theta = normal_angle(w.row(i), w.row(j));
        entry.prob.direction_case = entry.prob.theta <= std::numbers::pi / 2.0
                                        ? DirectionCase::kSame
                                        : DirectionCase::kOpposite;
      }
      if (entry.prob.success_probability > report.worst_case || report.worst_i < 0) {
        report.worst_case = entry.prob.success_probability;
        report.worst_i = i;
        report.worst_j = j;
      }
      report.pairs.push_back(std::move(entry));
    }
  }
  return report;
}

}  // namespace sigguard
