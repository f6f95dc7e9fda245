#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "sigguard/mlp.hpp"

namespace sigguard {

// Common per-dimension input interval [low, high]. The closed-form
// between-hyperplane measure integrates |x| as (high^2 + low^2)/2, which is
// only the right antiderivative when the interval straddles zero, hence the
// invariant low <= 0 <= high. pair_attack_probability_general handles
// arbitrary intervals with the exact integral.
struct InputRange {
  double low = -1.0;
  double high = 1.0;
  int dimension = 2;

  InputRange() = default;
  InputRange(double low, double high, int dimension);
};

enum class DirectionCase { kSame, kOpposite };

// Closed-form success probability for one neuron pair: the (clamped) bound on
// the measure of inputs between the two critical hyperplanes, flipped to its
// complement when the normals point in opposite directions.
struct PairProbability {
  std::vector<double> k_coeffs;  // N-1 slope-difference coefficients
  double theta = 0.0;            // angle between the full weight vectors, [0, pi]
  double p_between = 0.0;        // clamped between-hyperplane bound, [0, 1]
  double success_probability = 0.0;
  DirectionCase direction_case = DirectionCase::kSame;
};

class PivotSingularError : public std::runtime_error {
 public:
  explicit PivotSingularError(const std::string& what) : std::runtime_error(what) {}
};

class ZeroVectorError : public std::runtime_error {
 public:
  explicit ZeroVectorError(const std::string& what) : std::runtime_error(what) {}
};

// K_i = b_i/b_N - a_i/a_N for i = 1..N-1: the per-dimension difference of
// hyperplane slopes, pivoted on the last coordinate. Evaluated in this
// two-ratio form so identical, scaled and negated pairs give exact zeros.
// Throws PivotSingularError when either pivot coordinate is ~0 (|.| < 1e-12).
std::vector<double> k_coefficients(std::span<const double> a, std::span<const double> b);

// Angle between full weight vectors, arccos of the clamped cosine.
double normal_angle(std::span<const double> a, std::span<const double> b);

PairProbability pair_attack_probability(std::span<const double> a, std::span<const double> b,
                                        const InputRange& range);

// Same bound with the exact integral of |x| over [low, high]; accepts
// intervals that do not straddle zero.
PairProbability pair_attack_probability_general(std::span<const double> a,
                                                std::span<const double> b, double low,
                                                double high);

struct McEstimate {
  double estimate = 0.0;
  double std_error = 0.0;
  std::uint64_t n_samples = 0;
};

// Fraction of uniform box samples on which the two neurons' active states
// (w.x + bias >= 0) disagree, with the binomial standard error. This is the
// independent check for the closed form; unlike it, biases participate.
McEstimate monte_carlo_disagreement(std::span<const double> a, std::span<const double> b,
                                    double bias_a, double bias_b, const InputRange& range,
                                    std::uint64_t n_samples, std::uint64_t seed);

struct PairProbabilityEntry {
  int i = 0;
  int j = 0;
  PairProbability prob;
  bool monte_carlo_fallback = false;  // closed form unavailable (singular pivot)
};

struct ModelProbabilityReport {
  int layer_index = 0;
  std::vector<PairProbabilityEntry> pairs;
  double worst_case = 0.0;
  int worst_i = -1;
  int worst_j = -1;
};

class LayerTooNarrowError : public std::runtime_error {
 public:
  explicit LayerTooNarrowError(const std::string& what) : std::runtime_error(what) {}
};

// All-pairs table for one weight layer plus the worst (most extractable)
// pair. Pairs with singular pivots fall back to the Monte Carlo estimate
// (zero biases, seeded per pair).
ModelProbabilityReport model_attack_probability(const MLPModel& model, int layer_index,
                                                const InputRange& range,
                                                std::uint64_t mc_samples = 200000);

}  // namespace sigguard
