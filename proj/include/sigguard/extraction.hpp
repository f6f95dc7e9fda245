#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sigguard/oracle.hpp"

namespace sigguard {

// An input sitting on some first-layer critical hyperplane, certified by the
// line-search residuals at acceptance time.
struct CriticalPoint {
  std::vector<double> x_star;
  std::int64_t line_id = 0;             // which probe segment produced it
  double refinement_residual = 0.0;     // max |second difference| at accept time
};

// A neuron's weight row recovered up to scale: normalized so the pivot
// coordinate (largest magnitude, ties to the lowest index) equals 1.
struct Signature {
  std::vector<double> values;
  CriticalPoint source;
  int pivot_index = 0;
};

struct SignatureCluster {
  std::vector<double> centroid;
  std::vector<Signature> members;
  double spread = 0.0;  // max member-to-centroid max-norm distance
};

struct AttackConfig {
  double epsilon = 0.0;  // probe step; 0 selects 1e-6 * search box diameter
  int line_count_per_round = 16;
  double refine_tolerance = 1e-8;
  double cluster_tolerance = 1e-5;
  std::vector<std::pair<double, double>> search_box;  // per dim; empty = [0,1]^N
  std::uint64_t seed = 0;
  QueryBudget budget;  // carried for experiment plumbing; enforcement is the oracle's

  void validate() const;
  std::vector<std::pair<double, double>> box_for_dim(int dim) const;
};

enum class Verdict { kSuccess, kFailure };

struct AttackReport {
  int clusters_found = 0;
  int target_neuron_count = 0;
  std::vector<std::vector<double>> signatures;  // cluster centroids
  OracleStats stats;
  Verdict verdict = Verdict::kFailure;
  std::string failure_reason;           // "budget", "cluster_deficit", "cluster_surplus"
  std::vector<double> match_errors;     // per true neuron; filled by evaluation
  int rounds = 0;
  int points_found = 0;
  int signatures_recovered = 0;
  double signature_seconds = 0.0;
};

// A second kink sits inside the probe interval; retry with smaller epsilon.
class RegionCrossingError : public std::runtime_error {
 public:
  explicit RegionCrossingError(const std::string& what) : std::runtime_error(what) {}
};

// Every finite-difference sum fell below the noise floor; point discarded.
class AllZeroError : public std::runtime_error {
 public:
  explicit AllZeroError(const std::string& what) : std::runtime_error(what) {}
};

struct CriticalPointSearch {
  std::vector<CriticalPoint> points;
  bool budget_exhausted = false;  // partial result: the budget ran out mid-scan
};

// Scans line_count_per_round seeded random segments inside the search box,
// brackets kinks of t -> f(u + t(v-u)) by second differences on a coarse
// grid, then bisects each bracket down to 1e-9 * box diameter and certifies
// the accepted point (one-sided slopes differ by more than refine_tolerance;
// each side affine with second difference below refine_tolerance/10).
CriticalPointSearch find_critical_points(Oracle& oracle, const AttackConfig& config,
                                         int max_points);

// Per-unit-epsilon one-sided derivatives along coordinate axis i at a
// critical point, signed so that alpha_plus + alpha_minus isolates the
// flipping neuron's weight coordinate. Three collinear probes per side vet
// that x* +/- 2 epsilon e_i stay within one linear region each.
std::pair<double, double> directional_derivative_pair(Oracle& oracle,
                                                      std::span<const double> x_star, int i,
                                                      double epsilon);

// Assembles the normalized signature at a critical point: s_i = alpha_i+ +
// alpha_i- per coordinate, halving epsilon (up to 8 times) on region
// crossings, then normalizing by the pivot coordinate.
Signature recover_signature(Oracle& oracle, const CriticalPoint& point,
                            const AttackConfig& config);

// Pivot index used by the canonical normalization: the lowest index whose
// magnitude is within a relative 1e-6 of the maximum (the tie window keeps
// the choice stable under recovery noise).
int canonical_pivot(std::span<const double> values);
std::vector<double> canonical_signature(std::span<const double> values);

// Single-linkage grouping under max-norm distance <= tolerance on the
// canonically normalized vectors. Deterministic: inputs are sorted
// lexicographically first; clusters come back sorted by centroid.
std::vector<SignatureCluster> cluster_signatures(std::vector<Signature> signatures,
                                                 double cluster_tolerance);

// Rounds of (find points -> recover signatures -> cluster) until the cluster
// count matches the target layer width or the oracle budget runs out. The
// oracle must carry a finite budget.
AttackReport run_layer1_attack(Oracle& oracle, int target_neuron_count,
                               const AttackConfig& config);

struct MatchMetrics {
  bool faithful = false;
  double max_error = 0.0;
  std::vector<double> per_neuron_errors;  // indexed by true neuron row
  std::vector<int> matched_cluster;       // true neuron -> cluster index or -1
};

// White-box scoring: greedy bijective matching of cluster centroids against
// the canonically normalized true first-layer rows. Faithful iff a bijection
// exists with every max-norm error below tol. Fills report.match_errors.
MatchMetrics evaluate_against_ground_truth(AttackReport& report, const MLPModel& model,
                                           double tol);

}  // namespace sigguard
