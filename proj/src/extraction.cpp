#include "sigguard/extraction.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <tuple>

#include "sigguard/rng.hpp"

namespace sigguard {

namespace {

// Relative floor for "is this triple collinear" decisions; the absolute term
// keeps near-zero logit regions from flagging floating-point dust as kinks.
constexpr double kCollinearRel = 1e-12;
constexpr double kProbeCollinearRel = 1e-10;
constexpr double kScaleFloor = 1e-3;
constexpr int kGridIntervals = 32;
constexpr double kBracketWidthFrac = 1e-9;   // of box diameter, bisection stop
constexpr double kCertifyStepFrac = 1e-7;    // of box diameter, certification probes
constexpr int kEpsilonRetries = 8;

double box_diameter(const std::vector<std::pair<double, double>>& box) {
  double acc = 0.0;
  for (auto [lo, hi] : box) acc += (hi - lo) * (hi - lo);
  return std::sqrt(acc);
}

double effective_epsilon(const AttackConfig& config,
                         const std::vector<std::pair<double, double>>& box) {
  return config.epsilon > 0.0 ? config.epsilon : 1e-6 * box_diameter(box);
}

struct Segment {
  std::vector<double> u;
  std::vector<double> v;
  std::int64_t id = 0;
};

class SegmentSampler {
 public:
  SegmentSampler(std::vector<std::pair<double, double>> box, std::uint64_t seed)
      : box_(std::move(box)), stream_(rng::mix(seed, 0x5e63e27ULL)) {}

  Segment next() {
    Segment seg;
    seg.id = next_id_++;
    seg.u.resize(box_.size());
    seg.v.resize(box_.size());
    for (std::size_t d = 0; d < box_.size(); ++d) seg.u[d] = stream_.uniform(box_[d].first, box_[d].second);
    for (std::size_t d = 0; d < box_.size(); ++d) seg.v[d] = stream_.uniform(box_[d].first, box_[d].second);
    return seg;
  }

 private:
  std::vector<std::pair<double, double>> box_;
  rng::Stream stream_;
  std::int64_t next_id_ = 0;
};

// Queries along the segment's carrier line x(t) = u + t (v - u).
class LineProbe {
 public:
  LineProbe(Oracle& oracle, const Segment& seg) : oracle_(oracle), seg_(seg), x_(seg.u.size()) {
    double acc = 0.0;
    for (std::size_t d = 0; d < seg.u.size(); ++d) {
      const double diff = seg.v[d] - seg.u[d];
      acc += diff * diff;
    }
    length_ = std::sqrt(acc);
  }

  double at(double t) {
    for (std::size_t d = 0; d < x_.size(); ++d) x_[d] = seg_.u[d] + t * (seg_.v[d] - seg_.u[d]);
    return oracle_.query(x_);
  }

  std::vector<double> point(double t) const {
    std::vector<double> x(x_.size());
    for (std::size_t d = 0; d < x.size(); ++d) x[d] = seg_.u[d] + t * (seg_.v[d] - seg_.u[d]);
    return x;
  }

  double length() const { return length_; }

 private:
  Oracle& oracle_;
  const Segment& seg_;
  std::vector<double> x_;
  double length_ = 0.0;
};

bool noncollinear(double ga, double gm, double gb, double scale) {
  return std::abs(ga - 2.0 * gm + gb) > kCollinearRel * (scale + kScaleFloor);
}

struct Bracket {
  double t0, t2;
  double g0, g2;
};

// Shrinks a kink bracket by repeated triple splits: a collinear half cannot
// contain the kink of a piecewise-linear function, so descend into the other
// one. Finishes with the intersection of the two side chords.
std::optional<double> bisect_kink(LineProbe& probe, Bracket br, double scale,
                                  double width_target_t) {
  double t0 = br.t0, t2 = br.t2, g0 = br.g0, g2 = br.g2;
  double t1 = 0.5 * (t0 + t2);
  double g1 = probe.at(t1);
  if (!noncollinear(g0, g1, g2, scale)) return std::nullopt;
  while (t2 - t0 > width_target_t) {
    const double lm = 0.5 * (t0 + t1);
    const double glm = probe.at(lm);
    if (noncollinear(g0, glm, g1, scale)) {
      t2 = t1;
      g2 = g1;
      t1 = lm;
      g1 = glm;
      continue;
    }
    const double rm = 0.5 * (t1 + t2);
    const double grm = probe.at(rm);
    if (noncollinear(g1, grm, g2, scale)) {
      t0 = t1;
      g0 = g1;
      t1 = rm;
      g1 = grm;
      continue;
    }
    break;  // kink pinned at t1 within noise
  }
  const double sl = (g1 - g0) / (t1 - t0);
  const double sr = (g2 - g1) / (t2 - t1);
  if (sl != sr) {
    const double t = (g2 - g0 + sl * t0 - sr * t2) / (sl - sr);
    if (t >= t0 && t <= t2) return t;
  }
  return t1;
}

struct Certification {
  bool ok = false;
  double residual = 0.0;
};

Certification certify(LineProbe& probe, double t_star, double h_t, double refine_tol) {
  const double gm3 = probe.at(t_star - 3 * h_t);
  const double gm2 = probe.at(t_star - 2 * h_t);
  const double gm1 = probe.at(t_star - 1 * h_t);
  const double gp1 = probe.at(t_star + 1 * h_t);
  const double gp2 = probe.at(t_star + 2 * h_t);
  const double gp3 = probe.at(t_star + 3 * h_t);
  const double h_x = h_t * probe.length();
  const double slope_minus = (gm1 - gm2) / h_x;
  const double slope_plus = (gp2 - gp1) / h_x;
  Certification cert;
  cert.residual = std::max(std::abs(gm3 - 2 * gm2 + gm1), std::abs(gp1 - 2 * gp2 + gp3));
  cert.ok = std::abs(slope_plus - slope_minus) > refine_tol && cert.residual < refine_tol / 10.0;
  return cert;
}

// One scan round: coarse grid per segment, bracket by second differences,
// bisect, certify. Throws nothing; budget exhaustion flags the result.
CriticalPointSearch scan_round(Oracle& oracle, const AttackConfig& config,
                               SegmentSampler& sampler,
                               const std::vector<std::pair<double, double>>& box, int max_points) {
  CriticalPointSearch out;
  const double diam = box_diameter(box);
  const double width_target_x = kBracketWidthFrac * diam;
  try {
    for (int line = 0; line < config.line_count_per_round; ++line) {
      if (max_points >= 0 && static_cast<int>(out.points.size()) >= max_points) break;
      const Segment seg = sampler.next();
      LineProbe probe(oracle, seg);
      if (probe.length() == 0.0) continue;

      std::array<double, kGridIntervals + 1> g;
      double scale = 0.0;
      for (int k = 0; k <= kGridIntervals; ++k) {
        g[k] = probe.at(static_cast<double>(k) / kGridIntervals);
        scale = std::max(scale, std::abs(g[k]));
      }
      std::vector<bool> flagged(kGridIntervals + 1, false);
      for (int k = 1; k < kGridIntervals; ++k) {
        flagged[k] = noncollinear(g[k - 1], g[k], g[k + 1], scale);
      }
      int k = 1;
      while (k < kGridIntervals) {
        if (!flagged[k]) {
          ++k;
          continue;
        }
        int last = k;
        while (last + 1 < kGridIntervals && flagged[last + 1]) ++last;
        Bracket br{(k - 1.0) / kGridIntervals, (last + 1.0) / kGridIntervals, g[k - 1], g[last + 1]};
        k = last + 1;

        const double width_target_t = width_target_x / probe.length();
        const auto t_star = bisect_kink(probe, br, scale, width_target_t);
        if (!t_star) continue;
        const double h_t = kCertifyStepFrac * diam / probe.length();
        const auto cert = certify(probe, *t_star, h_t, config.refine_tolerance);
        if (!cert.ok) continue;
        CriticalPoint cp;
        cp.x_star = probe.point(*t_star);
        cp.line_id = seg.id;
        cp.refinement_residual = cert.residual;
        out.points.push_back(std::move(cp));
        if (max_points >= 0 && static_cast<int>(out.points.size()) >= max_points) break;
      }
    }
  } catch (const BudgetExhaustedError&) {
    out.budget_exhausted = true;
  }
  return out;
}

}  // namespace

void AttackConfig::validate() const {
  if (epsilon < 0.0 || !std::isfinite(epsilon)) {
    throw std::invalid_argument("epsilon must be finite and >= 0");
  }
  if (line_count_per_round < 1) throw std::invalid_argument("line_count_per_round must be >= 1");
  if (!(refine_tolerance > 0.0)) throw std::invalid_argument("refine_tolerance must be > 0");
  if (!(cluster_tolerance > 0.0)) throw std::invalid_argument("cluster_tolerance must be > 0");
  for (auto [lo, hi] : search_box) {
    if (!(lo < hi)) throw std::invalid_argument("search box needs low < high per dimension");
  }
}

std::vector<std::pair<double, double>> AttackConfig::box_for_dim(int dim) const {
  if (search_box.empty()) return std::vector<std::pair<double, double>>(dim, {0.0, 1.0});
  if (static_cast<int>(search_box.size()) != dim) {
    throw std::invalid_argument("search box dimension does not match oracle input size");
  }
  return search_box;
}

CriticalPointSearch find_critical_points(Oracle& oracle, const AttackConfig& config,
                                         int max_points) {
  config.validate();
  const auto box = config.box_for_dim(oracle.input_dim());
  SegmentSampler sampler(box, config.seed);
  return scan_round(oracle, config, sampler, box, max_points);
}

namespace {

// (alpha_plus, alpha_minus) per unit epsilon along an arbitrary displacement
// direction. Three collinear probes per side vet that x* +/- 2 epsilon dir
// stay in one linear region each. The minus side keeps the raw difference
// sign so that the sum of the two cancels every neuron whose state is
// constant across x*; the flipping neuron contributes sign(c) * |c w . dir|.
std::pair<double, double> one_sided_sums(Oracle& oracle, std::span<const double> x_star,
                                         std::span<const double> dir, double epsilon) {
  std::vector<double> x(x_star.size());
  auto probe = [&](double offset) {
    for (std::size_t d = 0; d < x.size(); ++d) x[d] = x_star[d] + offset * dir[d];
    return oracle.query(x);
  };
  const double fp1 = probe(epsilon);
  const double fp15 = probe(1.5 * epsilon);
  const double fp2 = probe(2.0 * epsilon);
  const double plus_scale = std::max({std::abs(fp1), std::abs(fp15), std::abs(fp2)});
  if (std::abs(fp1 - 2.0 * fp15 + fp2) > kProbeCollinearRel * (plus_scale + kScaleFloor)) {
    throw RegionCrossingError("second kink inside positive probe interval");
  }
  const double fm1 = probe(-epsilon);
  const double fm15 = probe(-1.5 * epsilon);
  const double fm2 = probe(-2.0 * epsilon);
  const double minus_scale = std::max({std::abs(fm1), std::abs(fm15), std::abs(fm2)});
  if (std::abs(fm1 - 2.0 * fm15 + fm2) > kProbeCollinearRel * (minus_scale + kScaleFloor)) {
    throw RegionCrossingError("second kink inside negative probe interval");
  }
  return {(fp2 - fp1) / epsilon, (fm2 - fm1) / epsilon};
}

double sum_with_retries(Oracle& oracle, std::span<const double> x_star,
                        std::span<const double> dir, double eps0, double* floor_out) {
  double eps = eps0;
  for (int attempt = 0;; ++attempt) {
    try {
      const auto [plus, minus] = one_sided_sums(oracle, x_star, dir, eps);
      const double sum = plus + minus;
      if (floor_out) {
        // Finite-difference cancellation noise, scaled to the probe values.
        const double scale = 1.0 + std::abs(sum) * eps;
        *floor_out = 64.0 * std::numeric_limits<double>::epsilon() * scale / eps;
      }
      return sum;
    } catch (const RegionCrossingError&) {
      if (attempt >= kEpsilonRetries) throw;
      eps *= 0.5;
    }
  }
}

}  // namespace

std::pair<double, double> directional_derivative_pair(Oracle& oracle,
                                                      std::span<const double> x_star, int i,
                                                      double epsilon) {
  if (i < 0 || i >= oracle.input_dim()) throw std::invalid_argument("axis index out of range");
  if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be > 0");
  std::vector<double> dir(x_star.size(), 0.0);
  dir[i] = 1.0;
  return one_sided_sums(oracle, x_star, dir, epsilon);
}

int canonical_pivot(std::span<const double> values) {
  double max_abs = 0.0;
  for (double v : values) max_abs = std::max(max_abs, std::abs(v));
  if (max_abs == 0.0) return -1;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (std::abs(values[i]) >= (1.0 - 1e-6) * max_abs) return static_cast<int>(i);
  }
  return -1;
}

std::vector<double> canonical_signature(std::span<const double> values) {
  const int pivot = canonical_pivot(values);
  if (pivot < 0) throw std::invalid_argument("cannot normalize an all-zero signature");
  std::vector<double> out(values.begin(), values.end());
  const double p = out[pivot];
  for (double& v : out) v /= p;
  out[pivot] = 1.0;
  return out;
}

Signature recover_signature(Oracle& oracle, const CriticalPoint& point,
                            const AttackConfig& config) {
  config.validate();
  const int dim = oracle.input_dim();
  if (static_cast<int>(point.x_star.size()) != dim) {
    throw std::invalid_argument("critical point dimension mismatch");
  }
  const auto box = config.box_for_dim(dim);
  const double eps0 = effective_epsilon(config, box);
  const double f_center = oracle.query(point.x_star);

  // Per-axis sums. Each equals sign(c) * |c| * |w_i| for the flipping neuron:
  // the axis probes see the flip magnitude but not which way round the
  // neuron's half-space lies, so coordinate signs need a second pass.
  std::vector<double> sums(dim, 0.0);
  std::vector<double> floors(dim, 0.0);
  std::vector<double> dir(dim, 0.0);
  for (int i = 0; i < dim; ++i) {
    dir[i] = 1.0;
    sums[i] = sum_with_retries(oracle, point.x_star, dir, eps0, &floors[i]);
    floors[i] += 64.0 * std::numeric_limits<double>::epsilon() * std::abs(f_center) / eps0;
    dir[i] = 0.0;
  }
  bool any_signal = false;
  for (int i = 0; i < dim; ++i) {
    if (std::abs(sums[i]) > floors[i]) any_signal = true;
  }
  if (!any_signal) throw AllZeroError("all derivative sums below the noise floor");

  std::vector<double> magnitudes(dim);
  for (int i = 0; i < dim; ++i) magnitudes[i] = std::abs(sums[i]);
  const int pivot = canonical_pivot(magnitudes);

  // Relative sign of coordinate i against the pivot: probing along
  // e_pivot + e_i flips with magnitude |c| * |w_p + w_i|, which is
  // |c|(|w_p| + |w_i|) when the signs agree and |c| ||w_p| - |w_i|| when
  // they differ. Coordinates at the noise floor keep a positive sign; their
  // normalized value is negligible either way.
  std::vector<double> values(dim, 0.0);
  values[pivot] = 1.0;
  for (int i = 0; i < dim; ++i) {
    if (i == pivot) continue;
    const double ratio = magnitudes[i] / magnitudes[pivot];
    if (magnitudes[i] <= 4.0 * floors[i]) {
      values[i] = ratio;
      continue;
    }
    dir[pivot] = 1.0;
    dir[i] = 1.0;
    const double diag = std::abs(sum_with_retries(oracle, point.x_star, dir, eps0, nullptr));
    dir[pivot] = 0.0;
    dir[i] = 0.0;
    const double if_same = magnitudes[pivot] + magnitudes[i];
    const double if_opposite = std::abs(magnitudes[pivot] - magnitudes[i]);
    const bool same_sign = std::abs(diag - if_same) <= std::abs(diag - if_opposite);
    values[i] = same_sign ? ratio : -ratio;
  }

  Signature sig;
  sig.pivot_index = pivot;
  sig.values = std::move(values);
  sig.source = point;
  return sig;
}

namespace {

double max_norm_distance(std::span<const double> a, std::span<const double> b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(n) {
    for (int i = 0; i < n; ++i) parent[i] = i;
  }
  int find(int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(int a, int b) { parent[find(a)] = find(b); }
};

}  // namespace

std::vector<SignatureCluster> cluster_signatures(std::vector<Signature> signatures,
                                                 double cluster_tolerance) {
  if (!(cluster_tolerance > 0.0)) throw std::invalid_argument("cluster_tolerance must be > 0");
  for (auto& sig : signatures) {
    sig.values = canonical_signature(sig.values);
    sig.pivot_index = canonical_pivot(sig.values);
  }
  std::sort(signatures.begin(), signatures.end(),
            [](const Signature& a, const Signature& b) { return a.values < b.values; });

  const int n = static_cast<int>(signatures.size());
  UnionFind uf(n);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (max_norm_distance(signatures[i].values, signatures[j].values) <= cluster_tolerance) {
        uf.unite(i, j);
      }
    }
  }
  std::vector<std::vector<int>> groups(n);
  for (int i = 0; i < n; ++i) groups[uf.find(i)].push_back(i);

  std::vector<SignatureCluster> clusters;
  for (const auto& group : groups) {
    if (group.empty()) continue;
    SignatureCluster cluster;
    const std::size_t dim = signatures[group.front()].values.size();
    std::vector<double> mean(dim, 0.0);
    for (int idx : group) {
      for (std::size_t d = 0; d < dim; ++d) mean[d] += signatures[idx].values[d];
      cluster.members.push_back(signatures[idx]);
    }
    for (double& v : mean) v /= static_cast<double>(group.size());
    cluster.centroid = canonical_signature(mean);
    for (int idx : group) {
      cluster.spread =
          std::max(cluster.spread, max_norm_distance(cluster.centroid, signatures[idx].values));
    }
    clusters.push_back(std::move(cluster));
  }
  std::sort(clusters.begin(), clusters.end(),
            [](const SignatureCluster& a, const SignatureCluster& b) {
              return a.centroid < b.centroid;
            });
  return clusters;
}

AttackReport run_layer1_attack(Oracle& oracle, int target_neuron_count,
                               const AttackConfig& config) {
  config.validate();
  if (target_neuron_count < 1) throw std::invalid_argument("target neuron count must be >= 1");
  if (!oracle.budget().any_finite()) {
    throw std::invalid_argument("attack runs require a finite oracle budget");
  }
  const auto box = config.box_for_dim(oracle.input_dim());
  SegmentSampler sampler(box, config.seed);

  AttackReport report;
  report.target_neuron_count = target_neuron_count;
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<Signature> signatures;
  bool exhausted = false;

  while (true) {
    ++report.rounds;
    const auto search = scan_round(oracle, config, sampler, box, -1);
    report.points_found += static_cast<int>(search.points.size());
    for (const auto& cp : search.points) {
      try {
        signatures.push_back(recover_signature(oracle, cp, config));
        ++report.signatures_recovered;
      } catch (const RegionCrossingError&) {
        continue;  // unresolvable overlap at this point; drop it
      } catch (const AllZeroError&) {
        continue;
      } catch (const BudgetExhaustedError&) {
        exhausted = true;
        break;
      }
    }
    if (!signatures.empty()) {
      const auto clusters = cluster_signatures(signatures, config.cluster_tolerance);
      report.clusters_found = static_cast<int>(clusters.size());
      report.signatures.clear();
      for (const auto& c : clusters) report.signatures.push_back(c.centroid);
      if (report.clusters_found == target_neuron_count) {
        report.verdict = Verdict::kSuccess;
        break;
      }
    }
    if (exhausted || search.budget_exhausted) {
      report.verdict = Verdict::kFailure;
      break;
    }
  }

  report.signature_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  report.stats = oracle.stats();
  if (report.verdict == Verdict::kFailure) {
    if (report.stats.queries_used == 0) {
      report.failure_reason = "budget";
    } else if (report.clusters_found < target_neuron_count) {
      report.failure_reason = "cluster_deficit";
    } else {
      report.failure_reason = "cluster_surplus";
    }
  }
  return report;
}

MatchMetrics evaluate_against_ground_truth(AttackReport& report, const MLPModel& model,
                                           double tol) {
  model.check_consistent();
  const Matrix& layer = model.weights[0];
  const int rows = layer.rows;

  std::vector<std::vector<double>> truth(rows);
  for (int r = 0; r < rows; ++r) {
    const auto row = layer.row(r);
    if (canonical_pivot(row) < 0) {
      truth[r].assign(row.size(), 0.0);  // degenerate all-zero neuron
    } else {
      truth[r] = canonical_signature(row);
    }
  }

  struct Candidate {
    double err;
    int row;
    int cluster;
  };
  std::vector<Candidate> candidates;
  for (int r = 0; r < rows; ++r) {
    double truth_scale = 0.0;
    for (double v : truth[r]) truth_scale = std::max(truth_scale, std::abs(v));
    truth_scale = std::max(truth_scale, 1.0);
    for (std::size_t c = 0; c < report.signatures.size(); ++c) {
      if (report.signatures[c].size() != truth[r].size()) continue;
      candidates.push_back(
          {max_norm_distance(truth[r], report.signatures[c]) / truth_scale, r,
           static_cast<int>(c)});
    }
  }
  std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    return std::tie(a.err, a.row, a.cluster) < std::tie(b.err, b.row, b.cluster);
  });

  MatchMetrics metrics;
  metrics.per_neuron_errors.assign(rows, std::numeric_limits<double>::infinity());
  metrics.matched_cluster.assign(rows, -1);
  std::vector<bool> row_used(rows, false);
  std::vector<bool> cluster_used(report.signatures.size(), false);
  for (const auto& cand : candidates) {
    if (row_used[cand.row] || cluster_used[cand.cluster]) continue;
    row_used[cand.row] = true;
    cluster_used[cand.cluster] = true;
    metrics.per_neuron_errors[cand.row] = cand.err;
    metrics.matched_cluster[cand.row] = cand.cluster;
  }
  metrics.max_error = 0.0;
  bool all_matched = static_cast<int>(report.signatures.size()) == rows;
  for (int r = 0; r < rows; ++r) {
    if (metrics.matched_cluster[r] < 0) all_matched = false;
    metrics.max_error = std::max(metrics.max_error, metrics.per_neuron_errors[r]);
  }
  metrics.faithful = all_matched && metrics.max_error < tol;
  report.match_errors = metrics.per_neuron_errors;
  return metrics;
}

}  // namespace sigguard
