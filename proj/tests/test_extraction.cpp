#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <atomic>
#include <cmath>

#include "sigguard/extraction.hpp"
#include "sigguard/mlp.hpp"
#include "sigguard/rng.hpp"

using namespace sigguard;

namespace {

MLPModel relu_net_2_2_1(std::vector<double> a, std::vector<double> b, std::vector<double> c,
                        std::vector<double> hidden_biases = {0, 0}) {
  MLPModel m;
  m.architecture.layer_sizes = {2, 2, 1};
  Matrix w1(2, 2);
  w1.at(0, 0) = a[0];
  w1.at(0, 1) = a[1];
  w1.at(1, 0) = b[0];
  w1.at(1, 1) = b[1];
  Matrix w2(1, 2);
  w2.at(0, 0) = c[0];
  w2.at(0, 1) = c[1];
  m.weights = {w1, w2};
  m.biases = {hidden_biases, {0.0}};
  return m;
}

MLPModel single_neuron_model() {
  MLPModel m;
  m.architecture.layer_sizes = {2, 1, 1};
  Matrix w1(1, 2);
  w1.at(0, 0) = 1.0;
  w1.at(0, 1) = 0.0;
  Matrix w2(1, 1);
  w2.at(0, 0) = 1.0;
  m.weights = {w1, w2};
  m.biases = {{-0.5}, {0.0}};
  return m;
}

MLPModel zero_bias_random(const Architecture& arch, std::uint64_t seed) {
  MLPModel m = init_model(arch, seed);
  for (auto& b : m.biases) std::fill(b.begin(), b.end(), 0.0);
  return m;
}

AttackConfig symmetric_box_config(int dim, std::uint64_t seed, double cluster_tol = 1e-5) {
  AttackConfig cfg;
  cfg.seed = seed;
  cfg.cluster_tolerance = cluster_tol;
  cfg.search_box.assign(dim, {-1.0, 1.0});
  return cfg;
}

}  // namespace

TEST_CASE("find_critical_points pins the single-neuron hyperplane") {
  const MLPModel m = single_neuron_model();
  Oracle oracle(m, 0, QueryBudget::queries(200000));
  AttackConfig cfg;
  cfg.line_count_per_round = 32;
  const auto found = find_critical_points(oracle, cfg, 8);
  REQUIRE(!found.points.empty());
  CHECK(!found.budget_exhausted);
  for (const auto& cp : found.points) {
    CHECK(std::abs(cp.x_star[0] - 0.5) <= 1e-8);  // plane is x0 = 0.5
    CHECK(cp.refinement_residual < cfg.refine_tolerance / 10.0);
  }
}

TEST_CASE("a model that is linear inside the box yields no critical points") {
  // Hidden neuron permanently active on [0,1]^2 thanks to a large bias.
  MLPModel m = single_neuron_model();
  m.biases[0][0] = 10.0;
  Oracle oracle(m, 0, QueryBudget::queries(100000));
  AttackConfig cfg;
  cfg.line_count_per_round = 64;
  const auto found = find_critical_points(oracle, cfg, 100);
  CHECK(found.points.empty());
  CHECK(!found.budget_exhausted);
}

TEST_CASE("certified points sit on first-layer hyperplanes (white-box)") {
  const MLPModel m = zero_bias_random(Architecture{{4, 3, 1}}, 11);
  Oracle oracle(m, 0, QueryBudget::queries(2000000));
  AttackConfig cfg = symmetric_box_config(4, 3);
  cfg.line_count_per_round = 200;
  const auto found = find_critical_points(oracle, cfg, 1000);
  REQUIRE(found.points.size() >= 3);
  for (const auto& cp : found.points) {
    const auto trace = forward_hidden_states(m, cp.x_star);
    double min_pre = std::numeric_limits<double>::infinity();
    for (double pre : trace.pre_activations[0]) min_pre = std::min(min_pre, std::abs(pre));
    CHECK(min_pre < 1e-6);
  }
}

TEST_CASE("directional derivative pair on the worked two-neuron instance") {
  const MLPModel m = relu_net_2_2_1({2, 1}, {-1, 3}, {1, 2});
  Oracle oracle(m, 0, QueryBudget::queries(10000));
  const std::vector<double> x_star{-1.0, 2.0};  // on neuron A's plane; B active nearby

  SUBCASE("axis 1 isolates c1*a1") {
    const auto [ap, am] = directional_derivative_pair(oracle, x_star, 0, 1e-6);
    CHECK(ap == doctest::Approx(1.0 * 2 + 2.0 * -1).epsilon(1e-6));  // c1 a1 + c2 b1 = 0
    CHECK(am == doctest::Approx(-(2.0 * -1)).epsilon(1e-6));         // -c2 b1 = 2
    CHECK(ap + am == doctest::Approx(2.0).epsilon(1e-6));            // c1 a1
  }
  SUBCASE("axis 2 isolates c1*a2") {
    const auto [ap, am] = directional_derivative_pair(oracle, x_star, 1, 1e-6);
    CHECK(ap + am == doctest::Approx(1.0).epsilon(1e-6));  // c1 a2
  }
  SUBCASE("no flip inside a linear region cancels exactly") {
    const std::vector<double> interior{5.0, 5.0};
    const auto [ap, am] = directional_derivative_pair(oracle, interior, 0, 1e-6);
    CHECK(ap + am == doctest::Approx(0.0).epsilon(1e-8));
  }
}

TEST_CASE("directional derivative pair flags region crossings") {
  // The second plane crosses axis 0 at x0 = 1.5e-3, squarely between the
  // probe points at epsilon and 2 epsilon.
  const MLPModel m = relu_net_2_2_1({1, 0}, {1, 0}, {1, 1}, {0.0, -1.5e-3});
  Oracle oracle(m, 0, QueryBudget::queries(10000));
  const std::vector<double> on_first{0.0, 0.3};
  CHECK_THROWS_AS(directional_derivative_pair(oracle, on_first, 0, 1e-3), RegionCrossingError);
  // A small enough epsilon keeps both probes inside the first neuron's regions.
  const auto [ap, am] = directional_derivative_pair(oracle, on_first, 0, 1e-6);
  CHECK(ap + am == doctest::Approx(1.0).epsilon(1e-6));  // isolates c1 * w1_0
}

TEST_CASE("recover_signature") {
  SUBCASE("isolated neuron (2,1) normalizes to (1, 0.5)") {
    const MLPModel m = relu_net_2_2_1({2, 1}, {-1, 3}, {1, 2});
    Oracle oracle(m, 0, QueryBudget::queries(10000));
    CriticalPoint cp;
    cp.x_star = {-1.0, 2.0};
    const auto sig = recover_signature(oracle, cp, symmetric_box_config(2, 0));
    CHECK(sig.pivot_index == 0);
    CHECK(sig.values[0] == 1.0);
    CHECK(sig.values[1] == doctest::Approx(0.5).epsilon(1e-8));
  }
  SUBCASE("axis-aligned neuron gives signature (1, 0)") {
    const MLPModel m = single_neuron_model();
    Oracle oracle(m, 0, QueryBudget::queries(10000));
    CriticalPoint cp;
    cp.x_star = {0.5, 0.25};
    AttackConfig cfg;  // default [0,1]^2 box
    const auto sig = recover_signature(oracle, cp, cfg);
    CHECK(sig.values[0] == 1.0);
    CHECK(std::abs(sig.values[1]) < 1e-8);
  }
  SUBCASE("coincident-plane neurons yield the mixed signature") {
    // b = 2a shares a's critical hyperplane; the sum picks up both neurons.
    const MLPModel m = relu_net_2_2_1({2, 1}, {4, 2}, {0.7, 0.5});
    Oracle oracle(m, 0, QueryBudget::queries(10000));
    CriticalPoint cp;
    cp.x_star = {-1.0, 2.0};
    const auto sig = recover_signature(oracle, cp, symmetric_box_config(2, 0));
    const double expect = (0.7 * 1 + 0.5 * 2) / (0.7 * 2 + 0.5 * 4);  // (c1 a2 + c2 b2)/(c1 a1 + c2 b1)
    CHECK(sig.values[1] == doctest::Approx(expect).epsilon(1e-6));
  }
  SUBCASE("a flat function raises AllZero") {
    Oracle oracle(2, [](std::span<const double>) { return 0.0; }, QueryBudget::queries(1000));
    CriticalPoint cp;
    cp.x_star = {0.5, 0.5};
    AttackConfig cfg;
    CHECK_THROWS_AS(recover_signature(oracle, cp, cfg), AllZeroError);
  }
}

TEST_CASE("signature scale invariance") {
  // Rescale one neuron (w -> 2w, bias -> 2b) and halve its outgoing weight:
  // same function shape, identical critical plane, same normalized signature.
  const MLPModel base = relu_net_2_2_1({2, 1}, {-1, 3}, {1, 2}, {0.4, 0.2});
  MLPModel scaled = base;
  scaled.weights[0].at(0, 0) *= 2.0;
  scaled.weights[0].at(0, 1) *= 2.0;
  scaled.biases[0][0] *= 2.0;
  scaled.weights[1].at(0, 0) /= 2.0;

  // x* on neuron A's plane: 2 x0 + x1 + 0.4 = 0.
  const std::vector<double> x_star{-1.0, 1.6};
  CriticalPoint cp;
  cp.x_star = x_star;
  Oracle o1(base, 0, QueryBudget::queries(10000));
  Oracle o2(scaled, 0, QueryBudget::queries(10000));
  const auto s1 = recover_signature(o1, cp, symmetric_box_config(2, 0));
  const auto s2 = recover_signature(o2, cp, symmetric_box_config(2, 0));
  REQUIRE(s1.values.size() == s2.values.size());
  for (std::size_t i = 0; i < s1.values.size(); ++i) {
    CHECK(s1.values[i] == doctest::Approx(s2.values[i]).epsilon(1e-8));
  }
}

TEST_CASE("cluster_signatures") {
  const auto mk = [](std::vector<double> v) {
    Signature s;
    s.values = std::move(v);
    s.pivot_index = 0;
    return s;
  };
  SUBCASE("jittered copies collapse to one cluster") {
    std::vector<Signature> sigs;
    rng::Stream stream(3);
    for (int i = 0; i < 10; ++i) {
      sigs.push_back(mk({1.0, 0.5 + stream.uniform(-1e-9, 1e-9)}));
    }
    const auto clusters = cluster_signatures(sigs, 1e-6);
    REQUIRE(clusters.size() == 1);
    CHECK(clusters[0].members.size() == 10);
    CHECK(clusters[0].spread <= 1e-6);
    CHECK(clusters[0].centroid[1] == doctest::Approx(0.5).epsilon(1e-7));
  }
  SUBCASE("distinct signatures stay apart") {
    const auto clusters = cluster_signatures({mk({1.0, 0.5}), mk({1.0, -0.5})}, 1e-3);
    CHECK(clusters.size() == 2);
  }
  SUBCASE("white-box cluster count for a four-neuron layer") {
    const MLPModel m = zero_bias_random(Architecture{{8, 4, 1}}, 5);
    std::vector<Signature> sigs;
    rng::Stream stream(9);
    for (int copy = 0; copy < 3; ++copy) {
      for (int r = 0; r < 4; ++r) {
        std::vector<double> v(m.weights[0].row(r).begin(), m.weights[0].row(r).end());
        const double scale = stream.uniform(0.5, 2.0);  // unknown per-sample scale
        for (double& x : v) x *= scale;
        sigs.push_back(mk(std::move(v)));
      }
    }
    const auto clusters = cluster_signatures(sigs, 1e-5);
    CHECK(clusters.size() == 4);
  }
  SUBCASE("deterministic across input order") {
    std::vector<Signature> a{mk({1.0, 0.3}), mk({1.0, -0.7}), mk({1.0, 0.3000000001})};
    std::vector<Signature> b{a[2], a[0], a[1]};
    const auto ca = cluster_signatures(a, 1e-6);
    const auto cb = cluster_signatures(b, 1e-6);
    REQUIRE(ca.size() == cb.size());
    for (std::size_t i = 0; i < ca.size(); ++i) CHECK(ca[i].centroid == cb[i].centroid);
  }
}

TEST_CASE("run_layer1_attack on undefended random models") {
  for (const std::uint64_t seed : {1ULL, 2ULL}) {
    const MLPModel m = zero_bias_random(Architecture{{8, 4, 1}}, seed);
    Oracle oracle(m, 0, QueryBudget::queries(1000000));
    AttackConfig cfg = symmetric_box_config(8, seed);
    AttackReport report = run_layer1_attack(oracle, 4, cfg);
    CHECK(report.verdict == Verdict::kSuccess);
    CHECK(report.clusters_found == 4);
    const auto metrics = evaluate_against_ground_truth(report, m, 1e-4);
    CHECK(metrics.faithful);
    CHECK(metrics.max_error < 1e-4);
  }
}

TEST_CASE("identical first-layer rows stall the attack at one cluster") {
  const MLPModel m = relu_net_2_2_1({1, 1}, {1, 1}, {0.6, 0.4}, {-0.5, -0.5});
  Oracle oracle(m, 0, QueryBudget::queries(50000));
  AttackConfig cfg;  // default box [0,1]^2; the shared plane x0+x1=0.5 crosses it
  cfg.seed = 4;
  const AttackReport report = run_layer1_attack(oracle, 2, cfg);
  CHECK(report.verdict == Verdict::kFailure);
  CHECK(report.clusters_found == 1);
  CHECK(report.failure_reason == "cluster_deficit");
}

TEST_CASE("zero query budget fails immediately with reason budget") {
  const MLPModel m = single_neuron_model();
  Oracle oracle(m, 0, QueryBudget::queries(0));
  AttackConfig cfg;
  const AttackReport report = run_layer1_attack(oracle, 1, cfg);
  CHECK(report.verdict == Verdict::kFailure);
  CHECK(report.failure_reason == "budget");
  CHECK(report.stats.queries_used == 0);
}

TEST_CASE("an unbounded oracle is rejected for attack runs") {
  const MLPModel m = single_neuron_model();
  Oracle oracle(m, 0, QueryBudget::unlimited());
  AttackConfig cfg;
  CHECK_THROWS_AS(run_layer1_attack(oracle, 1, cfg), std::invalid_argument);
}

TEST_CASE("attack is a pure black box: queries equal total evaluations") {
  const MLPModel m = zero_bias_random(Architecture{{4, 2, 1}}, 6);
  std::atomic<std::uint64_t> evaluations{0};
  Oracle oracle(4,
                [&, m](std::span<const double> x) {
                  evaluations.fetch_add(1);
                  return forward(m, x)[0];
                },
                QueryBudget::queries(500000));
  AttackConfig cfg = symmetric_box_config(4, 8);
  const AttackReport report = run_layer1_attack(oracle, 2, cfg);
  CHECK(report.stats.queries_used == evaluations.load());
  CHECK(report.stats.queries_used > 0);
}

TEST_CASE("sealed interface: the attack runs against a parameter-free stand-in") {
  // Hand-coded piecewise-linear black box; no MLPModel anywhere.
  Oracle oracle(2,
                [](std::span<const double> x) {
                  const double h1 = std::max(0.0, x[0] + x[1] - 0.5);
                  const double h2 = std::max(0.0, x[0] - x[1] + 0.1);
                  return h1 + 0.3 * h2;
                },
                QueryBudget::queries(200000));
  AttackConfig cfg;
  cfg.seed = 12;
  const AttackReport report = run_layer1_attack(oracle, 2, cfg);
  CHECK(report.verdict == Verdict::kSuccess);
  REQUIRE(report.clusters_found == 2);
  // Canonical forms of (1,1) and (1,-1).
  bool saw_sum = false, saw_diff = false;
  for (const auto& c : report.signatures) {
    if (std::abs(c[1] - 1.0) < 1e-6) saw_sum = true;
    if (std::abs(c[1] + 1.0) < 1e-6) saw_diff = true;
  }
  CHECK(saw_sum);
  CHECK(saw_diff);
}

TEST_CASE("enlarging the budget never flips success into failure") {
  const MLPModel m = zero_bias_random(Architecture{{8, 4, 1}}, 3);
  AttackConfig cfg = symmetric_box_config(8, 5);
  std::optional<std::uint64_t> succeeded_at;
  for (const std::uint64_t budget : {2000ULL, 8000ULL, 32000ULL, 128000ULL, 512000ULL}) {
    Oracle oracle(m, 0, QueryBudget::queries(budget));
    const AttackReport report = run_layer1_attack(oracle, 4, cfg);
    if (succeeded_at) {
      CHECK(report.verdict == Verdict::kSuccess);  // no Success -> Failure flip
    } else if (report.verdict == Verdict::kSuccess) {
      succeeded_at = budget;
    }
  }
  CHECK(succeeded_at.has_value());
}

TEST_CASE("evaluate_against_ground_truth") {
  const MLPModel m = zero_bias_random(Architecture{{4, 3, 1}}, 2);
  SUBCASE("exact centroids give zero errors") {
    AttackReport report;
    report.clusters_found = 3;
    for (int r = 0; r < 3; ++r) {
      report.signatures.push_back(canonical_signature(m.weights[0].row(r)));
    }
    const auto metrics = evaluate_against_ground_truth(report, m, 1e-8);
    CHECK(metrics.faithful);
    CHECK(metrics.max_error == 0.0);
  }
  SUBCASE("a missing cluster breaks the bijection") {
    AttackReport report;
    report.clusters_found = 2;
    for (int r = 0; r < 2; ++r) {
      report.signatures.push_back(canonical_signature(m.weights[0].row(r)));
    }
    const auto metrics = evaluate_against_ground_truth(report, m, 1e-8);
    CHECK(!metrics.faithful);
  }
}

TEST_CASE("partial results are flagged when the budget dies mid-search") {
  const MLPModel m = zero_bias_random(Architecture{{8, 4, 1}}, 9);
  Oracle oracle(m, 0, QueryBudget::queries(300));
  AttackConfig cfg = symmetric_box_config(8, 2);
  const auto found = find_critical_points(oracle, cfg, 100);
  CHECK(found.budget_exhausted);
}
