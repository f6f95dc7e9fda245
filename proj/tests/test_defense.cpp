#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <set>

#include "sigguard/defense.hpp"
#include "sigguard/rng.hpp"

using namespace sigguard;

namespace {

// Elementwise-loop oracle for the pairwise similarity sum.
double loop_similarity(const Matrix& w, const std::vector<std::pair<int, int>>& pairs) {
  double acc = 0.0;
  for (auto [i, j] : pairs) {
    for (int c = 0; c < w.cols; ++c) {
      acc += (w.at(i, c) - w.at(j, c)) * (w.at(i, c) - w.at(j, c));
    }
  }
  return acc;
}

Matrix from_rows(const std::vector<std::vector<double>>& rows) {
  Matrix m(static_cast<int>(rows.size()), static_cast<int>(rows.front().size()));
  for (int r = 0; r < m.rows; ++r) {
    for (int c = 0; c < m.cols; ++c) m.at(r, c) = rows[r][c];
  }
  return m;
}

PairSelection one_pair() {
  PairSelection sel;
  sel.pairs = {{0, 1}};
  return sel;
}

}  // namespace

TEST_CASE("layer_similarity_loss basic values") {
  SUBCASE("identical rows give zero") {
    const Matrix w = from_rows({{0.3, -0.2, 1.0}, {0.3, -0.2, 1.0}});
    CHECK(layer_similarity_loss(w, one_pair(), false, {}) == 0.0);
  }
  SUBCASE("unit rows") {
    const Matrix w = from_rows({{1, 0, 0}, {0, 1, 0}});
    CHECK(layer_similarity_loss(w, one_pair(), false, {}) == doctest::Approx(2.0));
  }
  SUBCASE("worked three-input example against the loop oracle") {
    const Matrix w = from_rows({{1, 2, 3}, {2, 2, 1}});
    const double got = layer_similarity_loss(w, one_pair(), false, {});
    CHECK(got == doctest::Approx(5.0));  // (1-2)^2 + (2-2)^2 + (3-1)^2
    CHECK(got == doctest::Approx(loop_similarity(w, one_pair().pairs)));
  }
  SUBCASE("bias flag adds squared bias differences") {
    const Matrix w = from_rows({{1, 0}, {1, 0}});
    const std::vector<double> biases{0.5, -0.5};
    CHECK(layer_similarity_loss(w, one_pair(), true, biases) == doctest::Approx(1.0));
  }
}

TEST_CASE("total_similarity_loss over a <3,2,2,1> network") {
  MLPModel m;
  m.architecture.layer_sizes = {3, 2, 2, 1};
  m.weights = {from_rows({{1, 2, 3}, {2, 2, 1}}), from_rows({{0.5, 1.0}, {1.5, -1.0}}),
               from_rows({{1.0, 1.0}})};
  m.biases = {{0, 0}, {0, 0}, {0}};

  DefenseConfig cfg;
  cfg.lambda_similarity = 1.0;
  cfg.layer_scope = LayerScope::kAllLayers;

  const double layer1 = 5.0;                        // (1-2)^2 + 0 + (3-1)^2
  const double layer2 = 1.0 + 4.0;                  // (0.5-1.5)^2 + (1-(-1))^2
  CHECK(total_similarity_loss(m, cfg) == doctest::Approx(layer1 + layer2));

  cfg.layer_scope = LayerScope::kFirstLayer;
  CHECK(total_similarity_loss(m, cfg) == doctest::Approx(layer1));

  // Output layer weights never participate: widen the output and make its
  // rows wildly different; first-layer scope stays unchanged.
  cfg.layer_scope = LayerScope::kAllLayers;
  MLPModel wide = m;
  wide.architecture.layer_sizes = {3, 2, 2, 2};
  wide.weights[2] = from_rows({{1.0, 1.0}, {-9.0, 9.0}});
  wide.biases[2] = {0, 0};
  CHECK(total_similarity_loss(wide, cfg) == doctest::Approx(layer1 + layer2));
}

TEST_CASE("total_similarity_loss edge cases") {
  MLPModel narrow;
  narrow.architecture.layer_sizes = {2, 1, 1, 1};
  narrow.weights = {from_rows({{1, 2}}), from_rows({{3}}), from_rows({{4}})};
  narrow.biases = {{0}, {0}, {0}};
  DefenseConfig cfg;
  cfg.layer_scope = LayerScope::kAllLayers;
  CHECK(total_similarity_loss(narrow, cfg) == 0.0);  // no pairs anywhere

  DefenseConfig bad;
  bad.layer_scope = LayerScope::kExplicit;
  bad.explicit_layers = {5};
  CHECK_THROWS_AS(total_similarity_loss(narrow, bad), std::out_of_range);
}

TEST_CASE("select_defended_pairs") {
  SUBCASE("all pairs of eight neurons") {
    const auto sel = select_defended_pairs(8, PairMode::kAllPairs, 1.0, 0);
    CHECK(sel.pairs.size() == 28);
    std::set<std::pair<int, int>> unique(sel.pairs.begin(), sel.pairs.end());
    CHECK(unique.size() == 28);
  }
  SUBCASE("half of the pairs, reproducible") {
    const auto a = select_defended_pairs(8, PairMode::kAllPairs, 0.5, 0);
    const auto b = select_defended_pairs(8, PairMode::kAllPairs, 0.5, 0);
    CHECK(a.pairs.size() == 14);
    CHECK(a.pairs == b.pairs);
    const auto c = select_defended_pairs(8, PairMode::kAllPairs, 0.5, 1);
    CHECK(c.pairs.size() == 14);
    CHECK(a.pairs != c.pairs);
  }
  SUBCASE("chain mode lists adjacent pairs") {
    const auto sel = select_defended_pairs(5, PairMode::kChain, 1.0, 99);
    const std::vector<std::pair<int, int>> expect{{0, 1}, {1, 2}, {2, 3}, {3, 4}};
    CHECK(sel.pairs == expect);
  }
  SUBCASE("degenerate width") {
    CHECK(select_defended_pairs(1, PairMode::kAllPairs, 1.0, 0).pairs.empty());
    CHECK(select_defended_pairs(0, PairMode::kChain, 0.5, 0).pairs.empty());
  }
}

TEST_CASE("analytic gradient matches central finite differences") {
  rng::Stream stream(21);
  MLPModel m;
  m.architecture.layer_sizes = {3, 4, 2, 1};
  m.weights = {Matrix(4, 3), Matrix(2, 4), Matrix(1, 2)};
  m.biases = {{0, 0, 0, 0}, {0, 0}, {0}};
  for (auto& w : m.weights) {
    for (double& v : w.data) v = stream.uniform(-1, 1);
  }
  for (auto& b : m.biases) {
    for (double& v : b) v = stream.uniform(-1, 1);
  }
  DefenseConfig cfg;
  cfg.lambda_similarity = 1.0;
  cfg.layer_scope = LayerScope::kAllLayers;
  cfg.include_biases = true;

  std::vector<Matrix> gw;
  std::vector<std::vector<double>> gb;
  total_similarity_loss(m, cfg, &gw, &gb);

  const double h = 1e-6;
  for (std::size_t l = 0; l < m.weights.size(); ++l) {
    for (std::size_t k = 0; k < m.weights[l].data.size(); ++k) {
      MLPModel plus = m, minus = m;
      plus.weights[l].data[k] += h;
      minus.weights[l].data[k] -= h;
      const double fd =
          (total_similarity_loss(plus, cfg) - total_similarity_loss(minus, cfg)) / (2 * h);
      const double analytic = gw[l].data[k];
      CHECK(std::abs(fd - analytic) <= 1e-6 * std::max(1.0, std::abs(analytic)));
    }
    for (std::size_t k = 0; k < m.biases[l].size(); ++k) {
      MLPModel plus = m, minus = m;
      plus.biases[l][k] += h;
      minus.biases[l][k] -= h;
      const double fd =
          (total_similarity_loss(plus, cfg) - total_similarity_loss(minus, cfg)) / (2 * h);
      CHECK(std::abs(fd - gb[l][k]) <= 1e-6 * std::max(1.0, std::abs(gb[l][k])));
    }
  }
}

TEST_CASE("nonnegativity and zero only at identical selected pairs") {
  rng::Stream stream(5);
  for (int trial = 0; trial < 50; ++trial) {
    Matrix w(4, 3);
    for (double& v : w.data) v = stream.uniform(-2, 2);
    const auto sel = select_defended_pairs(4, PairMode::kAllPairs, 1.0, 0);
    const double loss = layer_similarity_loss(w, sel, false, {});
    CHECK(loss >= 0.0);
    bool all_equal = true;
    for (auto [i, j] : sel.pairs) {
      for (int c = 0; c < w.cols; ++c) {
        if (w.at(i, c) != w.at(j, c)) all_equal = false;
      }
    }
    CHECK((loss == 0.0) == all_equal);
  }
  const Matrix equal = from_rows({{1, 2}, {1, 2}, {1, 2}});
  const auto sel = select_defended_pairs(3, PairMode::kAllPairs, 1.0, 0);
  CHECK(layer_similarity_loss(equal, sel, false, {}) == 0.0);
}

TEST_CASE("all-pairs loss is invariant under neuron permutation") {
  rng::Stream stream(31);
  Matrix w(5, 4);
  for (double& v : w.data) v = stream.uniform(-1, 1);
  const auto sel = select_defended_pairs(5, PairMode::kAllPairs, 1.0, 0);
  const double base = layer_similarity_loss(w, sel, false, {});

  std::vector<int> perm{4, 2, 0, 3, 1};
  Matrix p(5, 4);
  for (int r = 0; r < 5; ++r) {
    for (int c = 0; c < 4; ++c) p.at(r, c) = w.at(perm[r], c);
  }
  CHECK(layer_similarity_loss(p, sel, false, {}) == doctest::Approx(base).epsilon(1e-12));
}
