#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <thread>
#include <vector>

#include "sigguard/oracle.hpp"

using namespace sigguard;

namespace {

MLPModel zero_bias_model() {
  MLPModel m;
  m.architecture.layer_sizes = {2, 2, 1};
  Matrix w1(2, 2);
  w1.at(0, 0) = 1.0;
  w1.at(1, 1) = 1.0;
  Matrix w2(1, 2);
  w2.at(0, 0) = 1.0;
  w2.at(0, 1) = 1.0;
  m.weights = {w1, w2};
  m.biases = {{0, 0}, {0}};
  return m;
}

}  // namespace

TEST_CASE("query counts and determinism") {
  Oracle oracle(zero_bias_model(), 0, QueryBudget::queries(10));
  const std::vector<double> x{0.3, 0.4};
  const double a = oracle.query(x);
  const double b = oracle.query(x);
  CHECK(a == b);
  CHECK(oracle.stats().queries_used == 2);
}

TEST_CASE("zero input on a zero-bias model") {
  Oracle oracle(zero_bias_model(), 0, QueryBudget::queries(10));
  CHECK(oracle.query(std::vector<double>{0.0, 0.0}) == 0.0);
  CHECK(oracle.stats().queries_used == 1);
}

TEST_CASE("budget exhaustion") {
  Oracle oracle(zero_bias_model(), 0, QueryBudget::queries(3));
  const std::vector<double> x{0.1, 0.1};
  for (int i = 0; i < 3; ++i) oracle.query(x);
  CHECK_THROWS_AS(oracle.query(x), BudgetExhaustedError);
  CHECK_THROWS_AS(oracle.query(x), BudgetExhaustedError);
  CHECK(oracle.stats().queries_used == 3);  // rejected calls are not counted
}

TEST_CASE("validation errors") {
  Oracle oracle(zero_bias_model(), 0, QueryBudget::queries(5));
  CHECK_THROWS_AS(oracle.query(std::vector<double>{1.0}), std::invalid_argument);
  const double inf = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(oracle.query(std::vector<double>{inf, 0.0}), std::invalid_argument);
  CHECK(oracle.stats().queries_used == 0);
  CHECK_THROWS_AS(Oracle(zero_bias_model(), 3, QueryBudget::queries(1)), std::invalid_argument);
}

TEST_CASE("functional stand-in oracle") {
  Oracle oracle(3, [](std::span<const double> x) { return x[0] + 2.0 * x[1] - x[2]; },
                QueryBudget::queries(4));
  CHECK(oracle.query(std::vector<double>{1.0, 1.0, 1.0}) == doctest::Approx(2.0));
  CHECK(oracle.input_dim() == 3);
}

TEST_CASE("concurrent queries count exactly and never overshoot") {
  const std::uint64_t budget = 1000;
  Oracle oracle(2, [](std::span<const double> x) { return x[0]; }, QueryBudget::queries(budget));
  constexpr int kThreads = 8;
  std::vector<std::thread> workers;
  std::atomic<std::uint64_t> accepted{0};
  for (int t = 0; t < kThreads; ++t) {
    workers.emplace_back([&] {
      const std::vector<double> x{0.5, 0.5};
      for (int i = 0; i < 200; ++i) {
        try {
          oracle.query(x);
          accepted.fetch_add(1);
        } catch (const BudgetExhaustedError&) {
          return;
        }
      }
    });
  }
  for (auto& w : workers) w.join();
  CHECK(accepted.load() == budget);
  CHECK(oracle.stats().queries_used == budget);
}
