#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>

#include "sigguard/mlp.hpp"

namespace sigguard {

struct QueryBudget {
  std::optional<std::uint64_t> max_queries;
  std::optional<double> max_wall_seconds;

  static QueryBudget unlimited() { return {}; }
  static QueryBudget queries(std::uint64_t n) { return {n, std::nullopt}; }
  bool any_finite() const { return max_queries.has_value() || max_wall_seconds.has_value(); }
};

struct OracleStats {
  std::uint64_t queries_used = 0;
  double elapsed_seconds = 0.0;
};

class BudgetExhaustedError : public std::runtime_error {
 public:
  explicit BudgetExhaustedError(const std::string& what) : std::runtime_error(what) {}
};

// The only interface the extraction code may touch. Wraps either a model
// (exposing one output coordinate as the scalar logit) or an arbitrary
// black-box function; counts queries atomically and enforces the budget.
class Oracle {
 public:
  Oracle(const MLPModel& model, int output_coordinate = 0,
         QueryBudget budget = QueryBudget::unlimited());

  Oracle(int input_dim, std::function<double(std::span<const double>)> fn,
         QueryBudget budget = QueryBudget::unlimited());

  // Returns the scalar logit at x. Throws BudgetExhaustedError once the
  // budget is spent (the failed call is not counted) and std::invalid_argument
  // on dimension mismatch or non-finite input.
  double query(std::span<const double> x);

  OracleStats stats() const;
  int input_dim() const { return input_dim_; }
  const QueryBudget& budget() const { return budget_; }

 private:
  int input_dim_;
  std::function<double(std::span<const double>)> fn_;
  QueryBudget budget_;
  std::atomic<std::uint64_t> queries_{0};
  std::chrono::steady_clock::time_point start_;
};

}  // namespace sigguard
