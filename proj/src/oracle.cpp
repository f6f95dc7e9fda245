#include "sigguard/oracle.hpp"

#include <cmath>

namespace sigguard {

Oracle::Oracle(const MLPModel& model, int output_coordinate, QueryBudget budget)
    : input_dim_(model.architecture.input_dim()),
      budget_(budget),
      start_(std::chrono::steady_clock::now()) {
  model.check_consistent();
  if (output_coordinate < 0 || output_coordinate >= model.architecture.output_dim()) {
    throw std::invalid_argument("oracle output coordinate out of range");
  }
  // The oracle owns a private copy; the attack side never sees parameters.
  fn_ = [snapshot = model, output_coordinate](std::span<const double> x) {
    return forward(snapshot, x)[output_coordinate];
  };
}

Oracle::Oracle(int input_dim, std::function<double(std::span<const double>)> fn,
               QueryBudget budget)
    : input_dim_(input_dim),
      fn_(std::move(fn)),
      budget_(budget),
      start_(std::chrono::steady_clock::now()) {
  if (input_dim < 1) throw std::invalid_argument("oracle input dimension must be >= 1");
}

double Oracle::query(std::span<const double> x) {
  if (static_cast<int>(x.size()) != input_dim_) {
    throw std::invalid_argument("oracle query dimension mismatch");
  }
  for (double v : x) {
    if (!std::isfinite(v)) throw std::invalid_argument("non-finite oracle query component");
  }
  if (budget_.max_wall_seconds) {
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    if (elapsed > *budget_.max_wall_seconds) {
      throw BudgetExhaustedError("wall-clock budget exhausted");
    }
  }
  if (budget_.max_queries) {
    // Linearizable check-then-count: claim a slot, give it back on rejection.
    const std::uint64_t id = queries_.fetch_add(1, std::memory_order_relaxed);
    if (id >= *budget_.max_queries) {
      queries_.fetch_sub(1, std::memory_order_relaxed);
      throw BudgetExhaustedError("query budget exhausted");
    }
  } else {
    queries_.fetch_add(1, std::memory_order_relaxed);
  }
  return fn_(x);
}

OracleStats Oracle::stats() const {
  OracleStats s;
  s.queries_used = queries_.load(std::memory_order_relaxed);
  s.elapsed_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  return s;
}

}  // namespace sigguard
