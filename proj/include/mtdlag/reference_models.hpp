#pragma once

#include "model.hpp"

namespace mtdlag {

// Binary two-lag models used throughout the simulation benchmarks. Kernels
// are written as rows b -> (p(0|b), p(1|b)).

/// lambda_0 = 0.4, lambda_{-i} = 0.2, lambda_{-j} = 0.4,
/// p_{-i}(0|0) = 0.3, p_{-i}(0|1) = 0.6, p_{-j}(0|0) = 0.5, p_{-j}(0|1) = 0.9.
inline MtdModel benchmark_model_1(int d, int i, int j) {
  require(i >= 1 && j >= 1 && i != j && i <= d && j <= d, "benchmark_model_1: lags must be distinct in [1, d]");
  auto m = MtdModel::independent(Alphabet::binary(), d, {0.5, 0.5});
  m.lambda[0] = 0.4;
  m.set_lag(-i, 0.2, {{0.3, 0.7}, {0.6, 0.4}});
  m.set_lag(-j, 0.4, {{0.5, 0.5}, {0.9, 0.1}});
  return m;
}

/// lambda_0 = 0.2, lambda_{-i} = lambda_{-j} = 0.4,
/// p_{-i}(0|0) = 0.7, p_{-i}(0|1) = 0.3, p_{-j}(0|0) = 0.3, p_{-j}(0|1) = 0.7.
inline MtdModel benchmark_model_2(int d, int i, int j) {
  require(i >= 1 && j >= 1 && i != j && i <= d && j <= d, "benchmark_model_2: lags must be distinct in [1, d]");
  auto m = MtdModel::independent(Alphabet::binary(), d, {0.5, 0.5});
  m.lambda[0] = 0.2;
  m.set_lag(-i, 0.4, {{0.7, 0.3}, {0.3, 0.7}});
  m.set_lag(-j, 0.4, {{0.3, 0.7}, {0.7, 0.3}});
  return m;
}

/// Binary family with one active lag j:
///   p(1 | x) = (1 - weight) / 2 + weight * p(1 | x_j).
inline MtdModel single_lag_model(int d, Lag j, double weight, double p1_given1, double p1_given0) {
  auto m = MtdModel::independent(Alphabet::binary(), d, {0.5, 0.5});
  m.lambda[0] = 1.0 - weight;
  m.set_lag(j, weight, {{1.0 - p1_given0, p1_given0}, {1.0 - p1_given1, p1_given1}});
  return m;
}

}  // namespace mtdlag
