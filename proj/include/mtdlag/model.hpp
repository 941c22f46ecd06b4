#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"
#include "lag_set.hpp"
#include "rng.hpp"
#include "sequence.hpp"

namespace mtdlag {

using Distribution = std::vector<double>;

/// Row-stochastic |A|x|A| matrix; rows[b][a] = p_j(a | b).
using Kernel = std::vector<Distribution>;

inline constexpr double kProbabilityTolerance = 1e-12;
inline constexpr double kZeroOscillation = 1e-12;

inline double tv_distance(std::span<const double> p, std::span<const double> q) {
  double s = 0.0;
  for (std::size_t a = 0; a < p.size(); ++a) s += std::abs(p[a] - q[a]);
  return 0.5 * s;
}

/// Mixture transition distribution model of order d:
///   p(a | x_{-d:-1}) = lambda_0 p_0(a) + sum_j lambda_j p_j(a | x_j).
///
/// The struct is a plain value; validate_model() reports broken invariants.
struct MtdModel {
  Alphabet alphabet;
  int order = 1;
  /// lambda[0] is the weight of the independent component, lambda[i] the
  /// weight of lag -i.
  std::vector<double> lambda;
  Distribution p0;
  /// kernels[i - 1] is the kernel of lag -i.
  std::vector<Kernel> kernels;

  double weight(Lag j) const { return lambda.at(static_cast<std::size_t>(-j)); }
  const Kernel& kernel(Lag j) const { return kernels.at(static_cast<std::size_t>(-j - 1)); }

  /// Model with lambda_0 = 1 and uniform placeholder kernels on every lag.
  static MtdModel independent(Alphabet alphabet, int order, Distribution p0) {
    const std::size_t k = alphabet.size();
    MtdModel m;
    m.alphabet = std::move(alphabet);
    m.order = order;
    m.lambda.assign(static_cast<std::size_t>(order) + 1, 0.0);
    m.lambda[0] = 1.0;
    m.p0 = std::move(p0);
    m.kernels.assign(static_cast<std::size_t>(order), Kernel(k, Distribution(k, 1.0 / static_cast<double>(k))));
    return m;
  }

  /// Sets lag j's weight and kernel.
  MtdModel& set_lag(Lag j, double weight, Kernel kernel) {
    lambda.at(static_cast<std::size_t>(-j)) = weight;
    kernels.at(static_cast<std::size_t>(-j - 1)) = std::move(kernel);
    return *this;
  }
};

struct Violation {
  std::string what;
  std::string where;
  double residual = 0.0;
};

/// Every broken invariant of the model; empty iff the model is a valid MTD.
inline std::vector<Violation> validate_model(const MtdModel& m) {
  std::vector<Violation> out;
  const std::size_t k = m.alphabet.size();
  if (m.order < 1) {
    out.push_back({"order must be >= 1", "order", static_cast<double>(m.order)});
    return out;
  }
  const auto d = static_cast<std::size_t>(m.order);
  auto check_distribution = [&](std::span<const double> p, const std::string& where,
                                const std::string& sum_label) {
    if (p.size() != k) {
      out.push_back({"length != alphabet size", where, static_cast<double>(p.size())});
      return;
    }
    double s = 0.0;
    for (std::size_t a = 0; a < k; ++a) {
      if (!(p[a] >= 0.0 && p[a] <= 1.0))
        out.push_back({"probability outside [0,1]", where + "[" + std::to_string(a) + "]", p[a]});
      s += p[a];
    }
    if (std::abs(s - 1.0) > kProbabilityTolerance) out.push_back({sum_label, where, s - 1.0});
  };

  if (m.lambda.size() != d + 1) {
    out.push_back({"lambda must have order+1 entries", "lambda", static_cast<double>(m.lambda.size())});
  } else {
    double s = 0.0;
    for (std::size_t i = 0; i <= d; ++i) {
      if (!(m.lambda[i] >= 0.0 && m.lambda[i] <= 1.0))
        out.push_back({"weight outside [0,1]", "lambda[" + std::to_string(-static_cast<int>(i)) + "]",
                       m.lambda[i]});
      s += m.lambda[i];
    }
    if (std::abs(s - 1.0) > kProbabilityTolerance) out.push_back({"weights sum != 1", "lambda", s - 1.0});
  }

  check_distribution(m.p0, "p0", "p0 sum != 1");

  if (m.kernels.size() != d) {
    out.push_back({"one kernel per lag required", "kernels", static_cast<double>(m.kernels.size())});
  } else {
    for (std::size_t i = 0; i < d; ++i) {
      const std::string lag = "kernel[-" + std::to_string(i + 1) + "]";
      if (m.kernels[i].size() != k) {
        out.push_back({"kernel must have |A| rows", lag, static_cast<double>(m.kernels[i].size())});
        continue;
      }
      for (std::size_t b = 0; b < k; ++b)
        check_distribution(m.kernels[i][b], lag + "[" + std::to_string(b) + "]", "row sum != 1");
    }
  }
  return out;
}

inline bool is_valid(const MtdModel& m) { return validate_model(m).empty(); }

inline void require_valid(const MtdModel& m) {
  const auto v = validate_model(m);
  if (!v.empty())
    throw contract_error("invalid MTD model: " + v.front().what + " at " + v.front().where);
}

/// p(. | x_{-d:-1}). `past` is chronological: past[0] = x_{-d}, past[d-1] = x_{-1}.
inline Distribution transition_prob(const MtdModel& m, std::span<const Symbol> past) {
  require(past.size() == static_cast<std::size_t>(m.order),
          "transition_prob: past has length " + std::to_string(past.size()) + ", expected " +
              std::to_string(m.order));
  const std::size_t k = m.alphabet.size();
  Distribution p(k);
  for (std::size_t a = 0; a < k; ++a) p[a] = m.lambda[0] * m.p0[a];
  for (int i = 1; i <= m.order; ++i) {
    const double w = m.lambda[static_cast<std::size_t>(i)];
    if (w == 0.0) continue;
    const Symbol b = past[past.size() - static_cast<std::size_t>(i)];
    require(b < k, "transition_prob: symbol index out of range");
    const auto& row = m.kernels[static_cast<std::size_t>(i - 1)][b];
    for (std::size_t a = 0; a < k; ++a) p[a] += w * row[a];
  }
  return p;
}

struct ModelDiagnostics {
  /// oscillations[i - 1] = delta_{-i}
  std::vector<double> oscillations;
  LagSet relevant;
  /// min over relevant lags; 0 when there are none
  double delta_min = 0.0;
  double tilde_delta_min = 0.0;
  /// 1 - sum of oscillations over relevant lags
  double Delta = 1.0;
  /// min_{a, x_Lambda} p(a | x_Lambda)
  double p_min = 0.0;
  /// cond_means[i - 1][b] = m_{-i}(b) = sum_a a p_{-i}(a | b)
  std::vector<std::vector<double>> cond_means;
  /// lip_norms[i - 1] = ||m_{-i}||_Lip
  std::vector<double> lip_norms;

  double oscillation(Lag j) const { return oscillations.at(static_cast<std::size_t>(-j - 1)); }
};

/// Largest total-variation distance between two rows of a kernel.
inline double kernel_spread(const Kernel& kernel) {
  double best = 0.0;
  for (std::size_t b = 0; b < kernel.size(); ++b)
    for (std::size_t c = 0; c < b; ++c) best = std::max(best, tv_distance(kernel[b], kernel[c]));
  return best;
}

inline ModelDiagnostics diagnostics(const MtdModel& m, double zero_tol = kZeroOscillation) {
  const std::size_t k = m.alphabet.size();
  const auto d = static_cast<std::size_t>(m.order);
  ModelDiagnostics out;
  out.oscillations.resize(d);
  out.cond_means.assign(d, std::vector<double>(k, 0.0));
  out.lip_norms.assign(d, 0.0);
  std::vector<Lag> relevant;

  for (std::size_t i = 0; i < d; ++i) {
    const Kernel& K = m.kernels[i];
    out.oscillations[i] = m.lambda[i + 1] * kernel_spread(K);
    for (std::size_t b = 0; b < k; ++b)
      for (std::size_t a = 0; a < k; ++a) out.cond_means[i][b] += m.alphabet.value(static_cast<Symbol>(a)) * K[b][a];
    for (std::size_t b = 0; b < k; ++b)
      for (std::size_t c = 0; c < b; ++c) {
        const double gap = std::abs(m.alphabet.value(static_cast<Symbol>(b)) - m.alphabet.value(static_cast<Symbol>(c)));
        out.lip_norms[i] = std::max(out.lip_norms[i], std::abs(out.cond_means[i][b] - out.cond_means[i][c]) / gap);
      }
    if (out.oscillations[i] > zero_tol) relevant.push_back(-static_cast<Lag>(i + 1));
  }
  out.relevant = LagSet(m.order, relevant);

  double sum_delta = 0.0;
  out.delta_min = relevant.empty() ? 0.0 : std::numeric_limits<double>::infinity();
  out.tilde_delta_min = out.delta_min;
  for (Lag j : relevant) {
    const auto i = static_cast<std::size_t>(-j - 1);
    sum_delta += out.oscillations[i];
    out.delta_min = std::min(out.delta_min, out.oscillations[i]);
    out.tilde_delta_min = std::min(out.tilde_delta_min, m.lambda[i + 1] * out.lip_norms[i]);
  }
  out.Delta = 1.0 - sum_delta;

  // p(a | x_Lambda) is a sum of terms that each depend on one coordinate of
  // x_Lambda, so the minimum over contexts separates across lags. Irrelevant
  // lags contribute their (constant) first row.
  out.p_min = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < k; ++a) {
    double v = m.lambda[0] * m.p0[a];
    for (std::size_t i = 0; i < d; ++i) {
      const double w = m.lambda[i + 1];
      if (w == 0.0) continue;
      if (out.relevant.contains(-static_cast<Lag>(i + 1))) {
        double lo = std::numeric_limits<double>::infinity();
        for (std::size_t b = 0; b < k; ++b) lo = std::min(lo, m.kernels[i][b][a]);
        v += w * lo;
      } else {
        v += w * m.kernels[i][0][a];
      }
    }
    out.p_min = std::min(out.p_min, v);
  }
  return out;
}

namespace detail {

inline Symbol sample_from_cdf(std::span<const double> cdf, double u) {
  const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
  const auto idx = static_cast<std::size_t>(it - cdf.begin());
  return static_cast<Symbol>(std::min(idx, cdf.size() - 1));
}

inline std::vector<double> cumulative(std::span<const double> p) {
  std::vector<double> c(p.size());
  std::partial_sum(p.begin(), p.end(), c.begin());
  return c;
}

}  // namespace detail

inline constexpr std::size_t kDefaultBurnIn = 1000;

/// Draws X_1..X_n by the two-stage mechanism: pick lag j with probability
/// lambda_j, then draw from p_j(. | X_{t+j}) (or p_0 for lag 0).
///
/// The first d symbols are i.i.d. uniform and the next `burn_in` transitions
/// are discarded before the n returned symbols.
inline SymbolSequence simulate(const MtdModel& m, std::size_t n, std::uint64_t seed,
                               std::size_t burn_in = kDefaultBurnIn) {
  require_valid(m);
  require(n >= 1, "simulate: n must be >= 1");
  const std::size_t k = m.alphabet.size();
  const auto d = static_cast<std::size_t>(m.order);
  Rng rng(seed);

  std::vector<Lag> lags;
  std::vector<double> lag_weights;
  for (std::size_t i = 0; i <= d; ++i)
    if (m.lambda[i] > 0.0) {
      lags.push_back(-static_cast<Lag>(i));
      lag_weights.push_back(m.lambda[i]);
    }
  const auto lag_cdf = detail::cumulative(lag_weights);
  const auto p0_cdf = detail::cumulative(m.p0);
  std::vector<std::vector<std::vector<double>>> kernel_cdf(d);
  for (std::size_t i = 0; i < d; ++i) {
    if (m.lambda[i + 1] == 0.0) continue;
    for (std::size_t b = 0; b < k; ++b) kernel_cdf[i].push_back(detail::cumulative(m.kernels[i][b]));
  }

  std::vector<Symbol> x(d + burn_in + n);
  for (std::size_t t = 0; t < d; ++t)
    x[t] = static_cast<Symbol>(std::min<std::size_t>(static_cast<std::size_t>(uniform01(rng) * static_cast<double>(k)), k - 1));
  for (std::size_t t = d; t < x.size(); ++t) {
    const Lag j = lags[detail::sample_from_cdf(lag_cdf, uniform01(rng) * lag_cdf.back())];
    const double u = uniform01(rng);
    if (j == 0) {
      x[t] = detail::sample_from_cdf(p0_cdf, u);
    } else {
      const Symbol b = x[t - static_cast<std::size_t>(-j)];
      x[t] = detail::sample_from_cdf(kernel_cdf[static_cast<std::size_t>(-j - 1)][b], u);
    }
  }
  x.erase(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(d + burn_in));
  return SymbolSequence(m.alphabet, std::move(x));
}

}  // namespace mtdlag
