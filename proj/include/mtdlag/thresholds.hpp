#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "counts.hpp"
#include "error.hpp"

namespace mtdlag {

inline constexpr double kInfiniteThreshold = std::numeric_limits<double>::infinity();

/// psi(mu) = e^mu - mu - 1
inline double psi(double mu) { return std::expm1(mu) - mu; }

/// Parameters of the adaptive thresholds. mu must satisfy mu > psi(mu).
struct ThresholdParams {
  double epsilon = 0.1;
  double alpha = 1.0;
  double mu = 0.5;

  /// alpha = c * log(n), the usual scaling with sample size.
  static ThresholdParams scaled(double c, std::size_t n, double epsilon = 0.1, double mu = 0.5) {
    return ThresholdParams{epsilon, c * std::log(static_cast<double>(n)), mu}.validated();
  }

  double mu_gap() const { return mu - psi(mu); }

  ThresholdParams validated() const {
    require(epsilon > 0.0, "threshold params: epsilon must be > 0");
    require(alpha > 0.0, "threshold params: alpha must be > 0");
    require(mu > 0.0 && mu < 3.0, "threshold params: mu must lie in (0, 3)");
    require(mu > psi(mu), "threshold params: mu must exceed psi(mu)");
    return *this;
  }

  friend bool operator==(const ThresholdParams&, const ThresholdParams&) = default;
};

inline void to_json(nlohmann::json& j, const ThresholdParams& p) {
  j = {{"epsilon", p.epsilon}, {"alpha", p.alpha}, {"mu", p.mu}};
}

/// Variance proxy mu/(mu - psi(mu)) * p_hat + alpha / ((mu - psi(mu)) * n_bar).
inline double v_hat(double p_hat, std::uint64_t n_bar, const ThresholdParams& params) {
  require(n_bar > 0, "v_hat: n_bar must be positive");
  const double gap = params.mu_gap();
  return params.mu / gap * p_hat + params.alpha / (gap * static_cast<double>(n_bar));
}

/// s_n for an observed context with counts `c` summing to n_bar.
inline double individual_threshold(std::span<const std::uint64_t> c, std::uint64_t n_bar,
                                   const ThresholdParams& params) {
  if (n_bar == 0) return kInfiniteThreshold;
  const double nb = static_cast<double>(n_bar);
  const double scale = params.alpha * (1.0 + params.epsilon) / (2.0 * nb);
  double s = 0.0;
  for (const auto count : c) s += std::sqrt(scale * v_hat(static_cast<double>(count) / nb, n_bar, params));
  return s + params.alpha * static_cast<double>(c.size()) / (6.0 * nb);
}

/// s_n(x_S) = sum_a sqrt(alpha (1 + eps) V(a, x_S) / (2 N(x_S))) + alpha |A| / (6 N(x_S));
/// infinite when x_S is unseen.
inline double s_n(const ContextCounts& counts, std::span<const Symbol> ctx, const ThresholdParams& params) {
  const auto r = counts.find(ctx);
  if (!r) return kInfiniteThreshold;
  return individual_threshold(counts.counts(*r), counts.total(*r), params);
}

inline double s_n_row(const ContextCounts& counts, std::size_t row, const ThresholdParams& params) {
  return individual_threshold(counts.counts(row), counts.total(row), params);
}

/// t_n(x_S, y_S) = s_n(x_S) + s_n(y_S)
inline double pair_threshold(const ContextCounts& counts, std::span<const Symbol> x, std::span<const Symbol> y,
                             const ThresholdParams& params) {
  return s_n(counts, x, params) + s_n(counts, y, params);
}

/// Noise levels of one lag j: t_{n,j}(b, c) over compatible pairs, their
/// maximum t_{n,j} over b != c and gamma_{n,j} = 2 t_{n,j}.
struct LagNoise {
  Lag lag = 0;
  /// by_pair[b][c]; infinite when no observed compatible pair exists
  std::vector<std::vector<double>> by_pair;
  double t = kInfiniteThreshold;
  double gamma = kInfiniteThreshold;
};

inline void to_json(nlohmann::json& j, const LagNoise& n) {
  // Infinite values serialize as null.
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& row : n.by_pair) {
    nlohmann::json r = nlohmann::json::array();
    for (double v : row) r.push_back(num(v));
    pairs.push_back(r);
  }
  j = {{"lag", n.lag}, {"t_pair", pairs}, {"t", num(n.t)}, {"gamma", num(n.gamma)}};
}

inline std::vector<LagNoise> noise_levels(const ContextCounts& counts, const ThresholdParams& params) {
  const std::size_t k = counts.alphabet_size();
  const std::size_t rows = counts.num_contexts();
  std::vector<double> s(rows);
  for (std::size_t r = 0; r < rows; ++r) s[r] = s_n_row(counts, r, params);

  std::vector<LagNoise> out;
  for (std::size_t pos = 0; pos < counts.width(); ++pos) {
    LagNoise ln;
    ln.lag = counts.lag_set()[pos];
    ln.by_pair.assign(k, std::vector<double>(k, kInfiniteThreshold));
    for (std::size_t r = 0; r < rows; ++r) {
      const Symbol b = counts.context(r)[pos];
      for (Symbol c = 0; c < k; ++c) {
        if (c == b) continue;
        const auto other = counts.sibling(r, pos, c);
        if (!other) continue;
        ln.by_pair[b][c] = std::min(ln.by_pair[b][c], s[r] + s[*other]);
      }
    }
    ln.t = 0.0;
    for (std::size_t b = 0; b < k; ++b)
      for (std::size_t c = 0; c < k; ++c)
        if (b != c) ln.t = std::max(ln.t, ln.by_pair[b][c]);
    ln.gamma = 2.0 * ln.t;
    out.push_back(std::move(ln));
  }
  return out;
}

}  // namespace mtdlag
