#pragma once

#include <cmath>
#include <map>
#include <ostream>
#include <vector>

#include "mtdlag/mtdlag.hpp"

namespace mtdlag {

/// Readable lag sets in test failure messages.
inline void PrintTo(const LagSet& s, std::ostream* os) { *os << s.to_string(); }

}  // namespace mtdlag

namespace mtdlag::testkit {

/// Random probability vector with every entry >= floor.
inline Distribution random_distribution(Rng& rng, std::size_t k, double floor = 0.0) {
  Distribution p(k);
  double z = 0.0;
  for (auto& v : p) z += (v = -std::log(1.0 - uniform01(rng)));
  for (auto& v : p) v = floor + (1.0 - floor * static_cast<double>(k)) * v / z;
  return p;
}

struct RandomModelOptions {
  std::size_t alphabet_size = 2;
  int order = 3;
  double lambda0_min = 0.1;
  /// probability that a lag carries weight
  double active = 0.6;
  /// probability that an active lag gets a constant kernel (zero oscillation)
  double flat = 0.15;
  bool signed_values = false;
};

/// Random valid MTD model with full support (lambda_0 p_0 > 0).
inline MtdModel random_model(Rng& rng, const RandomModelOptions& o) {
  std::vector<double> values;
  if (o.alphabet_size == 2 && !o.signed_values) {
    values = {0.0, 1.0};
  } else {
    for (std::size_t i = 0; i < o.alphabet_size; ++i)
      values.push_back((o.signed_values ? -2.0 : 0.0) + static_cast<double>(i) + 0.5 * uniform01(rng));
  }
  auto m = MtdModel::independent(Alphabet(values), o.order, random_distribution(rng, o.alphabet_size, 0.05));
  std::vector<double> w(static_cast<std::size_t>(o.order) + 1, 0.0);
  double total = 0.0;
  for (int i = 1; i <= o.order; ++i)
    if (uniform01(rng) < o.active) total += (w[static_cast<std::size_t>(i)] = 0.2 + uniform01(rng));
  const double lambda0 = o.lambda0_min + (1.0 - o.lambda0_min) * 0.5 * uniform01(rng);
  m.lambda[0] = total > 0.0 ? lambda0 : 1.0;
  for (int i = 1; i <= o.order; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    if (w[idx] == 0.0) continue;
    Kernel K;
    if (uniform01(rng) < o.flat) {
      K.assign(o.alphabet_size, random_distribution(rng, o.alphabet_size));
    } else {
      for (std::size_t b = 0; b < o.alphabet_size; ++b) K.push_back(random_distribution(rng, o.alphabet_size));
    }
    m.set_lag(-i, (1.0 - lambda0) * w[idx] / total, K);
  }
  // renormalise the weights exactly
  double s = 0.0;
  for (double v : m.lambda) s += v;
  m.lambda[0] += 1.0 - s;
  return m;
}

/// Independent reference: nu-hat from its definition with ordered maps.
inline double brute_force_nu_hat(const SymbolSequence& seq, Lag k, const LagSet& s, int d, std::size_t m) {
  const auto x = seq.data();
  const std::size_t kk = seq.alphabet().size();
  std::map<std::vector<Symbol>, std::map<Symbol, std::vector<double>>> table;
  double positions = 0;
  for (std::size_t t = static_cast<std::size_t>(d) + 1; t <= m; ++t) {
    std::vector<Symbol> ctx;
    for (Lag j : s) ctx.push_back(x[t - 1 - static_cast<std::size_t>(-j)]);
    auto& row = table[ctx][x[t - 1 - static_cast<std::size_t>(-k)]];
    row.resize(kk, 0.0);
    row[x[t - 1]] += 1;
    positions += 1;
  }
  double nu = 0.0;
  for (const auto& [ctx, by_b] : table) {
    double n_x = 0;
    for (const auto& [b, row] : by_b)
      for (double v : row) n_x += v;
    double inner = 0.0;
    for (const auto& [b, rb] : by_b)
      for (const auto& [c, rc] : by_b) {
        if (b == c) continue;
        double nb = 0, nc = 0;
        for (double v : rb) nb += v;
        for (double v : rc) nc += v;
        double tv = 0;
        for (std::size_t a = 0; a < kk; ++a) tv += std::abs(rb[a] / nb - rc[a] / nc);
        inner += (nb / n_x) * (nc / n_x) * 0.5 * tv;
      }
    nu += n_x / positions * inner;
  }
  return nu;
}

}  // namespace mtdlag::testkit
