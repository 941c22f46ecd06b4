#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "counts.hpp"
#include "error.hpp"
#include "lag_set.hpp"
#include "model.hpp"
#include "reference_models.hpp"
#include "rng.hpp"
#include "thresholds.hpp"

namespace mtdlag {

/// Raised when |A|^d exceeds the enumeration budget.
class budget_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ExactLawOptions {
  std::size_t budget = std::size_t{1} << 18;
  double tolerance = 1e-12;
  std::size_t max_iterations = 1'000'000;
  std::size_t dense_fallback_limit = 4096;
};

/// Stationary law of a small MTD model obtained by enumerating all |A|^d
/// pasts.
///
/// Positions are offsets in [-d, 0]; position 0 is the current symbol. The
/// joint law of X_{-d..0} is stored densely with x_0 as the least
/// significant base-|A| digit and x_{-d} as the most significant.
class ExactLaw {
 public:
  ExactLaw(MtdModel model, const ExactLawOptions& opt = {}) : model_(std::move(model)) {
    require_valid(model_);
    k_ = model_.alphabet.size();
    d_ = static_cast<std::size_t>(model_.order);
    double states = 1.0;
    for (std::size_t i = 0; i < d_; ++i) states *= static_cast<double>(k_);
    if (states > static_cast<double>(opt.budget))
      throw budget_error("enumeration budget exceeded: |A|^d = " + std::to_string(static_cast<long double>(states)) +
                         " > " + std::to_string(opt.budget));
    require(diagnostics(model_).p_min > 0.0, "exact_law: model lacks full support (p_min = 0)");
    states_ = static_cast<std::size_t>(states);

    trans_.resize(states_ * k_);
    std::vector<Symbol> past(d_);
    for (std::size_t s = 0; s < states_; ++s) {
      decode_past(s, past);
      const auto p = transition_prob(model_, past);
      std::copy(p.begin(), p.end(), trans_.begin() + static_cast<std::ptrdiff_t>(s * k_));
    }
    solve(opt);
    joint_.resize(states_ * k_);
    for (std::size_t i = 0; i < joint_.size(); ++i) joint_[i] = stationary_[i / k_] * trans_[i];
  }

  const MtdModel& model() const noexcept { return model_; }
  std::size_t alphabet_size() const noexcept { return k_; }
  int order() const noexcept { return model_.order; }
  std::span<const double> stationary() const noexcept { return stationary_; }
  std::span<const double> joint() const noexcept { return joint_; }
  double residual() const noexcept { return residual_; }
  std::size_t iterations() const noexcept { return iterations_; }
  bool used_dense_fallback() const noexcept { return dense_; }

  /// P(X_U = u) for positions U in [-d, 0], indexed base |A| with
  /// positions[0] as the most significant digit.
  std::vector<double> marginal(std::span<const int> positions) const {
    for (int p : positions) require(p <= 0 && p >= -model_.order, "marginal: position outside [-d, 0]");
    std::vector<std::size_t> stride(positions.size());
    for (std::size_t i = 0; i < positions.size(); ++i) stride[i] = pow_k(static_cast<std::size_t>(-positions[i]));
    std::vector<double> out(pow_k(positions.size()), 0.0);
    for (std::size_t i = 0; i < joint_.size(); ++i) {
      std::size_t idx = 0;
      for (std::size_t u = 0; u < positions.size(); ++u) idx = idx * k_ + (i / stride[u]) % k_;
      out[idx] += joint_[i];
    }
    return out;
  }

  /// P(X_target = . | X_given = values); returns zeros when
  /// the conditioning event has probability 0.
  std::vector<double> conditional(std::span<const int> given, std::span<const Symbol> values,
                                  std::span<const int> target) const {
    std::vector<int> all(given.begin(), given.end());
    all.insert(all.end(), target.begin(), target.end());
    const auto joint = marginal(all);
    const std::size_t block = pow_k(target.size());
    std::size_t base = 0;
    for (Symbol v : values) base = base * k_ + v;
    std::vector<double> out(joint.begin() + static_cast<std::ptrdiff_t>(base * block),
                            joint.begin() + static_cast<std::ptrdiff_t>((base + 1) * block));
    double z = 0.0;
    for (double v : out) z += v;
    if (z > 0.0)
      for (double& v : out) v /= z;
    return out;
  }

  /// p(a | past-state index)
  double transition(std::size_t state, Symbol a) const { return trans_[state * k_ + a]; }

  std::size_t pow_k(std::size_t e) const {
    std::size_t r = 1;
    for (std::size_t i = 0; i < e; ++i) r *= k_;
    return r;
  }

  void decode_past(std::size_t s, std::span<Symbol> past) const {
    for (std::size_t i = d_; i-- > 0;) {
      past[i] = static_cast<Symbol>(s % k_);
      s /= k_;
    }
  }

 private:
  void solve(const ExactLawOptions& opt) {
    stationary_.assign(states_, 1.0 / static_cast<double>(states_));
    std::vector<double> next(states_);
    residual_ = std::numeric_limits<double>::infinity();
    for (iterations_ = 0; iterations_ < opt.max_iterations && residual_ > opt.tolerance; ++iterations_) {
      std::fill(next.begin(), next.end(), 0.0);
      for (std::size_t s = 0; s < states_; ++s) {
        const double w = stationary_[s];
        const std::size_t shifted = (s * k_) % states_;
        for (std::size_t a = 0; a < k_; ++a) next[shifted + a] += w * trans_[s * k_ + a];
      }
      residual_ = 0.0;
      for (std::size_t s = 0; s < states_; ++s) residual_ += std::abs(next[s] - stationary_[s]);
      stationary_.swap(next);
    }
    if (residual_ <= opt.tolerance) return;
    if (states_ > opt.dense_fallback_limit)
      throw std::runtime_error("exact_law: power iteration did not converge (residual " + std::to_string(residual_) + ")");

    // Solve pi (P - I) = 0 with sum(pi) = 1 replacing the last equation.
    const auto n = static_cast<Eigen::Index>(states_);
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
    for (std::size_t s = 0; s < states_; ++s) {
      const std::size_t shifted = (s * k_) % states_;
      for (std::size_t x = 0; x < k_; ++x)
        a(static_cast<Eigen::Index>(shifted + x), static_cast<Eigen::Index>(s)) += trans_[s * k_ + x];
    }
    a -= Eigen::MatrixXd::Identity(n, n);
    a.row(n - 1).setOnes();
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
    rhs(n - 1) = 1.0;
    const Eigen::VectorXd pi = a.partialPivLu().solve(rhs);
    for (std::size_t s = 0; s < states_; ++s) stationary_[s] = pi(static_cast<Eigen::Index>(s));
    dense_ = true;
    // residual of the fixed-point equation
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t s = 0; s < states_; ++s)
      for (std::size_t x = 0; x < k_; ++x) next[(s * k_) % states_ + x] += stationary_[s] * trans_[s * k_ + x];
    residual_ = 0.0;
    for (std::size_t s = 0; s < states_; ++s) residual_ += std::abs(next[s] - stationary_[s]);
  }

  MtdModel model_;
  std::size_t k_ = 0, d_ = 0, states_ = 0;
  std::vector<double> trans_;
  std::vector<double> stationary_;
  std::vector<double> joint_;
  double residual_ = 0.0;
  std::size_t iterations_ = 0;
  bool dense_ = false;
};

inline ExactLaw exact_law(const MtdModel& model, const ExactLawOptions& opt = {}) { return ExactLaw(model, opt); }

namespace detail {

inline std::vector<int> positions_of(const LagSet& s) { return {s.begin(), s.end()}; }

inline bool rows_identical(const Kernel& K) {
  return std::all_of(K.begin(), K.end(), [&](const Distribution& r) { return r == K.front(); });
}

/// P(X_0 = . | X_V = x_V) for every x_V, using the mixture form
///   lambda_0 p_0 + sum_j lambda_j sum_c p_j(. | c) P(X_j = c | x_V).
/// Lags in V and lags with constant kernels contribute their row directly,
/// so the result depends on x_V only through lags that actually act on X_0.
inline std::vector<double> next_symbol_given(const ExactLaw& law, const std::vector<int>& v) {
  const auto& m = law.model();
  const std::size_t k = law.alphabet_size();
  const std::size_t cells = law.pow_k(v.size());
  std::vector<double> out(cells * k, 0.0);
  for (std::size_t x = 0; x < cells; ++x)
    for (std::size_t a = 0; a < k; ++a) out[x * k + a] = m.lambda[0] * m.p0[a];

  const auto pv = law.marginal(v);
  for (int j = -1; j >= -m.order; --j) {
    const double w = m.weight(j);
    if (w == 0.0) continue;
    const Kernel& K = m.kernel(j);
    const auto in_v = std::find(v.begin(), v.end(), j);
    if (in_v != v.end()) {
      const std::size_t digit = v.size() - 1 - static_cast<std::size_t>(in_v - v.begin());
      const std::size_t stride = law.pow_k(digit);
      for (std::size_t x = 0; x < cells; ++x) {
        const auto b = (x / stride) % k;
        for (std::size_t a = 0; a < k; ++a) out[x * k + a] += w * K[b][a];
      }
    } else if (rows_identical(K)) {
      for (std::size_t x = 0; x < cells; ++x)
        for (std::size_t a = 0; a < k; ++a) out[x * k + a] += w * K[0][a];
    } else {
      auto vj = v;
      vj.push_back(j);
      const auto pvj = law.marginal(vj);
      for (std::size_t x = 0; x < cells; ++x) {
        if (pv[x] == 0.0) continue;
        for (std::size_t c = 0; c < k; ++c) {
          const double pc = pvj[x * k + c] / pv[x];
          for (std::size_t a = 0; a < k; ++a) out[x * k + a] += w * K[c][a] * pc;
        }
      }
    }
  }
  return out;
}

/// Per-context conditional covariance Cov_{x_S}(f(X_u), g(X_v)) together
/// with P(x_S). u == v is allowed.
struct CondCov {
  double weight = 0.0;
  double cov = 0.0;
};

inline std::vector<CondCov> conditional_covariances(const ExactLaw& law, const std::vector<int>& s, int u, int v,
                                                    const std::function<double(Symbol)>& f,
                                                    const std::function<double(Symbol)>& g) {
  const std::size_t k = law.alphabet_size();
  auto pos = s;
  pos.push_back(u);
  const bool same = (u == v);
  if (!same) pos.push_back(v);
  const auto joint = law.marginal(pos);
  const std::size_t block = same ? k : k * k;
  const std::size_t cells = law.pow_k(s.size());
  std::vector<CondCov> out(cells);
  for (std::size_t x = 0; x < cells; ++x) {
    double z = 0, ef = 0, eg = 0, efg = 0;
    for (std::size_t i = 0; i < block; ++i) {
      const double p = joint[x * block + i];
      const auto a = static_cast<Symbol>(same ? i : i / k);
      const auto b = static_cast<Symbol>(same ? i : i % k);
      z += p;
      ef += p * f(a);
      eg += p * g(b);
      efg += p * f(a) * g(b);
    }
    out[x].weight = z;
    if (z > 0.0) out[x].cov = efg / z - (ef / z) * (eg / z);
  }
  return out;
}

/// E |Cov_{X_S}(X_0, X_k)|
inline double expected_abs_cov(const ExactLaw& law, Lag k, const LagSet& s) {
  const auto& alpha = law.model().alphabet;
  auto val = [&](Symbol a) { return alpha.value(a); };
  double e = 0.0;
  for (const auto& c : conditional_covariances(law, positions_of(s), 0, k, val, val)) e += c.weight * std::abs(c.cov);
  return e;
}

template <typename F>
void for_each_subset(int order, std::size_t max_size, F&& f) {
  const auto d = static_cast<std::size_t>(order);
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << d); ++mask) {
    if (static_cast<std::size_t>(__builtin_popcountll(mask)) > max_size) continue;
    std::vector<Lag> lags;
    for (std::size_t i = 0; i < d; ++i)
      if (mask >> i & 1) lags.push_back(-static_cast<Lag>(i + 1));
    f(LagSet(order, std::move(lags)));
  }
}

}  // namespace detail

/// nu-bar_{k,S} = E[ sum_{b,c} P_{X_S}(X_k=b) P_{X_S}(X_k=c)
///                   d_TV(P_{X_S}(X_0 | X_k=b), P_{X_S}(X_0 | X_k=c)) ]
inline double exact_nu_bar(const ExactLaw& law, Lag k, const LagSet& s) {
  require(!s.contains(k), "exact_nu_bar: k must not belong to S");
  require(k <= -1 && k >= -law.order(), "exact_nu_bar: lag outside [-d, -1]");
  const std::size_t kk = law.alphabet_size();
  auto v = detail::positions_of(s);
  v.push_back(k);
  const auto next = detail::next_symbol_given(law, v);
  const auto psk = law.marginal(v);
  const std::size_t cells = law.pow_k(s.size());
  double nu = 0.0;
  for (std::size_t x = 0; x < cells; ++x) {
    double ps = 0.0;
    for (std::size_t b = 0; b < kk; ++b) ps += psk[x * kk + b];
    if (ps == 0.0) continue;
    double inner = 0.0;
    for (std::size_t b = 0; b < kk; ++b)
      for (std::size_t c = b + 1; c < kk; ++c) {
        const double wb = psk[x * kk + b] / ps, wc = psk[x * kk + c] / ps;
        if (wb == 0.0 || wc == 0.0) continue;
        const double tv = tv_distance({next.data() + (x * kk + b) * kk, kk}, {next.data() + (x * kk + c) * kk, kk});
        inner += 2.0 * wb * wc * tv;
      }
    nu += ps * inner;
  }
  return nu;
}

struct NuBarEntry {
  Lag k = 0;
  std::vector<Lag> s;
  double nu_bar = 0.0;
  double abs_cov = 0.0;
};

struct StructureOptions {
  /// Largest |S| enumerated; defaults to all subsets for d <= 6 and 2 above.
  std::optional<std::size_t> max_subset_size;
  /// Added to every nu-bar before the checks; mutation testing only.
  double nu_bar_perturbation = 0.0;
  /// Slack for the inequality check (floating-point rounding).
  double inequality_slack = 1e-12;
  double identity_tolerance = 1e-10;
};

inline std::size_t default_max_subset(int order) { return order <= 6 ? static_cast<std::size_t>(order) : 2; }

struct StructureReport {
  std::vector<NuBarEntry> entries;
  /// max over (k, S) of E|Cov| - Diam ||A|| nu-bar
  double cov_bound_max_excess = -std::numeric_limits<double>::infinity();
  std::size_t cov_bound_violations = 0;
  /// max over (k, S, x_S) of |Cov(X_0, m_k(X_k)) - sum_j lambda_j Cov(m_j(X_j), m_k(X_k))|
  double cov_identity_max_residual = 0.0;
  /// pairs with Lambda subset of S and nu-bar != 0
  std::size_t zero_violations = 0;
  std::size_t zero_checked = 0;
  /// binary alphabets only: max |nu-bar - 2 E|Cov||
  std::optional<double> binary_identity_max_residual;
  /// min over S (Lambda not in S) of max_{k in Lambda \ S} E|Cov_{X_S}(X_0, X_k)|
  std::optional<double> kappa;
  std::optional<double> kappa_lower_bound;
  double identity_tolerance = 1e-10;

  bool passed() const {
    return cov_bound_violations == 0 && cov_identity_max_residual <= identity_tolerance && zero_violations == 0 &&
           (!binary_identity_max_residual || *binary_identity_max_residual <= identity_tolerance) &&
           (!kappa || !kappa_lower_bound || *kappa >= *kappa_lower_bound);
  }
};

struct WeakDependenceReport {
  /// 1 - max of the inward-dependence ratio; 1 when no tuple is admissible
  double gamma1 = 1.0;
  /// max of the outward-dependence sum (binary alphabets only)
  std::optional<double> gamma2;
};

inline WeakDependenceReport verify_weak_dependence(const ExactLaw& law, std::optional<std::size_t> max_subset = {}) {
  const auto& m = law.model();
  const auto diag = diagnostics(m);
  const LagSet& lam = diag.relevant;
  const std::size_t k = law.alphabet_size();
  const std::size_t max_s = max_subset.value_or(default_max_subset(m.order));
  WeakDependenceReport rep;

  auto cond_mean = [&](Lag j, Symbol b) { return diag.cond_means[static_cast<std::size_t>(-j - 1)][b]; };

  double worst = 0.0;
  detail::for_each_subset(m.order, max_s, [&](const LagSet& s) {
    if (lam.is_subset_of(s)) return;
    const auto spos = detail::positions_of(s);
    const std::size_t cells = law.pow_k(s.size());
    for (Lag kl : lam) {
      if (s.contains(kl)) continue;
      std::vector<Lag> others;
      for (Lag j : lam)
        if (j != kl && !s.contains(j)) others.push_back(j);
      // E_{x_S}(m_j(X_j) | X_k = b) for each j in others
      std::vector<std::vector<double>> tables;
      for (Lag j : others) {
        auto pos = spos;
        pos.push_back(kl);
        pos.push_back(j);
        tables.push_back(law.marginal(pos));
      }
      const auto psk = [&] {
        auto pos = spos;
        pos.push_back(kl);
        return law.marginal(pos);
      }();
      for (Symbol b = 0; b < k; ++b)
        for (Symbol c = 0; c < k; ++c) {
          if (b == c) continue;
          const double dm = std::abs(cond_mean(kl, b) - cond_mean(kl, c));
          if (!(dm > 0.0)) continue;
          const double denom = m.weight(kl) * dm;
          for (std::size_t x = 0; x < cells; ++x) {
            const double pb = psk[x * k + b], pc = psk[x * k + c];
            if (pb == 0.0 || pc == 0.0) continue;
            double sum = 0.0;
            for (std::size_t t = 0; t < others.size(); ++t) {
              double eb = 0.0, ec = 0.0;
              for (Symbol y = 0; y < k; ++y) {
                eb += tables[t][(x * k + b) * k + y] * cond_mean(others[t], y);
                ec += tables[t][(x * k + c) * k + y] * cond_mean(others[t], y);
              }
              sum += m.weight(others[t]) * std::abs(eb / pb - ec / pc);
            }
            worst = std::max(worst, sum / denom);
          }
        }
    }
  });
  rep.gamma1 = 1.0 - worst;

  if (m.alphabet.is_binary()) {
    double g2 = 0.0;
    std::vector<Lag> lam_lags(lam.begin(), lam.end());
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << lam_lags.size()); ++mask) {
      std::vector<Lag> sl;
      for (std::size_t i = 0; i < lam_lags.size(); ++i)
        if (mask >> i & 1) sl.push_back(lam_lags[i]);
      const LagSet s(m.order, sl);
      const auto spos = detail::positions_of(s);
      const std::size_t cells = law.pow_k(s.size());
      for (Lag kl : lam.complement()) {
        double sum = 0.0;
        for (Lag j : lam) {
          if (s.contains(j)) continue;
          auto pos = spos;
          pos.push_back(j);
          pos.push_back(kl);
          const auto t = law.marginal(pos);
          double best = 0.0;
          for (std::size_t x = 0; x < cells; ++x) {
            const double p1 = t[(x * 2 + 1) * 2 + 0] + t[(x * 2 + 1) * 2 + 1];
            const double p0 = t[(x * 2 + 0) * 2 + 0] + t[(x * 2 + 0) * 2 + 1];
            if (p1 == 0.0 || p0 == 0.0) continue;
            best = std::max(best, std::abs(t[(x * 2 + 1) * 2 + 1] / p1 - t[(x * 2 + 0) * 2 + 1] / p0));
          }
          sum += best;
        }
        g2 = std::max(g2, sum);
      }
    }
    rep.gamma2 = g2;
  }
  return rep;
}

inline StructureReport verify_structure(const ExactLaw& law, const StructureOptions& opt = {}) {
  const auto& m = law.model();
  const auto diag = diagnostics(m);
  const LagSet& lam = diag.relevant;
  const double scale = m.alphabet.diameter() * m.alphabet.sup_norm();
  const std::size_t max_s = opt.max_subset_size.value_or(default_max_subset(m.order));
  const bool binary = m.alphabet.is_binary();

  StructureReport rep;
  rep.identity_tolerance = opt.identity_tolerance;
  if (binary) rep.binary_identity_max_residual = 0.0;

  auto cond_mean = [&](Lag j) {
    return [&diag, j](Symbol b) { return diag.cond_means[static_cast<std::size_t>(-j - 1)][b]; };
  };
  auto value = [&](Symbol a) { return m.alphabet.value(a); };

  std::optional<double> kappa;
  detail::for_each_subset(m.order, max_s, [&](const LagSet& s) {
    const auto spos = detail::positions_of(s);
    const bool covers = lam.is_subset_of(s);
    double best_for_s = 0.0;
    for (Lag k : s.complement()) {
      NuBarEntry e;
      e.k = k;
      e.s.assign(s.begin(), s.end());
      e.nu_bar = exact_nu_bar(law, k, s) + opt.nu_bar_perturbation;
      e.abs_cov = detail::expected_abs_cov(law, k, s);

      const double excess = e.abs_cov - scale * e.nu_bar;
      rep.cov_bound_max_excess = std::max(rep.cov_bound_max_excess, excess);
      if (excess > opt.inequality_slack) ++rep.cov_bound_violations;

      if (covers) {
        ++rep.zero_checked;
        if (e.nu_bar != 0.0) ++rep.zero_violations;
      }
      if (binary)
        rep.binary_identity_max_residual =
            std::max(*rep.binary_identity_max_residual, std::abs(e.nu_bar - 2.0 * e.abs_cov));

      // Cov_{x_S}(X_0, m_k(X_k)) = sum_{j in Lambda \ S} lambda_j Cov_{x_S}(m_j(X_j), m_k(X_k))
      const auto lhs = detail::conditional_covariances(law, spos, 0, k, value, cond_mean(k));
      std::vector<double> rhs(lhs.size(), 0.0);
      for (Lag j : lam) {
        if (s.contains(j)) continue;
        const auto t = detail::conditional_covariances(law, spos, j, k, cond_mean(j), cond_mean(k));
        for (std::size_t x = 0; x < t.size(); ++x) rhs[x] += m.weight(j) * t[x].cov;
      }
      for (std::size_t x = 0; x < lhs.size(); ++x)
        if (lhs[x].weight > 0.0) rep.cov_identity_max_residual = std::max(rep.cov_identity_max_residual, std::abs(lhs[x].cov - rhs[x]));

      if (lam.contains(k)) best_for_s = std::max(best_for_s, e.abs_cov);
      rep.entries.push_back(std::move(e));
    }
    if (!covers) kappa = kappa ? std::min(*kappa, best_for_s) : best_for_s;
  });
  rep.kappa = kappa;

  const auto wd = verify_weak_dependence(law, max_s);
  if (!lam.empty() && wd.gamma1 > 0.0) {
    const double gap = m.alphabet.min_gap();
    rep.kappa_lower_bound = diag.p_min * diag.p_min * wd.gamma1 * gap * gap * diag.tilde_delta_min /
                            (2.0 * std::sqrt(static_cast<double>(lam.size())));
  }
  return rep;
}

struct ForwardBudget {
  double xi_star = 0.0;
  std::size_t ell_star = 0;
};

/// xi* = kappa / (4 ||A|| Diam(A)),  ell* = floor(log2|A| / (8 xi*^2)).
inline ForwardBudget ell_xi_star(double kappa, const Alphabet& alphabet) {
  if (!(kappa > 0.0)) throw contract_error("no relevant lags or degenerate model (kappa = 0)");
  ForwardBudget fb;
  fb.xi_star = kappa / (4.0 * alphabet.sup_norm() * alphabet.diameter());
  fb.ell_star = static_cast<std::size_t>(
      std::floor(std::log2(static_cast<double>(alphabet.size())) / (8.0 * fb.xi_star * fb.xi_star)));
  return fb;
}

inline ForwardBudget ell_xi_star(const StructureReport& rep, const Alphabet& alphabet) {
  return ell_xi_star(rep.kappa.value_or(0.0), alphabet);
}

struct KlCheck {
  double kl = 0.0;
  double bound = 0.0;
  bool holds() const { return kl <= bound * (1.0 + 1e-12) + 1e-15; }
};

/// Exact KL between the length-n marginals of two single-lag binary models
/// (active lag j versus k), via the order-d chain rule
///   KL_n = KL(pi_j || pi_k) + (n - d) E_j[KL(p_j(.|X) || p_k(.|X))],
/// together with the bound 2 n delta^2 / (1 - weight).
inline KlCheck kl_bound_check(double weight, double p1_given1, double p1_given0, int d, std::size_t n, Lag j = -1,
                              std::optional<Lag> k = std::nullopt, const ExactLawOptions& opt = {}) {
  require(weight > 0.0 && weight < 1.0, "kl_bound_check: weight must lie in (0, 1)");
  require(n > static_cast<std::size_t>(d), "kl_bound_check: need n > d");
  const Lag other = k.value_or(-d);
  const ExactLaw lj(single_lag_model(d, j, weight, p1_given1, p1_given0), opt);
  const ExactLaw lk(single_lag_model(d, other, weight, p1_given1, p1_given0), opt);
  const auto pj = lj.stationary();
  const auto pk = lk.stationary();
  double kl_start = 0.0, kl_step = 0.0;
  for (std::size_t s = 0; s < pj.size(); ++s) {
    if (pj[s] == 0.0) continue;
    kl_start += pj[s] * std::log(pj[s] / pk[s]);
    double step = 0.0;
    for (Symbol a = 0; a < 2; ++a) {
      const double qa = lj.transition(s, a), ra = lk.transition(s, a);
      if (qa > 0.0) step += qa * std::log(qa / ra);
    }
    kl_step += pj[s] * step;
  }
  const double delta = weight * std::abs(p1_given1 - p1_given0);
  return {kl_start + static_cast<double>(n - static_cast<std::size_t>(d)) * kl_step,
          2.0 * static_cast<double>(n) * delta * delta / (1.0 - weight)};
}

/// P_S = min_{j in Lambda} min_{b != c} max over (S \ {j})-compatible pairs
/// (x_S, y_S) with x_j = b, y_j = c of min(P(x_S), P(y_S)). Requires
/// Lambda subset of S; returns 1 when Lambda is empty.
inline double pcp_pair_mass(const ExactLaw& law, const LagSet& s) {
  const auto lam = diagnostics(law.model()).relevant;
  require(lam.is_subset_of(s), "pcp_pair_mass: S must contain every relevant lag");
  const std::size_t k = law.alphabet_size();
  double out = 1.0;
  for (Lag j : lam) {
    std::vector<int> pos;
    for (Lag l : s)
      if (l != j) pos.push_back(l);
    pos.push_back(j);
    const auto p = law.marginal(pos);
    const std::size_t cells = law.pow_k(pos.size() - 1);
    for (std::size_t b = 0; b < k; ++b)
      for (std::size_t c = 0; c < k; ++c) {
        if (b == c) continue;
        double best = 0.0;
        for (std::size_t x = 0; x < cells; ++x) best = std::max(best, std::min(p[x * k + b], p[x * k + c]));
        out = std::min(out, best);
      }
  }
  return out;
}

/// Per-cell deviation frequency of |p_hat(a|x) - p(a|x)| >= radius over
/// simulated replications, counted on the true relevant set.
struct CoverageReport {
  std::size_t replications = 0;
  std::size_t n = 0;
  /// largest per-cell violation frequency
  double max_frequency = 0.0;
  /// fraction of replications where at least one cell is violated
  double any_cell_frequency = 0.0;
  double bound = 0.0;
  double standard_error = 0.0;
  bool passed() const { return max_frequency <= bound + 3.0 * standard_error; }
};

/// min(1, 4 ceil(log(mu (n - d) / alpha + 2) / log(1 + eps)) e^{-alpha})
inline double deviation_bound(std::size_t n, int d, const ThresholdParams& params) {
  const double steps =
      std::ceil(std::log(params.mu * static_cast<double>(n - static_cast<std::size_t>(d)) / params.alpha + 2.0) /
                std::log1p(params.epsilon));
  return std::min(1.0, 4.0 * steps * std::exp(-params.alpha));
}

inline CoverageReport threshold_coverage(const MtdModel& model, std::size_t n, std::size_t reps,
                                         const ThresholdParams& params, std::uint64_t seed) {
  require(reps > 0, "threshold_coverage: replications must be positive");
  const auto lam = diagnostics(model).relevant;
  const std::size_t k = model.alphabet.size();
  const std::size_t d = static_cast<std::size_t>(model.order);
  std::size_t cells = k;
  for (std::size_t i = 0; i < lam.size(); ++i) cells *= k;
  std::vector<std::size_t> hits(cells, 0);
  std::size_t any = 0;

  // true p(a | x_Lambda), x_Lambda enumerated with the first lag as the most significant digit
  std::vector<double> truth(cells);
  {
    std::vector<Symbol> past(d, 0), ctx(lam.size(), 0);
    for (std::size_t x = 0; x < cells / k; ++x) {
      std::size_t rem = x;
      for (std::size_t i = lam.size(); i-- > 0;) {
        ctx[i] = static_cast<Symbol>(rem % k);
        rem /= k;
        past[d - static_cast<std::size_t>(-lam[i])] = ctx[i];
      }
      const auto p = transition_prob(model, past);
      for (std::size_t a = 0; a < k; ++a) truth[x * k + a] = p[a];
    }
  }

  for (std::size_t r = 0; r < reps; ++r) {
    const auto seq = simulate(model, n, derive_seed(seed, r));
    const auto counts = count_contexts(seq, lam, 0, n, model.order);
    bool hit = false;
    for (std::size_t row = 0; row < counts.num_contexts(); ++row) {
      const auto ctx = counts.context(row);
      std::size_t x = 0;
      for (Symbol c : ctx) x = x * k + c;
      const auto n_bar = counts.total(row);
      const auto c = counts.counts(row);
      for (std::size_t a = 0; a < k; ++a) {
        const double p_hat = static_cast<double>(c[a]) / static_cast<double>(n_bar);
        const double radius = std::sqrt(2.0 * params.alpha * (1.0 + params.epsilon) * v_hat(p_hat, n_bar, params) /
                                        static_cast<double>(n_bar)) +
                              params.alpha / (3.0 * static_cast<double>(n_bar));
        if (std::abs(p_hat - truth[x * k + a]) >= radius) {
          ++hits[x * k + a];
          hit = true;
        }
      }
    }
    any += hit;
  }

  CoverageReport rep;
  rep.replications = reps;
  rep.n = n;
  for (auto h : hits) rep.max_frequency = std::max(rep.max_frequency, static_cast<double>(h) / static_cast<double>(reps));
  rep.any_cell_frequency = static_cast<double>(any) / static_cast<double>(reps);
  rep.bound = deviation_bound(n, model.order, params);
  rep.standard_error = std::sqrt(rep.bound * (1.0 - rep.bound) / static_cast<double>(reps));
  return rep;
}

struct KlGridPoint {
  double weight = 0.0;
  double p1_given1 = 0.0;
  double p1_given0 = 0.0;
  int d = 1;
  std::size_t n = 0;
};

/// Fixed 50-point grid over (weight, kernel, d <= 6, n <= 100) in the
/// single-lag binary family.
inline std::vector<KlGridPoint> kl_grid() {
  const double weights[] = {0.1, 0.3, 0.5, 0.7, 0.9};
  const std::pair<double, double> kernels[] = {{0.7, 0.5}, {0.95, 0.1}};
  const std::pair<int, std::size_t> shapes[] = {{1, 5}, {2, 10}, {3, 30}, {4, 50}, {6, 100}};
  std::vector<KlGridPoint> out;
  for (double w : weights)
    for (const auto& [p1, p0] : kernels)
      for (const auto& [d, n] : shapes) out.push_back({w, p1, p0, d, n});
  return out;
}

inline std::vector<KlCheck> kl_grid_checks(const ExactLawOptions& opt = {}) {
  std::vector<KlCheck> out;
  for (const auto& g : kl_grid()) out.push_back(kl_bound_check(g.weight, g.p1_given1, g.p1_given0, g.d, g.n, -1, {}, opt));
  return out;
}

struct OracleReport {
  StructureReport structure;
  WeakDependenceReport weak_dependence;
  std::optional<double> pair_mass;
  std::optional<ForwardBudget> forward_budget;
  std::vector<KlCheck> kl;
  std::optional<CoverageReport> coverage;
  double stationary_residual = 0.0;

  bool kl_passed() const {
    return std::all_of(kl.begin(), kl.end(), [](const KlCheck& c) { return c.holds(); });
  }
  bool passed() const { return structure.passed() && kl_passed() && (!coverage || coverage->passed()); }
};

namespace detail {
inline nlohmann::json opt_num(const std::optional<double>& v) {
  return v && std::isfinite(*v) ? nlohmann::json(*v) : nlohmann::json(nullptr);
}
}  // namespace detail

inline nlohmann::json oracle_report_to_json(const OracleReport& r) {
  using nlohmann::json;
  json nu = json::array();
  for (const auto& e : r.structure.entries)
    nu.push_back({{"k", e.k}, {"S", e.s}, {"nu_bar", e.nu_bar}, {"abs_cov", e.abs_cov}});
  json kl = json::array();
  for (const auto& c : r.kl) kl.push_back({{"kl", c.kl}, {"bound", c.bound}, {"holds", c.holds()}});
  json out = {
      {"stationary_residual", r.stationary_residual},
      {"nu_bar", nu},
      {"cov_bound_max_excess", r.structure.cov_bound_max_excess},
      {"cov_bound_violations", r.structure.cov_bound_violations},
      {"cov_identity_max_residual", r.structure.cov_identity_max_residual},
      {"zero_checked", r.structure.zero_checked},
      {"zero_violations", r.structure.zero_violations},
      {"binary_identity_max_residual", detail::opt_num(r.structure.binary_identity_max_residual)},
      {"kappa", detail::opt_num(r.structure.kappa)},
      {"kappa_lower_bound", detail::opt_num(r.structure.kappa_lower_bound)},
      {"P_S", detail::opt_num(r.pair_mass)},
      {"gamma1_slack", r.weak_dependence.gamma1},
      {"gamma2", detail::opt_num(r.weak_dependence.gamma2)},
      {"kl", kl},
      {"passed", r.passed()},
  };
  if (r.forward_budget) {
    out["xi_star"] = r.forward_budget->xi_star;
    out["ell_star"] = r.forward_budget->ell_star;
  } else {
    out["xi_star"] = nullptr;
    out["ell_star"] = nullptr;
  }
  if (r.coverage)
    out["coverage"] = {{"replications", r.coverage->replications}, {"n", r.coverage->n},
                       {"max_frequency", r.coverage->max_frequency},
                       {"any_cell_frequency", r.coverage->any_cell_frequency}, {"bound", r.coverage->bound},
                       {"standard_error", r.coverage->standard_error}, {"passed", r.coverage->passed()}};
  return out;
}

/// Structure, weak-dependence, P_S (on S = all lags) and forward-budget
/// parts of the report; KL and coverage checks are attached by the caller.
inline OracleReport oracle_report(const ExactLaw& law, const StructureOptions& opt = {}) {
  OracleReport r;
  r.stationary_residual = law.residual();
  r.structure = verify_structure(law, opt);
  r.weak_dependence = verify_weak_dependence(law, opt.max_subset_size);
  r.pair_mass = pcp_pair_mass(law, LagSet::full(law.order()));
  if (r.structure.kappa && *r.structure.kappa > 0.0) r.forward_budget = ell_xi_star(*r.structure.kappa, law.model().alphabet);
  return r;
}

}  // namespace mtdlag
