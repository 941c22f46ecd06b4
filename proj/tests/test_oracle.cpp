#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "mtdlag/mtdlag.hpp"
#include "test_support.hpp"

using namespace mtdlag;

namespace {

double sum(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

/// nu-bar straight from the joint law of (X_S, X_k, X_0), without the
/// mixture decomposition.
double brute_force_nu_bar(const ExactLaw& law, Lag k, const LagSet& s) {
  const std::size_t kk = law.alphabet_size();
  std::vector<int> pos(s.begin(), s.end());
  pos.push_back(k);
  pos.push_back(0);
  const auto joint = law.marginal(pos);
  const std::size_t cells = law.pow_k(s.size());
  double nu = 0;
  for (std::size_t x = 0; x < cells; ++x) {
    double ps = 0;
    std::vector<double> pb(kk, 0.0);
    for (std::size_t b = 0; b < kk; ++b)
      for (std::size_t a = 0; a < kk; ++a) pb[b] += joint[(x * kk + b) * kk + a];
    for (double v : pb) ps += v;
    if (ps == 0) continue;
    for (std::size_t b = 0; b < kk; ++b)
      for (std::size_t c = 0; c < kk; ++c) {
        if (b == c || pb[b] == 0 || pb[c] == 0) continue;
        double tv = 0;
        for (std::size_t a = 0; a < kk; ++a)
          tv += std::abs(joint[(x * kk + b) * kk + a] / pb[b] - joint[(x * kk + c) * kk + a] / pb[c]);
        nu += ps * (pb[b] / ps) * (pb[c] / ps) * 0.5 * tv;
      }
  }
  return nu;
}

/// E|Cov_{X_S}(X_0, X_k)| from the joint law, binary {0, 1} values.
double brute_force_abs_cov(const ExactLaw& law, Lag k, const LagSet& s) {
  std::vector<int> pos(s.begin(), s.end());
  pos.push_back(k);
  pos.push_back(0);
  const auto joint = law.marginal(pos);
  double e = 0;
  for (std::size_t x = 0; x < law.pow_k(s.size()); ++x) {
    const double* p = joint.data() + x * 4;  // (x_k, x_0) in {00, 01, 10, 11}
    const double z = p[0] + p[1] + p[2] + p[3];
    if (z == 0) continue;
    const double e0 = (p[1] + p[3]) / z, ek = (p[2] + p[3]) / z, ek0 = p[3] / z;
    e += z * std::abs(ek0 - e0 * ek);
  }
  return e;
}

/// Log-probability of a path under the stationary chain.
double path_log_prob(const ExactLaw& law, const std::vector<Symbol>& x) {
  const auto d = static_cast<std::size_t>(law.order());
  std::size_t s = 0;
  for (std::size_t i = 0; i < d; ++i) s = s * 2 + x[i];
  double lp = std::log(law.stationary()[s]);
  for (std::size_t t = d; t < x.size(); ++t) {
    lp += std::log(law.transition(s, x[t]));
    s = (s * 2 + x[t]) % law.pow_k(d);
  }
  return lp;
}

}  // namespace

// --- stationary law -----------------------------------------------------------------

TEST(ExactLaw, IndependentModelIsAProduct) {
  const auto law = exact_law(MtdModel::independent(Alphabet::range(3), 3, {0.2, 0.3, 0.5}));
  const double p0[] = {0.2, 0.3, 0.5};
  const auto st = law.stationary();
  ASSERT_EQ(st.size(), 27u);
  for (std::size_t s = 0; s < 27; ++s)
    EXPECT_NEAR(st[s], p0[s / 9] * p0[(s / 3) % 3] * p0[s % 3], 1e-14);
  EXPECT_LE(law.residual(), 1e-12);
}

TEST(ExactLaw, SymmetricChainIsUniform) {
  const auto law = exact_law(single_lag_model(1, -1, 0.5, 0.5, 0.5));
  EXPECT_NEAR(law.stationary()[0], 0.5, 1e-14);
  EXPECT_NEAR(law.stationary()[1], 0.5, 1e-14);
}

TEST(ExactLaw, MarginalsAreConsistent) {
  const auto model = benchmark_model_1(3, 1, 3);
  const auto law = exact_law(model);
  EXPECT_NEAR(sum(law.marginal(std::vector<int>{-3, -2, -1, 0})), 1.0, 1e-14);
  // summing X_{-2} out of (X_{-3}, X_{-2}, X_{-1}) gives (X_{-3}, X_{-1})
  const auto full = law.marginal(std::vector<int>{-3, -2, -1});
  const auto part = law.marginal(std::vector<int>{-3, -1});
  for (std::size_t a = 0; a < 2; ++a)
    for (std::size_t c = 0; c < 2; ++c) EXPECT_NEAR(part[a * 2 + c], full[a * 4 + c] + full[a * 4 + 2 + c], 1e-15);
  // stationarity: the law of (X_{-2}, X_{-1}, X_0) equals that of (X_{-3}, X_{-2}, X_{-1})
  const auto shifted = law.marginal(std::vector<int>{-2, -1, 0});
  for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(shifted[i], full[i], 1e-12);
}

TEST(ExactLaw, ConditionalMatchesTransitionProbability) {
  const auto model = benchmark_model_1(3, 1, 3);
  const auto law = exact_law(model);
  const std::vector<int> past{-3, -2, -1}, now{0};
  for (std::size_t s = 0; s < 8; ++s) {
    const std::vector<Symbol> v{static_cast<Symbol>(s / 4), static_cast<Symbol>(s / 2 % 2), static_cast<Symbol>(s % 2)};
    const auto c = law.conditional(past, v, now);
    const auto p = transition_prob(model, v);
    EXPECT_NEAR(c[0], p[0], 1e-12);
    EXPECT_NEAR(c[1], p[1], 1e-12);
  }
}

TEST(ExactLaw, FixedPointResidualIndependentlyChecked) {
  Rng rng(51);
  const auto model = testkit::random_model(rng, {3, 4, 0.1, 0.8});
  const auto law = exact_law(model);
  const auto st = law.stationary();
  const std::size_t states = st.size();
  std::vector<double> next(states, 0.0);
  std::vector<Symbol> past(4);
  for (std::size_t s = 0; s < states; ++s) {
    law.decode_past(s, past);
    const auto p = transition_prob(model, past);
    for (Symbol a = 0; a < 3; ++a) next[(s * 3) % states + a] += st[s] * p[a];
  }
  double r = 0;
  for (std::size_t s = 0; s < states; ++s) r += std::abs(next[s] - st[s]);
  EXPECT_LE(r, 1e-12);
  for (double v : st) EXPECT_GE(v, 0.0);
}

TEST(ExactLaw, BudgetAndSupportErrors) {
  EXPECT_THROW(exact_law(MtdModel::independent(Alphabet::binary(), 19, {0.5, 0.5})), budget_error);
  EXPECT_NO_THROW(exact_law(MtdModel::independent(Alphabet::binary(), 19, {0.5, 0.5}), {std::size_t{1} << 19}));
  auto degenerate = MtdModel::independent(Alphabet::binary(), 1, {0.5, 0.5});
  degenerate.lambda = {0.0, 1.0};
  degenerate.kernels[0] = {{1.0, 0.0}, {0.0, 1.0}};
  try {
    exact_law(degenerate);
    FAIL() << "expected a contract_error";
  } catch (const contract_error& e) {
    EXPECT_STREQ(e.what(), "exact_law: model lacks full support (p_min = 0)");
  }
}

TEST(ExactLaw, DenseFallbackAgreesWithPowerIteration) {
  Rng rng(52);
  const auto model = testkit::random_model(rng, {2, 5, 0.1, 0.9});
  const auto iterated = exact_law(model);
  ExactLawOptions opt;
  opt.max_iterations = 1;
  const auto dense = exact_law(model, opt);
  EXPECT_FALSE(iterated.used_dense_fallback());
  EXPECT_TRUE(dense.used_dense_fallback());
  EXPECT_LE(dense.residual(), 1e-12);
  for (std::size_t s = 0; s < iterated.stationary().size(); ++s)
    EXPECT_NEAR(dense.stationary()[s], iterated.stationary()[s], 1e-12);
}

// --- influence --------------------------------------------------------------------

TEST(ExactNuBar, AgreesWithJointEnumeration) {
  Rng rng(53);
  for (int rep = 0; rep < 12; ++rep) {
    const auto model = testkit::random_model(rng, {static_cast<std::size_t>(2 + rep % 2), 3, 0.1, 0.7});
    const auto law = exact_law(model);
    detail::for_each_subset(3, 3, [&](const LagSet& s) {
      for (Lag k : s.complement()) EXPECT_NEAR(exact_nu_bar(law, k, s), brute_force_nu_bar(law, k, s), 1e-12);
    });
  }
}

TEST(ExactNuBar, ZeroWhenRelevantLagsAreConditionedOn) {
  const auto model = benchmark_model_1(4, 1, 4);
  const auto law = exact_law(model);
  EXPECT_EQ(exact_nu_bar(law, -2, LagSet(4, {-1, -4})), 0.0);
  EXPECT_EQ(exact_nu_bar(law, -3, LagSet(4, {-1, -2, -4})), 0.0);
  EXPECT_GT(exact_nu_bar(law, -2, LagSet(4, {-1})), 0.0);
  const auto iid = exact_law(MtdModel::independent(Alphabet::range(3), 3, {0.2, 0.3, 0.5}));
  detail::for_each_subset(3, 3, [&](const LagSet& s) {
    for (Lag k : s.complement()) EXPECT_EQ(exact_nu_bar(iid, k, s), 0.0);
  });
}

TEST(ExactNuBar, BinaryIdentityAgainstCovarianceEnumeration) {
  Rng rng(54);
  for (int rep = 0; rep < 8; ++rep) {
    const auto law = exact_law(testkit::random_model(rng, {2, 4, 0.1, 0.8}));
    detail::for_each_subset(4, 2, [&](const LagSet& s) {
      for (Lag k : s.complement())
        EXPECT_NEAR(exact_nu_bar(law, k, s), 2.0 * brute_force_abs_cov(law, k, s), 1e-12);
    });
  }
}

TEST(ExactNuBar, Preconditions) {
  const auto law = exact_law(benchmark_model_1(3, 1, 3));
  EXPECT_THROW(exact_nu_bar(law, -1, LagSet(3, {-1})), contract_error);
  EXPECT_THROW(exact_nu_bar(law, -4, LagSet(3, {})), contract_error);
}

TEST(ExactNuBar, EmpiricalEstimateIsClose) {
  const auto model = benchmark_model_1(3, 1, 3);
  const auto law = exact_law(model);
  const auto seq = simulate(model, 100000, 12);
  for (const LagSet& s : {LagSet(3, {}), LagSet(3, {-1}), LagSet(3, {-3})})
    for (Lag k : s.complement()) EXPECT_NEAR(nu_hat(seq, k, s, 3, seq.size()), exact_nu_bar(law, k, s), 0.02);
}

// --- structural checks --------------------------------------------------------------

TEST(Structure, TernaryModelIdentityResiduals) {
  Rng rng(55);
  for (int rep = 0; rep < 5; ++rep) {
    const auto law = exact_law(testkit::random_model(rng, {3, 3, 0.1, 0.8, 0.15, rep % 2 == 1}));
    const auto r = verify_structure(law);
    EXPECT_LE(r.cov_identity_max_residual, 1e-10);
    EXPECT_EQ(r.cov_bound_violations, 0u);
    EXPECT_EQ(r.zero_violations, 0u);
    EXPECT_FALSE(r.binary_identity_max_residual.has_value());
    EXPECT_EQ(r.entries.size(), 12u);  // sum over S of |S^c| for d = 3
    EXPECT_TRUE(r.passed());
  }
}

TEST(Structure, BenchmarkKappaAboveLowerBound) {
  const auto law = exact_law(benchmark_model_1(3, 1, 3));
  const auto r = verify_structure(law);
  ASSERT_TRUE(r.kappa && r.kappa_lower_bound);
  EXPECT_GT(*r.kappa, 0.0);
  EXPECT_GE(*r.kappa, *r.kappa_lower_bound);
  EXPECT_LE(*r.binary_identity_max_residual, 1e-10);
  EXPECT_GT(r.zero_checked, 0u);
  EXPECT_TRUE(r.passed());
}

TEST(Structure, MutatedInfluenceIsDetected) {
  const auto law = exact_law(benchmark_model_1(3, 1, 3));
  StructureOptions opt;
  opt.nu_bar_perturbation = 1e-6;
  const auto r = verify_structure(law, opt);
  EXPECT_GT(r.zero_violations, 0u);
  EXPECT_GT(*r.binary_identity_max_residual, 1e-10);
  EXPECT_FALSE(r.passed());
  opt.nu_bar_perturbation = -0.05;
  EXPECT_GT(verify_structure(law, opt).cov_bound_violations, 0u);
}

TEST(WeakDependence, IndependentAndSingleLagModels) {
  const auto iid = verify_weak_dependence(exact_law(MtdModel::independent(Alphabet::binary(), 3, {0.4, 0.6})));
  EXPECT_EQ(iid.gamma1, 1.0);
  ASSERT_TRUE(iid.gamma2.has_value());
  EXPECT_EQ(*iid.gamma2, 0.0);
  const auto one = verify_weak_dependence(exact_law(single_lag_model(4, -2, 0.6, 0.9, 0.2)));
  EXPECT_EQ(one.gamma1, 1.0);
  const auto ternary = verify_weak_dependence(exact_law(MtdModel::independent(Alphabet::range(3), 2, {0.2, 0.3, 0.5})));
  EXPECT_FALSE(ternary.gamma2.has_value());
}

TEST(WeakDependence, TwoLagModelHasSlackBelowOne) {
  const auto r = verify_weak_dependence(exact_law(benchmark_model_1(3, 1, 3)));
  EXPECT_GT(r.gamma1, 0.0);
  EXPECT_LT(r.gamma1, 1.0);
  EXPECT_GT(*r.gamma2, 0.0);
}

TEST(PairMass, MatchesDirectMinimisation) {
  const auto law = exact_law(benchmark_model_1(3, 1, 3));
  const auto full = law.marginal(std::vector<int>{-3, -2, -1});
  // lag -1: pairs differ only in x_{-1}; lag -3: only in x_{-3}
  double best1 = 0, best3 = 0;
  for (std::size_t a = 0; a < 2; ++a)
    for (std::size_t b = 0; b < 2; ++b) {
      best1 = std::max(best1, std::min(full[a * 4 + b * 2 + 0], full[a * 4 + b * 2 + 1]));
      best3 = std::max(best3, std::min(full[0 * 4 + a * 2 + b], full[1 * 4 + a * 2 + b]));
    }
  EXPECT_NEAR(pcp_pair_mass(law, LagSet::full(3)), std::min(best1, best3), 1e-15);
  EXPECT_THROW(pcp_pair_mass(law, LagSet(3, {-1})), contract_error);
}

// --- forward-stepwise budget --------------------------------------------------------

TEST(ForwardBudget, BinaryArithmetic) {
  const auto fb = ell_xi_star(0.25, Alphabet::binary());
  EXPECT_DOUBLE_EQ(fb.xi_star, 0.0625);
  EXPECT_EQ(fb.ell_star, 32u);
  // halving kappa quadruples ell*
  EXPECT_EQ(ell_xi_star(0.125, Alphabet::binary()).ell_star, 128u);
  // a wider alphabet rescales xi*
  const Alphabet wide({0.0, 1.0, 2.0, 3.0});
  const auto w = ell_xi_star(0.25, wide);
  EXPECT_DOUBLE_EQ(w.xi_star, 0.25 / (4.0 * 3.0 * 3.0));
  EXPECT_EQ(w.ell_star, static_cast<std::size_t>(std::floor(2.0 / (8.0 * w.xi_star * w.xi_star))));
}

TEST(ForwardBudget, DegenerateKappaIsAnError) {
  try {
    ell_xi_star(0.0, Alphabet::binary());
    FAIL() << "expected a contract_error";
  } catch (const contract_error& e) {
    EXPECT_STREQ(e.what(), "no relevant lags or degenerate model (kappa = 0)");
  }
  const auto r = verify_structure(exact_law(MtdModel::independent(Alphabet::binary(), 3, {0.5, 0.5})));
  EXPECT_THROW(ell_xi_star(r, Alphabet::binary()), contract_error);
}

// --- KL bound ---------------------------------------------------------------------

TEST(KlBound, TrivialCases) {
  const auto flat = kl_bound_check(0.5, 0.6, 0.6, 3, 20);
  EXPECT_NEAR(flat.kl, 0.0, 1e-15);
  EXPECT_EQ(flat.bound, 0.0);
  EXPECT_TRUE(flat.holds());
  const auto same = kl_bound_check(0.5, 0.7, 0.5, 3, 20, -2, -2);
  EXPECT_NEAR(same.kl, 0.0, 1e-15);
}

TEST(KlBound, ReferenceCase) {
  const auto c = kl_bound_check(0.5, 0.7, 0.5, 4, 50);
  EXPECT_NEAR(c.bound, 2.0, 1e-12);
  EXPECT_GT(c.kl, 0.0);
  EXPECT_TRUE(c.holds());
}

TEST(KlBound, ChainRuleMatchesPathEnumeration) {
  // KL between the laws of X_1..X_n computed by summing over all 2^n paths
  const int d = 2;
  const std::size_t n = 10;
  const ExactLaw lj(single_lag_model(d, -1, 0.6, 0.9, 0.2));
  const ExactLaw lk(single_lag_model(d, -2, 0.6, 0.9, 0.2));
  double kl = 0;
  std::vector<Symbol> x(n);
  for (std::size_t mask = 0; mask < (std::size_t{1} << n); ++mask) {
    for (std::size_t i = 0; i < n; ++i) x[i] = static_cast<Symbol>(mask >> i & 1);
    const double a = path_log_prob(lj, x), b = path_log_prob(lk, x);
    kl += std::exp(a) * (a - b);
  }
  EXPECT_NEAR(kl_bound_check(0.6, 0.9, 0.2, d, n).kl, kl, 1e-12);
}

TEST(KlBound, GridHoldsEverywhere) {
  const auto checks = kl_grid_checks();
  ASSERT_EQ(checks.size(), 50u);
  for (const auto& c : checks) EXPECT_TRUE(c.holds()) << c.kl << " > " << c.bound;
}

// --- report --------------------------------------------------------------------------

TEST(OracleReport, JsonFields) {
  const auto law = exact_law(benchmark_model_1(3, 1, 3));
  auto r = oracle_report(law);
  r.kl = {kl_bound_check(0.5, 0.7, 0.5, 2, 10)};
  const auto j = oracle_report_to_json(r);
  for (const char* key : {"stationary_residual", "nu_bar", "kappa", "kappa_lower_bound", "P_S", "gamma1_slack",
                          "gamma2", "xi_star", "ell_star", "kl", "passed"})
    EXPECT_TRUE(j.contains(key)) << key;
  EXPECT_TRUE(j["passed"].get<bool>());
  EXPECT_EQ(j["nu_bar"].size(), r.structure.entries.size());
  EXPECT_GT(j["ell_star"].get<std::size_t>(), 0u);
  EXPECT_FALSE(j.contains("coverage"));
}
