#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "mtdlag/mtdlag.hpp"
#include "test_support.hpp"

using namespace mtdlag;

TEST(ConfidenceRadius, FormulaAndLimits) {
  const ThresholdParams p{0.1, 2.0, 0.5};
  const double v = v_hat(0.3, 400, p);
  EXPECT_DOUBLE_EQ(confidence_radius(0.3, 400, p), std::sqrt(2.0 * 2.0 * 1.1 * v / 400.0) + 2.0 / 1200.0);
  EXPECT_TRUE(std::isinf(confidence_radius(0.3, 0, p)));
  EXPECT_GT(confidence_radius(0.3, 100, p), confidence_radius(0.3, 1000, p));
}

TEST(EstimatedKernel, RowsCoverEveryContext) {
  const SymbolSequence seq(Alphabet::binary(), {0, 1, 1, 0, 1, 1, 0, 1, 1, 0, 1});
  const auto k = estimate_kernel(seq, LagSet(2, {-1, -2}), 2, {});
  const auto rows = k.all_rows();
  ASSERT_EQ(rows.size(), 4u);
  // context (x_{-1}, x_{-2}) = (0, 0) never occurs
  EXPECT_EQ(rows[0].count, 0u);
  EXPECT_DOUBLE_EQ(rows[0].p_hat[0], 0.5);
  EXPECT_TRUE(std::isinf(rows[0].radius[1]));
  // (1, 0) is always followed by 1, (1, 1) by 0
  EXPECT_EQ(rows[2].count, 3u);
  EXPECT_DOUBLE_EQ(rows[2].p_hat[1], 1.0);
  EXPECT_EQ(rows[3].count, 3u);
  EXPECT_DOUBLE_EQ(rows[3].p_hat[0], 1.0);
  EXPECT_EQ(k.observed_rows().size(), 3u);
}

TEST(EstimatedKernel, Preconditions) {
  const SymbolSequence seq(Alphabet::binary(), {0, 1, 1});
  EXPECT_THROW(estimate_kernel(seq, LagSet(2, {}), 2, {}), contract_error);
  EXPECT_THROW(estimate_kernel(seq, LagSet(3, {-1}), 3, {}), contract_error);
}

TEST(EstimatedKernel, CsvLayout) {
  const SymbolSequence seq(Alphabet::binary(), {0, 0, 1, 0, 1, 1});
  const auto k = estimate_kernel(seq, LagSet(1, {-1}), 1, ThresholdParams{0.1, 1.0, 0.5});
  std::ostringstream out;
  write_kernel_csv(k, SymbolTable::numeric(Alphabet::binary()), out);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "context,symbol,p_hat,count,radius");
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  ASSERT_EQ(lines.size(), 4u);
  // after 0: 0, 1, 1  -> p_hat(0) = 1/3
  EXPECT_EQ(lines[0].substr(0, 7), "-1=0,0,");
  EXPECT_NE(lines[0].find(",3,"), std::string::npos);
  EXPECT_EQ(lines[3].substr(0, 7), "-1=1,1,");
}

TEST(EstimatedKernel, CsvMarksUnseenRadiusAsInf) {
  const SymbolSequence seq(Alphabet::binary(), {0, 0, 0, 0});
  const auto k = estimate_kernel(seq, LagSet(1, {-1}), 1, {});
  std::ostringstream out;
  write_kernel_csv(k, SymbolTable::named({"a", "b"}), out);
  EXPECT_NE(out.str().find("-1=1,a,0.5,0,inf"), std::string::npos);
}

TEST(EstimatedKernel, JsonUsesNullForUnseenRadius) {
  const SymbolSequence seq(Alphabet::binary(), {0, 0, 0, 0});
  const auto j = kernel_to_json(estimate_kernel(seq, LagSet(1, {-1}), 1, {}), Alphabet::binary());
  EXPECT_EQ(j["lags"], nlohmann::json::array({-1}));
  ASSERT_EQ(j["rows"].size(), 2u);
  EXPECT_TRUE(j["rows"][1]["radius"][0].is_null());
  EXPECT_EQ(j["rows"][0]["count"], 3);
}

TEST(Coverage, RadiiHoldAtTheNominalRate) {
  const auto model = benchmark_model_1(3, 1, 3);
  const auto rep = threshold_coverage(model, 2000, 500, ThresholdParams{0.1, 8.0, 0.5}, 17);
  EXPECT_LT(rep.bound, 0.1);
  EXPECT_LE(rep.max_frequency, rep.bound + 3.0 * rep.standard_error)
      << "max " << rep.max_frequency << " bound " << rep.bound;
}

TEST(Coverage, BoundFormula) {
  const ThresholdParams p{0.1, 3.0, 0.5};
  const double steps = std::ceil(std::log(0.5 * 1997.0 / 3.0 + 2.0) / std::log(1.1));
  EXPECT_DOUBLE_EQ(deviation_bound(2000, 3, p), std::min(1.0, 4.0 * steps * std::exp(-3.0)));
  EXPECT_DOUBLE_EQ(deviation_bound(2000, 3, {0.1, 0.5, 0.5}), 1.0);
}

TEST(Estimate, TrueLagSetStandardDeviation) {
  // p-hat(0 | x_{-1} = 0, x_{-5} = 0) on the second benchmark, lags given
  const auto model = benchmark_model_2(5, 1, 5);
  std::vector<double> est;
  for (std::uint64_t r = 0; r < 100; ++r) {
    const auto seq = simulate(model, 8192, derive_seed(21, r));
    const auto k = estimate_kernel(seq, LagSet(5, {-1, -5}), 5, {});
    const std::vector<Symbol> ctx{0, 0};
    est.push_back(k.row(ctx).p_hat[0]);
  }
  double mean = 0, var = 0;
  for (double v : est) mean += v;
  mean /= static_cast<double>(est.size());
  for (double v : est) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(est.size() - 1));
  const std::vector<Symbol> past{0, 0, 0, 0, 0};
  EXPECT_NEAR(mean, transition_prob(model, past)[0], 3.0 * sd / 10.0 + 1e-3);
  EXPECT_GE(sd, 0.006);
  EXPECT_LE(sd, 0.026);
}
