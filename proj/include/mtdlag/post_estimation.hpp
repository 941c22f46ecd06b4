#pragma once

#include <cmath>
#include <cstdint>
#include <ostream>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "counts.hpp"
#include "sequence_io.hpp"
#include "thresholds.hpp"

namespace mtdlag {

struct KernelRow {
  std::vector<Symbol> context;
  Distribution p_hat;
  std::uint64_t count = 0;
  /// radius[a]; infinite for unseen contexts
  std::vector<double> radius;
};

/// Confidence radius sqrt(2 alpha (1+eps) V(a,x) / N) + alpha / (3 N).
inline double confidence_radius(double p_hat, std::uint64_t n_bar, const ThresholdParams& params) {
  if (n_bar == 0) return kInfiniteThreshold;
  const double nb = static_cast<double>(n_bar);
  return std::sqrt(2.0 * params.alpha * (1.0 + params.epsilon) * v_hat(p_hat, n_bar, params) / nb) +
         params.alpha / (3.0 * nb);
}

/// Transition table on a selected lag set with per-cell confidence radii.
class EstimatedKernel {
 public:
  EstimatedKernel(ContextCounts counts, ThresholdParams params)
      : counts_(std::move(counts)), params_(params) {}

  const LagSet& lag_set() const noexcept { return counts_.lag_set(); }
  const ThresholdParams& params() const noexcept { return params_; }
  const ContextCounts& counts() const noexcept { return counts_; }

  /// Row for any context in A^S; unseen contexts get the uniform law and
  /// infinite radii.
  KernelRow row(std::span<const Symbol> ctx) const {
    const std::size_t k = counts_.alphabet_size();
    KernelRow r;
    r.context.assign(ctx.begin(), ctx.end());
    r.p_hat = empirical_transition(counts_, ctx);
    r.count = counts_.total_of(ctx);
    r.radius.resize(k);
    for (std::size_t a = 0; a < k; ++a) r.radius[a] = confidence_radius(r.p_hat[a], r.count, params_);
    return r;
  }

  /// Observed rows in first-occurrence order.
  std::vector<KernelRow> observed_rows() const {
    std::vector<KernelRow> out;
    for (std::size_t i = 0; i < counts_.num_contexts(); ++i) out.push_back(row(counts_.context(i)));
    return out;
  }

  /// Every context of A^S in lexicographic order (first lag varies slowest).
  /// Falls back to observed rows when |A|^|S| exceeds `cap`.
  std::vector<KernelRow> all_rows(std::size_t cap = std::size_t{1} << 20) const {
    const std::size_t k = counts_.alphabet_size();
    const std::size_t w = counts_.width();
    double total = 1.0;
    for (std::size_t i = 0; i < w; ++i) total *= static_cast<double>(k);
    if (total > static_cast<double>(cap)) return observed_rows();
    std::vector<KernelRow> out;
    std::vector<Symbol> ctx(w, 0);
    while (true) {
      out.push_back(row(ctx));
      std::size_t i = w;
      while (i > 0 && ++ctx[i - 1] == k) ctx[--i] = 0;
      if (i == 0) break;
    }
    return out;
  }

 private:
  ContextCounts counts_;
  ThresholdParams params_;
};

/// Counts on the whole sample (positions d+1..n) for the given lag set.
inline EstimatedKernel estimate_kernel(const SymbolSequence& seq, const LagSet& lags, int order,
                                       const ThresholdParams& params) {
  require(!lags.empty(), "estimate_kernel: lag set must be nonempty");
  require(seq.size() > static_cast<std::size_t>(order), "window shorter than order");
  return EstimatedKernel(count_contexts(seq, lags, 0, seq.size(), order), params.validated());
}

inline void write_kernel_csv(const EstimatedKernel& kernel, const SymbolTable& table, std::ostream& out) {
  out << "context,symbol,p_hat,count,radius\n";
  for (const auto& r : kernel.all_rows()) {
    const auto ctx = format_context(kernel.counts(), table.alphabet, r.context);
    for (std::size_t a = 0; a < r.p_hat.size(); ++a) {
      out << ctx << ',' << table.token(static_cast<Symbol>(a)) << ',' << format_value(r.p_hat[a]) << ','
          << r.count << ',' << (std::isfinite(r.radius[a]) ? format_value(r.radius[a]) : std::string("inf")) << '\n';
    }
  }
}

inline nlohmann::json kernel_to_json(const EstimatedKernel& kernel, const Alphabet& alphabet) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : kernel.all_rows()) {
    nlohmann::json ctx = nlohmann::json::array();
    for (Symbol s : r.context) ctx.push_back(alphabet.value(s));
    nlohmann::json radius = nlohmann::json::array();
    for (double v : r.radius) radius.push_back(std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr));
    rows.push_back({{"context", ctx}, {"p_hat", r.p_hat}, {"count", r.count}, {"radius", radius}});
  }
  return {{"lags", std::vector<Lag>(kernel.lag_set().begin(), kernel.lag_set().end())},
          {"params", kernel.params()},
          {"rows", rows}};
}

}  // namespace mtdlag
