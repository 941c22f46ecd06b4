#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "counts.hpp"
#include "error.hpp"
#include "lag_set.hpp"
#include "sequence.hpp"
#include "thresholds.hpp"

namespace mtdlag {

/// One forward-stepwise iteration: the set it started from, every score it
/// computed and the lag it added.
struct FsIteration {
  std::vector<Lag> base;
  std::vector<std::pair<Lag, double>> scores;
  Lag chosen = 0;
  double nu = 0.0;
};

/// Outcome of a pairwise-comparison test for one lag. `has_pair` is false
/// when no compatible pair of observed contexts exists; the lag is then
/// dropped. Otherwise x/y/tv/threshold describe the pair with the largest
/// margin tv - threshold.
struct PairVerdict {
  Lag lag = 0;
  bool kept = false;
  bool has_pair = false;
  std::vector<Symbol> x, y;
  double tv = 0.0;
  double threshold = kInfiniteThreshold;
  double margin = -kInfiniteThreshold;
};

/// Outcome of the influence-based pruning pass of the thresholded variant.
struct PruneVerdict {
  Lag lag = 0;
  double nu = 0.0;
  bool kept = false;
};

struct SelectionTrace {
  std::string method;
  std::vector<FsIteration> fs;
  std::vector<PairVerdict> cut;
  std::vector<PruneVerdict> prune;
  std::optional<LagSet> candidate;
};

struct Selection {
  LagSet lags;
  SelectionTrace trace;
};

namespace detail {

/// Decision rule shared by PCP and CUT: lag j survives iff some pair of
/// observed (S \ {j})-compatible contexts has
///   d_TV(p-hat(.|x), p-hat(.|y)) >= s(x) + s(y).
inline std::pair<LagSet, std::vector<PairVerdict>> pairwise_decide(const ContextCounts& counts,
                                                                   const ThresholdParams& params) {
  const std::size_t k = counts.alphabet_size();
  const std::size_t rows = counts.num_contexts();
  std::vector<double> s(rows);
  std::vector<double> p(rows * k);
  for (std::size_t r = 0; r < rows; ++r) {
    s[r] = s_n_row(counts, r, params);
    const double total = static_cast<double>(counts.total(r));
    const auto c = counts.counts(r);
    for (std::size_t a = 0; a < k; ++a) p[r * k + a] = static_cast<double>(c[a]) / total;
  }

  std::vector<Lag> kept;
  std::vector<PairVerdict> verdicts;
  for (std::size_t pos = 0; pos < counts.width(); ++pos) {
    PairVerdict v;
    v.lag = counts.lag_set()[pos];
    std::size_t best_x = 0, best_y = 0;
    for (std::size_t r = 0; r < rows; ++r) {
      const Symbol b = counts.context(r)[pos];
      for (Symbol c = b + 1; c < k; ++c) {
        const auto r2 = counts.sibling(r, pos, c);
        if (!r2) continue;
        const double tv = tv_distance({p.data() + r * k, k}, {p.data() + *r2 * k, k});
        const double thr = s[r] + s[*r2];
        const double margin = tv - thr;
        if (!v.has_pair || margin > v.margin) {
          v.has_pair = true;
          v.tv = tv;
          v.threshold = thr;
          v.margin = margin;
          best_x = r;
          best_y = *r2;
        }
        if (tv >= thr) v.kept = true;
      }
    }
    if (v.has_pair) {
      const auto cx = counts.context(best_x);
      const auto cy = counts.context(best_y);
      v.x.assign(cx.begin(), cx.end());
      v.y.assign(cy.begin(), cy.end());
    }
    if (v.kept) kept.push_back(v.lag);
    verdicts.push_back(std::move(v));
  }
  return {LagSet(counts.order(), std::move(kept)), std::move(verdicts)};
}

}  // namespace detail

/// Empirical influence statistic nu-hat_{m,k,S} computed from X_1..X_m.
///
/// Contexts x_S are indexed once per base set S; each candidate lag k then
/// costs one pass over the m - d positions plus O(|A|^3) per observed
/// context. Contexts x_S b with zero count contribute nothing.
class InfluenceEstimator {
 public:
  InfluenceEstimator(const SymbolSequence& seq, LagSet base, int order, std::size_t m)
      : seq_(seq), base_(std::move(base)), order_(order), m_(m), k_(seq.alphabet().size()) {
    require(order >= 1, "nu_hat: order must be >= 1");
    require(m > static_cast<std::size_t>(order), "nu_hat: need m - d >= 1");
    require(m <= seq.size(), "nu_hat: m exceeds sequence length");
    for (Lag j : base_) require(j >= -order, "nu_hat: base lag outside [-d, -1]");

    const auto x = seq.data();
    const auto d = static_cast<std::size_t>(order);
    ContextCoder coder(k_, base_.size());
    std::unordered_map<ContextKey, std::uint32_t, ContextKeyHash> ids;
    std::vector<Symbol> ctx(base_.size());
    ctx_id_.reserve(m - d);
    for (std::size_t pos = d; pos < m; ++pos) {
      for (std::size_t i = 0; i < base_.size(); ++i) ctx[i] = x[pos - static_cast<std::size_t>(-base_[i])];
      const auto [it, inserted] = ids.try_emplace(coder.encode(ctx), static_cast<std::uint32_t>(ids.size()));
      ctx_id_.push_back(it->second);
    }
    num_contexts_ = ids.size();
  }

  const LagSet& base() const noexcept { return base_; }

  double operator()(Lag k) {
    require(k <= -1 && k >= -order_, "nu_hat: lag outside [-d, -1]");
    require(!base_.contains(k), "nu_hat: lag already in the conditioning set");
    const auto x = seq_.data();
    const auto d = static_cast<std::size_t>(order_);
    const auto back = static_cast<std::size_t>(-k);
    const std::size_t kk = k_ * k_;
    counts_.assign(num_contexts_ * kk, 0);
    for (std::size_t pos = d; pos < m_; ++pos)
      ++counts_[ctx_id_[pos - d] * kk + x[pos - back] * k_ + x[pos]];

    const double positions = static_cast<double>(m_ - d);
    std::vector<double> marg(k_);
    double nu = 0.0;
    for (std::size_t c = 0; c < num_contexts_; ++c) {
      const std::uint32_t* block = counts_.data() + c * kk;
      double total = 0.0;
      for (std::size_t b = 0; b < k_; ++b) {
        marg[b] = 0.0;
        for (std::size_t a = 0; a < k_; ++a) marg[b] += block[b * k_ + a];
        total += marg[b];
      }
      double inner = 0.0;
      for (std::size_t b = 0; b < k_; ++b) {
        if (marg[b] == 0.0) continue;
        for (std::size_t c2 = b + 1; c2 < k_; ++c2) {
          if (marg[c2] == 0.0) continue;
          double tv = 0.0;
          for (std::size_t a = 0; a < k_; ++a)
            tv += std::abs(block[b * k_ + a] / marg[b] - block[c2 * k_ + a] / marg[c2]);
          // ordered pairs (b, c) and (c, b) contribute equally
          inner += (marg[b] / total) * (marg[c2] / total) * tv;
        }
      }
      nu += (total / positions) * inner;
    }
    return nu;
  }

 private:
  const SymbolSequence& seq_;
  LagSet base_;
  int order_;
  std::size_t m_;
  std::size_t k_;
  std::vector<std::uint32_t> ctx_id_;
  std::size_t num_contexts_ = 0;
  std::vector<std::uint32_t> counts_;
};

/// nu-hat_{m,k,S}: probability-weighted total-variation influence of X_k on
/// X_0 given X_S, estimated from X_1..X_m.
inline double nu_hat(const SymbolSequence& seq, Lag k, const LagSet& base, int order, std::size_t m) {
  InfluenceEstimator est(seq, base, order, m);
  return est(k);
}

/// Pairwise-comparison selection over a known superset S, counts taken on
/// positions m+d+1..n.
inline Selection pcp_select(const SymbolSequence& seq, const LagSet& superset, int order,
                            const ThresholdParams& params, std::size_t m, std::size_t n) {
  Selection out{LagSet(order, {}), {}};
  out.trace.method = "pcp";
  if (superset.empty()) return out;
  const auto counts = count_contexts(seq, superset, m, n, order);
  auto [lags, verdicts] = detail::pairwise_decide(counts, params.validated());
  out.lags = std::move(lags);
  out.trace.cut = std::move(verdicts);
  out.trace.candidate = superset;
  return out;
}

inline Selection pcp_select(const SymbolSequence& seq, const LagSet& superset, int order,
                            const ThresholdParams& params) {
  return pcp_select(seq, superset, order, params, 0, seq.size());
}

/// Greedy forward stepwise growth of a candidate set on X_1..X_m: add the
/// lag with the largest nu-hat until `ell` lags are chosen. Ties go to the
/// most recent lag.
inline Selection fs_step(const SymbolSequence& seq, std::size_t ell, int order, std::size_t m) {
  require(ell <= static_cast<std::size_t>(order), "fs_step: ell exceeds order");
  Selection out{LagSet(order, {}), {}};
  out.trace.method = "fs";
  while (out.lags.size() < ell) {
    InfluenceEstimator est(seq, out.lags, order, m);
    FsIteration it;
    it.base.assign(out.lags.begin(), out.lags.end());
    bool first = true;
    for (Lag k : out.lags.complement()) {
      const double v = est(k);
      it.scores.emplace_back(k, v);
      if (first || v > it.nu) {
        it.chosen = k;
        it.nu = v;
        first = false;
      }
    }
    out.lags = out.lags.with(it.chosen);
    out.trace.fs.push_back(std::move(it));
  }
  out.trace.candidate = out.lags;
  return out;
}

/// CUT: pairwise-comparison pruning of `candidate` using counts on
/// positions m+d+1..n only.
inline Selection cut_step(const SymbolSequence& seq, const LagSet& candidate, int order,
                          const ThresholdParams& params, std::size_t m, std::size_t n) {
  auto out = pcp_select(seq, candidate, order, params, m, n);
  out.trace.method = "cut";
  return out;
}

/// Forward stepwise on X_1..X_m followed by CUT on X_{m+1..n}.
inline Selection fsc_select(const SymbolSequence& seq, int order, std::size_t ell, std::size_t split,
                            const ThresholdParams& params) {
  const std::size_t n = seq.size();
  require(split > static_cast<std::size_t>(order) && split < n, "fsc_select: need n > m > d");
  require(n - split > static_cast<std::size_t>(order), "window shorter than order");
  auto fs = fs_step(seq, ell, order, split);
  auto cut = cut_step(seq, fs.lags, order, params, split, n);
  Selection out{std::move(cut.lags), {}};
  out.trace.method = "fsc";
  out.trace.fs = std::move(fs.trace.fs);
  out.trace.cut = std::move(cut.trace.cut);
  out.trace.candidate = fs.lags;
  return out;
}

inline Selection fsc_select(const SymbolSequence& seq, int order, std::size_t ell, const ThresholdParams& params) {
  return fsc_select(seq, order, ell, seq.size() / 2, params);
}

/// Forward stepwise alone on the whole sample, for binary alphabets when
/// |Lambda| is known.
inline Selection fs_only_select(const SymbolSequence& seq, int order, std::size_t ell) {
  require(seq.alphabet().size() == 2, "fs_only_select: requires a binary alphabet");
  require(seq.size() > static_cast<std::size_t>(order), "window shorter than order");
  return fs_step(seq, ell, order, seq.size());
}

/// Thresholded variant on the whole sample: grow while the best nu-hat
/// exceeds tau, then drop j unless nu-hat_{j, S \ {j}} >= tau.
inline Selection threshold_stepwise_select(const SymbolSequence& seq, int order, double tau) {
  require(tau > 0.0, "threshold_stepwise_select: tau must be > 0");
  const std::size_t n = seq.size();
  require(n > static_cast<std::size_t>(order), "window shorter than order");
  Selection out{LagSet(order, {}), {}};
  out.trace.method = "thresh";
  while (out.lags.size() < static_cast<std::size_t>(order)) {
    InfluenceEstimator est(seq, out.lags, order, n);
    FsIteration it;
    it.base.assign(out.lags.begin(), out.lags.end());
    bool first = true;
    for (Lag k : out.lags.complement()) {
      const double v = est(k);
      it.scores.emplace_back(k, v);
      if (first || v > it.nu) {
        it.chosen = k;
        it.nu = v;
        first = false;
      }
    }
    const bool grow = it.nu > tau;
    out.trace.fs.push_back(std::move(it));
    if (!grow) break;
    out.lags = out.lags.with(out.trace.fs.back().chosen);
  }
  out.trace.candidate = out.lags;

  std::vector<Lag> kept;
  for (Lag j : out.lags) {
    PruneVerdict v{j, nu_hat(seq, j, out.lags.without(j), order, n), false};
    v.kept = v.nu >= tau;
    if (v.kept) kept.push_back(j);
    out.trace.prune.push_back(v);
  }
  out.lags = LagSet(order, std::move(kept));
  return out;
}

inline nlohmann::json trace_to_json(const SelectionTrace& t, const Alphabet& alphabet) {
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  auto values = [&](const std::vector<Symbol>& ctx) {
    nlohmann::json a = nlohmann::json::array();
    for (Symbol s : ctx) a.push_back(alphabet.value(s));
    return a;
  };
  nlohmann::json out = nlohmann::json::array();
  for (std::size_t i = 0; i < t.fs.size(); ++i) {
    const auto& it = t.fs[i];
    nlohmann::json scores = nlohmann::json::array();
    for (const auto& [lag, v] : it.scores) scores.push_back({{"lag", lag}, {"nu", v}});
    out.push_back({{"step", "fs"}, {"iteration", i + 1}, {"base", it.base}, {"argmax", it.chosen},
                   {"nu", it.nu}, {"scores", scores}});
  }
  for (const auto& v : t.cut) {
    nlohmann::json e = {{"step", "cut"}, {"lag", v.lag}, {"kept", v.kept}, {"compatible_pair_observed", v.has_pair}};
    if (v.has_pair) {
      e["x"] = values(v.x);
      e["y"] = values(v.y);
      e["tv"] = v.tv;
      e["threshold"] = num(v.threshold);
      e["margin"] = num(v.margin);
    }
    out.push_back(e);
  }
  for (const auto& v : t.prune) out.push_back({{"step", "prune"}, {"lag", v.lag}, {"nu", v.nu}, {"kept", v.kept}});
  return out;
}

/// {method, params, selected, trace}
inline nlohmann::json selection_to_json(const Selection& s, const nlohmann::json& params, const Alphabet& alphabet) {
  nlohmann::json out;
  out["method"] = s.trace.method;
  out["params"] = params;
  out["selected"] = std::vector<Lag>(s.lags.begin(), s.lags.end());
  if (s.trace.candidate) out["candidate"] = std::vector<Lag>(s.trace.candidate->begin(), s.trace.candidate->end());
  out["trace"] = trace_to_json(s.trace, alphabet);
  return out;
}

}  // namespace mtdlag
