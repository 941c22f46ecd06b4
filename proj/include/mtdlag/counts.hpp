#pragma once

#include <cstdint>
#include <cstring>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "error.hpp"
#include "lag_set.hpp"
#include "model.hpp"
#include "sequence.hpp"

namespace mtdlag {

/// Hash key of a context x_S. Contexts are packed as base-|A| integers when
/// |A|^|S| fits in 64 bits and stored as raw symbol bytes otherwise.
struct ContextKey {
  std::uint64_t packed = 0;
  std::string wide;

  friend bool operator==(const ContextKey&, const ContextKey&) = default;
};

struct ContextKeyHash {
  std::size_t operator()(const ContextKey& k) const noexcept {
    const std::size_t h = static_cast<std::size_t>(mix64(k.packed));
    return k.wide.empty() ? h : h ^ std::hash<std::string>{}(k.wide);
  }
};

class ContextCoder {
 public:
  ContextCoder() = default;

  ContextCoder(std::size_t alphabet_size, std::size_t width) : width_(width) {
    // Packed iff the largest key |A|^width - 1 fits in 64 bits.
    unsigned __int128 p = 1;
    const unsigned __int128 limit = static_cast<unsigned __int128>(1) << 64;
    for (std::size_t i = 0; i < width && packed_; ++i) {
      powers_.push_back(static_cast<std::uint64_t>(p));
      p *= alphabet_size;
      if (p > limit) packed_ = false;
    }
    if (!packed_) powers_.clear();
  }

  bool packed() const noexcept { return packed_; }

  ContextKey encode(std::span<const Symbol> ctx) const {
    ContextKey key;
    if (packed_) {
      for (std::size_t i = 0; i < width_; ++i) key.packed += ctx[i] * powers_[i];
    } else {
      key.wide.resize(width_ * sizeof(Symbol));
      std::memcpy(key.wide.data(), ctx.data(), width_ * sizeof(Symbol));
    }
    return key;
  }

  /// Key of the context obtained by replacing coordinate `pos` (currently
  /// `from`) with `to`.
  ContextKey replace(ContextKey key, std::size_t pos, Symbol from, Symbol to) const {
    if (packed_) {
      key.packed += (static_cast<std::uint64_t>(to) - static_cast<std::uint64_t>(from)) * powers_[pos];
    } else {
      std::memcpy(key.wide.data() + pos * sizeof(Symbol), &to, sizeof(Symbol));
    }
    return key;
  }

 private:
  std::size_t width_ = 0;
  bool packed_ = true;
  std::vector<std::uint64_t> powers_;
};

/// Counts N_{m,n}(x_S, a) over positions t = m+d+1, ..., n (1-based) of a
/// sequence. Only contexts with a positive total are stored; rows are kept
/// in order of first occurrence.
class ContextCounts {
 public:
  ContextCounts(LagSet lags, std::size_t m, std::size_t n, int order, std::size_t alphabet_size)
      : lags_(std::move(lags)), m_(m), n_(n), order_(order), k_(alphabet_size),
        coder_(alphabet_size, lags_.size()) {}

  const LagSet& lag_set() const noexcept { return lags_; }
  std::size_t window_start() const noexcept { return m_; }
  std::size_t window_end() const noexcept { return n_; }
  int order() const noexcept { return order_; }
  std::size_t alphabet_size() const noexcept { return k_; }
  std::size_t width() const noexcept { return lags_.size(); }
  /// Number of countable positions, n - m - d.
  std::size_t positions() const noexcept { return n_ - m_ - static_cast<std::size_t>(order_); }
  const ContextCoder& coder() const noexcept { return coder_; }

  std::size_t num_contexts() const noexcept { return totals_.size(); }

  std::span<const Symbol> context(std::size_t row) const {
    return {contexts_.data() + row * width(), width()};
  }
  std::span<const std::uint64_t> counts(std::size_t row) const {
    return {counts_.data() + row * k_, k_};
  }
  std::uint64_t total(std::size_t row) const { return totals_[row]; }

  std::optional<std::size_t> find(const ContextKey& key) const {
    const auto it = index_.find(key);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }
  std::optional<std::size_t> find(std::span<const Symbol> ctx) const {
    require(ctx.size() == width(), "ContextCounts: context width mismatch");
    return find(coder_.encode(ctx));
  }

  ContextKey key(std::size_t row) const { return coder_.encode(context(row)); }

  /// Row of the context equal to row `row` except at coordinate `pos`,
  /// which is set to `c`.
  std::optional<std::size_t> sibling(std::size_t row, std::size_t pos, Symbol c) const {
    const auto ctx = context(row);
    return find(coder_.replace(key(row), pos, ctx[pos], c));
  }

  /// N-bar over the context of x_S; 0 when unseen.
  std::uint64_t total_of(std::span<const Symbol> ctx) const {
    const auto r = find(ctx);
    return r ? totals_[*r] : 0;
  }

  void add(std::span<const Symbol> ctx, Symbol a) {
    auto key = coder_.encode(ctx);
    auto [it, inserted] = index_.try_emplace(std::move(key), totals_.size());
    if (inserted) {
      contexts_.insert(contexts_.end(), ctx.begin(), ctx.end());
      counts_.resize(counts_.size() + k_, 0);
      totals_.push_back(0);
    }
    counts_[it->second * k_ + a] += 1;
    totals_[it->second] += 1;
  }

 private:
  LagSet lags_;
  std::size_t m_, n_;
  int order_;
  std::size_t k_;
  ContextCoder coder_;
  std::unordered_map<ContextKey, std::size_t, ContextKeyHash> index_;
  std::vector<Symbol> contexts_;
  std::vector<std::uint64_t> counts_;
  std::vector<std::uint64_t> totals_;
};

/// Counts N_{m,n}(x_S, a) = #{t in [m+d+1, n] : X_{t+j} = x_j for j in S, X_t = a}.
inline ContextCounts count_contexts(const SymbolSequence& seq, const LagSet& lags, std::size_t m,
                                    std::size_t n, int order) {
  require(order >= 1, "count_contexts: order must be >= 1");
  require(n > m && n - m > static_cast<std::size_t>(order), "window shorter than order");
  require(seq.size() >= n, "count_contexts: sequence shorter than window end");
  for (Lag j : lags) require(j >= -order, "count_contexts: lag outside [-d, -1]");

  ContextCounts out(lags, m, n, order, seq.alphabet().size());
  const auto x = seq.data();
  std::vector<Symbol> ctx(lags.size());
  for (std::size_t t = m + static_cast<std::size_t>(order) + 1; t <= n; ++t) {
    const std::size_t pos = t - 1;
    for (std::size_t i = 0; i < lags.size(); ++i) ctx[i] = x[pos - static_cast<std::size_t>(-lags[i])];
    out.add(ctx, x[pos]);
  }
  return out;
}

/// p-hat(. | x_S) = N(x_S, .) / N-bar(x_S), or uniform when x_S is unseen.
inline Distribution empirical_transition(const ContextCounts& counts, std::span<const Symbol> ctx) {
  const std::size_t k = counts.alphabet_size();
  Distribution p(k, 1.0 / static_cast<double>(k));
  if (const auto r = counts.find(ctx)) {
    const double total = static_cast<double>(counts.total(*r));
    const auto c = counts.counts(*r);
    for (std::size_t a = 0; a < k; ++a) p[a] = static_cast<double>(c[a]) / total;
  }
  return p;
}

inline Distribution empirical_transition_row(const ContextCounts& counts, std::size_t row) {
  const std::size_t k = counts.alphabet_size();
  Distribution p(k);
  const double total = static_cast<double>(counts.total(row));
  const auto c = counts.counts(row);
  for (std::size_t a = 0; a < k; ++a) p[a] = static_cast<double>(c[a]) / total;
  return p;
}

/// P-hat(x_S) = N-bar(x_S) / (number of countable positions).
inline double empirical_marginal(const ContextCounts& counts, std::span<const Symbol> ctx) {
  return static_cast<double>(counts.total_of(ctx)) / static_cast<double>(counts.positions());
}

inline std::string format_context(const ContextCounts& counts, const Alphabet& alphabet,
                                  std::span<const Symbol> ctx) {
  std::string s;
  for (std::size_t i = 0; i < ctx.size(); ++i) {
    if (i) s += ';';
    s += std::to_string(counts.lag_set()[i]);
    s += '=';
    std::ostringstream v;
    v << alphabet.value(ctx[i]);
    s += v.str();
  }
  return s;
}

/// Debug dump: one line per (context, symbol) with a positive count.
inline void write_counts_csv(const ContextCounts& counts, const Alphabet& alphabet, std::ostream& out) {
  out << "context,symbol,count\n";
  for (std::size_t r = 0; r < counts.num_contexts(); ++r) {
    const auto c = counts.counts(r);
    for (std::size_t a = 0; a < c.size(); ++a) {
      if (c[a] == 0) continue;
      out << format_context(counts, alphabet, counts.context(r)) << ',' << alphabet.value(static_cast<Symbol>(a))
          << ',' << c[a] << '\n';
    }
  }
}

}  // namespace mtdlag
