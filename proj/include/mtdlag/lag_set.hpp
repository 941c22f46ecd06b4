#pragma once

#include <algorithm>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"

namespace mtdlag {

/// Lags are negative offsets into the past: -1 is the previous symbol.
using Lag = int;

/// A subset of the lag range [-d, -1], kept sorted from the most recent
/// lag (-1) towards the oldest (-d).
class LagSet {
 public:
  LagSet() = default;

  LagSet(int order, std::vector<Lag> lags) : order_(order), lags_(std::move(lags)) {
    require(order_ >= 1, "LagSet: order must be >= 1");
    std::sort(lags_.begin(), lags_.end(), std::greater<>());
    for (std::size_t i = 0; i < lags_.size(); ++i) {
      require(lags_[i] <= -1 && lags_[i] >= -order_,
              "LagSet: lag " + std::to_string(lags_[i]) + " outside [-" +
                  std::to_string(order_) + ", -1]");
      require(i == 0 || lags_[i] != lags_[i - 1],
              "LagSet: duplicate lag " + std::to_string(lags_[i]));
    }
  }

  LagSet(int order, std::initializer_list<Lag> lags)
      : LagSet(order, std::vector<Lag>(lags)) {}

  static LagSet full(int order) {
    std::vector<Lag> all;
    for (int j = -1; j >= -order; --j) all.push_back(j);
    return LagSet(order, std::move(all));
  }

  int order() const noexcept { return order_; }
  std::size_t size() const noexcept { return lags_.size(); }
  bool empty() const noexcept { return lags_.empty(); }
  std::span<const Lag> lags() const noexcept { return lags_; }
  Lag operator[](std::size_t i) const { return lags_[i]; }
  auto begin() const noexcept { return lags_.begin(); }
  auto end() const noexcept { return lags_.end(); }

  bool contains(Lag j) const {
    return std::find(lags_.begin(), lags_.end(), j) != lags_.end();
  }

  /// Position of lag j in iteration order, or size() when absent.
  std::size_t index_of(Lag j) const {
    return static_cast<std::size_t>(std::find(lags_.begin(), lags_.end(), j) - lags_.begin());
  }

  LagSet with(Lag j) const {
    auto v = lags_;
    if (!contains(j)) v.push_back(j);
    return LagSet(order_, std::move(v));
  }

  LagSet without(Lag j) const {
    auto v = lags_;
    v.erase(std::remove(v.begin(), v.end(), j), v.end());
    return LagSet(order_, std::move(v));
  }

  /// Lags of [-d, -1] not in this set, most recent first.
  std::vector<Lag> complement() const {
    std::vector<Lag> out;
    for (int j = -1; j >= -order_; --j)
      if (!contains(j)) out.push_back(j);
    return out;
  }

  bool is_subset_of(const LagSet& other) const {
    return std::all_of(lags_.begin(), lags_.end(), [&](Lag j) { return other.contains(j); });
  }

  friend bool operator==(const LagSet& a, const LagSet& b) {
    return a.lags_ == b.lags_;
  }

  std::string to_string() const {
    std::string s = "{";
    for (std::size_t i = 0; i < lags_.size(); ++i) {
      if (i) s += ", ";
      s += std::to_string(lags_[i]);
    }
    return s + "}";
  }

 private:
  int order_ = 1;
  std::vector<Lag> lags_;
};

}  // namespace mtdlag
