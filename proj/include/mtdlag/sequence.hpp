#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"

namespace mtdlag {

/// Symbols are stored as indices into an Alphabet.
using Symbol = std::uint32_t;

/// Ordered finite set of distinct real-valued symbols.
class Alphabet {
 public:
  Alphabet() : Alphabet(std::vector<double>{0.0, 1.0}) {}

  explicit Alphabet(std::vector<double> values) : values_(std::move(values)) {
    require(values_.size() >= 2, "Alphabet: need at least two symbols");
    for (std::size_t i = 0; i < values_.size(); ++i) {
      require(std::isfinite(values_[i]), "Alphabet: non-finite symbol value");
      for (std::size_t k = 0; k < i; ++k)
        require(values_[i] != values_[k], "Alphabet: duplicate symbol value");
    }
  }

  static Alphabet binary() { return Alphabet({0.0, 1.0}); }

  static Alphabet range(std::size_t size) {
    std::vector<double> v(size);
    for (std::size_t i = 0; i < size; ++i) v[i] = static_cast<double>(i);
    return Alphabet(std::move(v));
  }

  std::size_t size() const noexcept { return values_.size(); }
  double value(Symbol s) const { return values_.at(s); }
  std::span<const double> values() const noexcept { return values_; }

  bool is_binary() const noexcept {
    return values_.size() == 2 && values_[0] == 0.0 && values_[1] == 1.0;
  }

  /// max |a|
  double sup_norm() const {
    double m = 0;
    for (double v : values_) m = std::max(m, std::abs(v));
    return m;
  }

  /// max |a - b|
  double diameter() const {
    auto [lo, hi] = std::minmax_element(values_.begin(), values_.end());
    return *hi - *lo;
  }

  /// min |a - b| over a != b
  double min_gap() const {
    double g = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < values_.size(); ++i)
      for (std::size_t k = 0; k < i; ++k) g = std::min(g, std::abs(values_[i] - values_[k]));
    return g;
  }

  friend bool operator==(const Alphabet&, const Alphabet&) = default;

 private:
  std::vector<double> values_;
};

/// Observed sample X_1..X_n as alphabet indices. data[t-1] holds X_t.
class SymbolSequence {
 public:
  SymbolSequence() = default;

  SymbolSequence(Alphabet alphabet, std::vector<Symbol> data)
      : alphabet_(std::move(alphabet)), data_(std::move(data)) {
    for (std::size_t t = 0; t < data_.size(); ++t)
      require(data_[t] < alphabet_.size(),
              "SymbolSequence: index out of range at position " + std::to_string(t + 1));
  }

  const Alphabet& alphabet() const noexcept { return alphabet_; }
  std::span<const Symbol> data() const noexcept { return data_; }
  std::size_t size() const noexcept { return data_.size(); }
  Symbol operator[](std::size_t i) const { return data_[i]; }

  friend bool operator==(const SymbolSequence&, const SymbolSequence&) = default;

 private:
  Alphabet alphabet_;
  std::vector<Symbol> data_;
};

}  // namespace mtdlag
