#pragma once

#include <charconv>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "error.hpp"
#include "sequence.hpp"

namespace mtdlag {

enum class SequenceFormat { whitespace, lines, csv };

inline SequenceFormat parse_sequence_format(std::string_view s) {
  if (s == "whitespace" || s == "ws") return SequenceFormat::whitespace;
  if (s == "lines") return SequenceFormat::lines;
  if (s == "csv") return SequenceFormat::csv;
  throw contract_error("unknown sequence format '" + std::string(s) + "'");
}

/// Shortest decimal text that parses back to the same double.
inline std::string format_value(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

/// Maps file tokens to alphabet indices. With an empty token list, tokens
/// are parsed as numbers and matched against the alphabet values.
struct SymbolTable {
  Alphabet alphabet;
  std::vector<std::string> tokens;

  static SymbolTable numeric(Alphabet a) { return {std::move(a), {}}; }

  /// tokens[i] maps to symbol i; values default to 0, 1, ..., |A|-1.
  static SymbolTable named(std::vector<std::string> tokens, std::optional<Alphabet> values = std::nullopt) {
    Alphabet a = values ? *values : Alphabet::range(tokens.size());
    require(a.size() == tokens.size(), "SymbolTable: token count differs from alphabet size");
    return {std::move(a), std::move(tokens)};
  }

  std::optional<Symbol> lookup(std::string_view tok) const {
    if (!tokens.empty()) {
      for (std::size_t i = 0; i < tokens.size(); ++i)
        if (tokens[i] == tok) return static_cast<Symbol>(i);
      return std::nullopt;
    }
    double v = 0;
    const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) return std::nullopt;
    const auto vals = alphabet.values();
    for (std::size_t i = 0; i < vals.size(); ++i)
      if (vals[i] == v) return static_cast<Symbol>(i);
    return std::nullopt;
  }

  std::string token(Symbol s) const {
    return tokens.empty() ? format_value(alphabet.value(s)) : tokens.at(s);
  }
};

struct CsvOptions {
  std::size_t column = 0;
  bool header = false;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::string_view csv_field(std::string_view line, std::size_t column) {
  std::size_t start = 0;
  for (std::size_t c = 0; c < column; ++c) {
    const auto comma = line.find(',', start);
    if (comma == std::string_view::npos) return {};
    start = comma + 1;
  }
  auto end = line.find(',', start);
  auto f = trim(line.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start));
  if (f.size() >= 2 && f.front() == '"' && f.back() == '"') f = f.substr(1, f.size() - 2);
  return f;
}

}  // namespace detail

/// Parses a symbol sequence. Unknown tokens raise data_error naming the
/// line and the 1-based token index.
inline SymbolSequence parse_sequence(std::istream& in, SequenceFormat format, const SymbolTable& table,
                                     const CsvOptions& csv = {}) {
  std::vector<Symbol> data;
  std::string line;
  std::size_t line_no = 0;
  std::size_t token_no = 0;
  auto push = [&](std::string_view tok) {
    ++token_no;
    const auto s = table.lookup(tok);
    if (!s)
      throw data_error("unknown symbol '" + std::string(tok) + "' at line " + std::to_string(line_no) +
                       " (token " + std::to_string(token_no) + ")");
    data.push_back(*s);
  };
  while (std::getline(in, line)) {
    ++line_no;
    const auto t = detail::trim(line);
    if (t.empty()) continue;
    switch (format) {
      case SequenceFormat::whitespace: {
        std::istringstream words{std::string(t)};
        std::string w;
        while (words >> w) push(w);
        break;
      }
      case SequenceFormat::lines:
        if (t.find_first_of(" \t") != std::string_view::npos)
          throw data_error("more than one symbol on line " + std::to_string(line_no));
        push(t);
        break;
      case SequenceFormat::csv:
        if (csv.header && line_no == 1) continue;
        push(detail::csv_field(t, csv.column));
        break;
    }
  }
  if (data.empty()) throw data_error("empty sequence");
  return SymbolSequence(table.alphabet, std::move(data));
}

inline SymbolSequence load_sequence(const std::string& path, SequenceFormat format, const SymbolTable& table,
                                    const CsvOptions& csv = {}) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open sequence file " + path);
  try {
    return parse_sequence(in, format, table, csv);
  } catch (const data_error& e) {
    throw data_error(path + ": " + e.what());
  }
}

/// One symbol per line.
inline void write_sequence(const SymbolSequence& seq, const SymbolTable& table, std::ostream& out) {
  for (Symbol s : seq.data()) out << table.token(s) << '\n';
}

}  // namespace mtdlag
