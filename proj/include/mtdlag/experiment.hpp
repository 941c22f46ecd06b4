#pragma once

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <exception>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <type_traits>
#include <vector>

#include <nlohmann/json.hpp>

#include "counts.hpp"
#include "error.hpp"
#include "lag_select.hpp"
#include "model.hpp"
#include "model_io.hpp"
#include "reference_models.hpp"
#include "rng.hpp"
#include "sequence_io.hpp"
#include "thresholds.hpp"

namespace mtdlag {

/// One selection method of an experiment: pcp | fsc:ell | fs:ell | thresh:tau | naive.
struct MethodSpec {
  enum class Kind { pcp, fsc, fs, thresh, naive };
  Kind kind = Kind::pcp;
  std::size_t ell = 0;
  double tau = 0.0;
  std::string name;

  /// Methods whose outcome depends on the threshold constant C.
  bool uses_threshold() const { return kind == Kind::pcp || kind == Kind::fsc; }
  /// Methods that select lags (naive only estimates).
  bool selects() const { return kind != Kind::naive; }
};

inline MethodSpec parse_method(const std::string& text) {
  MethodSpec m;
  m.name = text;
  const auto colon = text.find(':');
  const std::string head = text.substr(0, colon);
  const std::string arg = colon == std::string::npos ? std::string() : text.substr(colon + 1);
  auto need_arg = [&] {
    if (arg.empty()) throw contract_error("method '" + text + "' needs an argument after ':'");
  };
  auto parse_size = [&] {
    need_arg();
    std::size_t v = 0;
    const auto r = std::from_chars(arg.data(), arg.data() + arg.size(), v);
    if (r.ec != std::errc() || r.ptr != arg.data() + arg.size() || v == 0)
      throw contract_error("method '" + text + "': ell must be a positive integer");
    return v;
  };
  if (head == "pcp" && arg.empty()) {
    m.kind = MethodSpec::Kind::pcp;
  } else if (head == "naive" && arg.empty()) {
    m.kind = MethodSpec::Kind::naive;
  } else if (head == "fsc") {
    m.kind = MethodSpec::Kind::fsc;
    m.ell = parse_size();
  } else if (head == "fs") {
    m.kind = MethodSpec::Kind::fs;
    m.ell = parse_size();
  } else if (head == "thresh") {
    need_arg();
    m.kind = MethodSpec::Kind::thresh;
    const auto r = std::from_chars(arg.data(), arg.data() + arg.size(), m.tau);
    if (r.ec != std::errc() || r.ptr != arg.data() + arg.size() || !(m.tau > 0.0))
      throw contract_error("method '" + text + "': tau must be a positive number");
  } else {
    throw contract_error("unknown method '" + text + "' (expected pcp | fsc:ell | fs:ell | thresh:tau | naive)");
  }
  return m;
}

struct ExperimentConfig {
  MtdModel model;
  std::vector<MethodSpec> methods;
  std::vector<std::size_t> sizes;
  std::size_t replications = 100;
  std::uint64_t seed = 1;
  double epsilon = 0.1;
  double mu = 0.5;
  /// Fixed C in alpha = C log n; when empty C is tuned on `grid_c`.
  std::optional<double> alpha_c;
  std::vector<double> grid_c = {0.5, 1.0, 2.0, 4.0};
  std::size_t grid_n = 100;
  std::optional<std::size_t> grid_replications;
  /// Fraction of the sample used by the forward-stepwise phase.
  double split = 0.5;
  /// Report the spread of p-hat(target_symbol | target_context on the selected lags).
  bool estimate = false;
  Symbol target_symbol = 0;
  Symbol target_context = 0;
  std::size_t threads = 0;
  std::size_t burn_in = kDefaultBurnIn;

  void validate() const {
    require_valid(model);
    if (methods.empty()) throw contract_error("config: at least one method is required");
    if (sizes.empty()) throw contract_error("config: at least one sample size is required");
    if (replications < 1) throw contract_error("config: replications must be >= 1");
    for (auto n : sizes)
      if (n <= static_cast<std::size_t>(model.order) + 1)
        throw contract_error("config: sample size " + std::to_string(n) + " must exceed d + 1");
    if (!(split > 0.0 && split < 1.0)) throw contract_error("config: split must lie in (0, 1)");
    if (alpha_c && !(*alpha_c > 0.0)) throw contract_error("config: alpha_c must be > 0");
    if (!alpha_c) {
      if (grid_c.empty()) throw contract_error("config: grid_c must be nonempty when alpha_c is not fixed");
      for (double c : grid_c)
        if (!(c > 0.0)) throw contract_error("config: grid_c values must be > 0");
      if (grid_n <= static_cast<std::size_t>(model.order) + 1)
        throw contract_error("config: grid_n must exceed d + 1");
    }
    if (target_symbol >= model.alphabet.size() || target_context >= model.alphabet.size())
      throw contract_error("config: target symbols outside the alphabet");
    (void)ThresholdParams{epsilon, 1.0, mu}.validated();
  }
};

inline ExperimentConfig experiment_config_from_json(const nlohmann::json& j, const std::string& base_dir = ".") {
  ExperimentConfig c;
  try {
    if (j.contains("model")) {
      const auto& m = j.at("model");
      c.model = m.is_string() ? load_model(m.get<std::string>().starts_with("/") ? m.get<std::string>()
                                                                                 : base_dir + "/" + m.get<std::string>())
                              : model_from_json(m);
    } else {
      throw contract_error("config: missing 'model'");
    }
    for (const auto& m : j.at("methods")) c.methods.push_back(parse_method(m.get<std::string>()));
    c.sizes = j.at("sizes").get<std::vector<std::size_t>>();
    if (j.contains("replications")) {
      const auto r = j.at("replications").get<long long>();
      if (r < 1) throw contract_error("config: replications must be >= 1");
      c.replications = static_cast<std::size_t>(r);
    }
    c.seed = j.value("seed", c.seed);
    c.epsilon = j.value("epsilon", c.epsilon);
    c.mu = j.value("mu", c.mu);
    if (j.contains("alpha_c") && !j.at("alpha_c").is_null()) c.alpha_c = j.at("alpha_c").get<double>();
    c.grid_c = j.value("grid_c", c.grid_c);
    c.grid_n = j.value("grid_n", c.grid_n);
    if (j.contains("grid_replications")) c.grid_replications = j.at("grid_replications").get<std::size_t>();
    c.split = j.value("split", c.split);
    c.estimate = j.value("estimate", c.estimate);
    c.target_symbol = j.value("target_symbol", c.target_symbol);
    c.target_context = j.value("target_context", c.target_context);
    c.threads = j.value("threads", c.threads);
    c.burn_in = j.value("burn_in", c.burn_in);
  } catch (const nlohmann::json::exception& e) {
    throw contract_error(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open config file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw data_error(path + ": " + e.what());
  }
  const auto slash = path.find_last_of('/');
  return experiment_config_from_json(j, slash == std::string::npos ? "." : path.substr(0, slash));
}

/// Outcome of one replication of one method.
struct ReplicationOutcome {
  LagSet selected;
  bool correct = false;
  double estimate = 0.0;
};

struct ExperimentRow {
  std::string method;
  std::size_t n = 0;
  std::optional<double> alpha_c;
  std::size_t replications = 0;
  std::optional<std::size_t> successes;
  std::optional<double> frequency;
  std::optional<double> standard_error;
  std::optional<double> mean_estimate;
  std::optional<double> sd_estimate;
  std::optional<double> rmse;
};

struct GridPoint {
  std::string method;
  double c = 0.0;
  double frequency = 0.0;
};

struct ExperimentResult {
  std::vector<ExperimentRow> rows;
  std::vector<GridPoint> grid;
  std::optional<double> truth;
};

/// Runs `body(i)` for i in [0, count) on `threads` workers. Each index is
/// processed exactly once; callers write to slot i so the result does not
/// depend on scheduling.
template <typename F>
void parallel_for(std::size_t count, std::size_t threads, F&& body) {
  if (threads == 0) threads = std::max<std::size_t>(1, std::thread::hardware_concurrency());
  threads = std::min(threads, count);
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (std::size_t i; (i = next++) < count;) {
        if (failed) return;
        try {
          body(i);
        } catch (...) {
          if (!failed.exchange(true)) failure = std::current_exception();
          return;
        }
      }
    });
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

/// p-hat(a | x_S = (c, ..., c)) on the whole sample; uniform when unseen.
inline double constant_context_estimate(const SymbolSequence& seq, const LagSet& lags, int order, Symbol a, Symbol c) {
  const auto counts = count_contexts(seq, lags, 0, seq.size(), order);
  const std::vector<Symbol> ctx(lags.size(), c);
  return empirical_transition(counts, ctx)[a];
}

inline ReplicationOutcome run_replication(const ExperimentConfig& cfg, const MethodSpec& method,
                                          const SymbolSequence& seq, double alpha_c, const LagSet& truth) {
  const std::size_t n = seq.size();
  const int d = cfg.model.order;
  const auto params = method.uses_threshold() ? ThresholdParams::scaled(alpha_c, n, cfg.epsilon, cfg.mu)
                                              : ThresholdParams{cfg.epsilon, 1.0, cfg.mu};
  ReplicationOutcome out{LagSet(d, {}), false, 0.0};
  switch (method.kind) {
    case MethodSpec::Kind::pcp:
      out.selected = pcp_select(seq, LagSet::full(d), d, params).lags;
      break;
    case MethodSpec::Kind::fsc: {
      const auto m = static_cast<std::size_t>(std::floor(cfg.split * static_cast<double>(n)));
      out.selected = fsc_select(seq, d, method.ell, m, params).lags;
      break;
    }
    case MethodSpec::Kind::fs:
      out.selected = fs_only_select(seq, d, method.ell).lags;
      break;
    case MethodSpec::Kind::thresh:
      out.selected = threshold_stepwise_select(seq, d, method.tau).lags;
      break;
    case MethodSpec::Kind::naive:
      out.selected = LagSet::full(d);
      break;
  }
  out.correct = out.selected == truth;
  if (cfg.estimate) out.estimate = constant_context_estimate(seq, out.selected, d, cfg.target_symbol, cfg.target_context);
  return out;
}

namespace detail {

inline constexpr std::uint64_t kGridStream = 0x67726964ULL;

inline std::vector<std::vector<ReplicationOutcome>> run_cells(const ExperimentConfig& cfg,
                                                              const std::vector<MethodSpec>& methods,
                                                              const std::vector<double>& cs, std::size_t n,
                                                              std::size_t reps, std::uint64_t master) {
  const auto truth = diagnostics(cfg.model).relevant;
  std::vector<std::vector<ReplicationOutcome>> out(methods.size(),
                                                   std::vector<ReplicationOutcome>(reps, {LagSet(cfg.model.order, {})}));
  parallel_for(reps, cfg.threads, [&](std::size_t r) {
    const auto seq = simulate(cfg.model, n, derive_seed(master, n, r), cfg.burn_in);
    for (std::size_t i = 0; i < methods.size(); ++i) out[i][r] = run_replication(cfg, methods[i], seq, cs[i], truth);
  });
  return out;
}

}  // namespace detail

/// Tunes C per threshold-dependent method at `grid_n`: the grid value with
/// the largest correct-selection frequency wins; ties keep the earlier
/// grid entry. Uses a seed stream disjoint from the main runs.
inline std::vector<GridPoint> tune_alpha_c(const ExperimentConfig& cfg, std::vector<double>& chosen) {
  std::vector<GridPoint> grid;
  chosen.assign(cfg.methods.size(), cfg.alpha_c.value_or(0.0));
  if (cfg.alpha_c) return grid;
  const std::size_t reps = cfg.grid_replications.value_or(cfg.replications);
  const auto master = derive_seed(cfg.seed, detail::kGridStream);
  for (std::size_t i = 0; i < cfg.methods.size(); ++i) {
    if (!cfg.methods[i].uses_threshold()) continue;
    double best = -1.0;
    for (double c : cfg.grid_c) {
      const auto cells = detail::run_cells(cfg, {cfg.methods[i]}, {c}, cfg.grid_n, reps, master);
      const auto hits = std::count_if(cells[0].begin(), cells[0].end(), [](const auto& o) { return o.correct; });
      const double f = static_cast<double>(hits) / static_cast<double>(reps);
      grid.push_back({cfg.methods[i].name, c, f});
      if (f > best) {
        best = f;
        chosen[i] = c;
      }
    }
  }
  return grid;
}

inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  ExperimentResult res;
  std::vector<double> cs;
  res.grid = tune_alpha_c(cfg, cs);
  if (cfg.estimate) {
    std::vector<Symbol> past(static_cast<std::size_t>(cfg.model.order), cfg.target_context);
    res.truth = transition_prob(cfg.model, past)[cfg.target_symbol];
  }

  auto sizes = cfg.sizes;
  std::sort(sizes.begin(), sizes.end());
  for (std::size_t n : sizes) {
    const auto cells = detail::run_cells(cfg, cfg.methods, cs, n, cfg.replications, cfg.seed);
    for (std::size_t i = 0; i < cfg.methods.size(); ++i) {
      const auto& m = cfg.methods[i];
      ExperimentRow row;
      row.method = m.name;
      row.n = n;
      row.replications = cfg.replications;
      if (m.uses_threshold()) row.alpha_c = cs[i];
      const double reps = static_cast<double>(cfg.replications);
      if (m.selects()) {
        const auto hits = static_cast<std::size_t>(
            std::count_if(cells[i].begin(), cells[i].end(), [](const auto& o) { return o.correct; }));
        row.successes = hits;
        row.frequency = static_cast<double>(hits) / reps;
        row.standard_error = std::sqrt(*row.frequency * (1.0 - *row.frequency) / reps);
      }
      if (cfg.estimate) {
        double mean = 0.0;
        for (const auto& o : cells[i]) mean += o.estimate;
        mean /= reps;
        double ss = 0.0, se = 0.0;
        for (const auto& o : cells[i]) {
          ss += (o.estimate - mean) * (o.estimate - mean);
          se += (o.estimate - *res.truth) * (o.estimate - *res.truth);
        }
        row.mean_estimate = mean;
        row.sd_estimate = cfg.replications > 1 ? std::sqrt(ss / (reps - 1.0)) : 0.0;
        row.rmse = std::sqrt(se / reps);
      }
      res.rows.push_back(std::move(row));
    }
  }
  std::stable_sort(res.rows.begin(), res.rows.end(), [](const ExperimentRow& a, const ExperimentRow& b) {
    return a.method != b.method ? a.method < b.method : a.n < b.n;
  });
  return res;
}

namespace detail {
template <typename T>
std::string csv_opt(const std::optional<T>& v) {
  if (!v) return "";
  if constexpr (std::is_floating_point_v<T>)
    return format_value(*v);
  else
    return std::to_string(*v);
}
template <typename T>
nlohmann::json json_opt(const std::optional<T>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}
}  // namespace detail

inline void write_experiment_csv(const ExperimentResult& r, std::ostream& out) {
  out << "method,n,alpha_c,replications,successes,frequency,se,mean_estimate,sd_estimate,rmse\n";
  for (const auto& row : r.rows)
    out << row.method << ',' << row.n << ',' << detail::csv_opt(row.alpha_c) << ',' << row.replications << ','
        << detail::csv_opt(row.successes) << ',' << detail::csv_opt(row.frequency) << ','
        << detail::csv_opt(row.standard_error) << ',' << detail::csv_opt(row.mean_estimate) << ','
        << detail::csv_opt(row.sd_estimate) << ',' << detail::csv_opt(row.rmse) << '\n';
}

inline nlohmann::json experiment_to_json(const ExperimentResult& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows)
    rows.push_back({{"method", row.method},
                    {"n", row.n},
                    {"alpha_c", detail::json_opt(row.alpha_c)},
                    {"replications", row.replications},
                    {"successes", detail::json_opt(row.successes)},
                    {"frequency", detail::json_opt(row.frequency)},
                    {"se", detail::json_opt(row.standard_error)},
                    {"mean_estimate", detail::json_opt(row.mean_estimate)},
                    {"sd_estimate", detail::json_opt(row.sd_estimate)},
                    {"rmse", detail::json_opt(row.rmse)}});
  nlohmann::json grid = nlohmann::json::array();
  for (const auto& g : r.grid) grid.push_back({{"method", g.method}, {"c", g.c}, {"frequency", g.frequency}});
  return {{"rows", rows}, {"grid", grid}, {"truth", detail::json_opt(r.truth)}};
}

}  // namespace mtdlag
