#include "cli.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mtdlag/mtdlag.hpp"

namespace mtdlag::cli {
namespace {

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b == std::string::npos) throw contract_error("empty entry in list '" + text + "'");
    out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

double parse_number(const std::string& s) {
  double v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw contract_error("not a number: '" + s + "'");
  return v;
}

/// "-1,-8" or "1,8": lags are given by their distance, sign optional.
LagSet parse_lags(const std::string& text, int order) {
  std::vector<Lag> lags;
  if (!text.empty())
    for (const auto& item : split_list(text)) {
      int v = 0;
      const auto r = std::from_chars(item.data(), item.data() + item.size(), v);
      if (r.ec != std::errc() || r.ptr != item.data() + item.size() || v == 0)
        throw contract_error("invalid lag '" + item + "'");
      lags.push_back(v < 0 ? v : -v);
    }
  return LagSet(order, std::move(lags));
}

struct SymbolOptions {
  std::string alphabet;
  std::string symbols;
  std::string input_format = "whitespace";
  std::size_t column = 0;
  bool header = false;

  void attach(CLI::App& app) {
    app.add_option("--alphabet", alphabet, "Comma-separated numeric alphabet values (default 0,1)");
    app.add_option("--symbols", symbols, "Comma-separated symbol tokens as they appear in the input file");
    app.add_option("--input-format", input_format, "Input layout: whitespace | lines | csv")
        ->check(CLI::IsMember({"whitespace", "ws", "lines", "csv"}));
    app.add_option("--column", column, "CSV column holding the symbols (0-based)");
    app.add_flag("--header", header, "CSV input has a header line");
  }

  SymbolTable table() const {
    std::optional<Alphabet> values;
    if (!alphabet.empty()) {
      std::vector<double> v;
      for (const auto& s : split_list(alphabet)) v.push_back(parse_number(s));
      values = Alphabet(std::move(v));
    }
    if (!symbols.empty()) return SymbolTable::named(split_list(symbols), values);
    return SymbolTable::numeric(values.value_or(Alphabet::binary()));
  }

  SymbolSequence load(const std::string& path) const {
    return load_sequence(path, parse_sequence_format(input_format), table(), CsvOptions{column, header});
  }
};

struct ThresholdOptions {
  double epsilon = 0.1;
  double mu = 0.5;
  double alpha_c = 2.0;
  std::optional<double> alpha;

  void attach(CLI::App& app) {
    app.add_option("--epsilon", epsilon, "Threshold epsilon (> 0)");
    app.add_option("--mu", mu, "Threshold mu (mu > psi(mu))");
    app.add_option("--alpha-c", alpha_c, "C in alpha = C log n");
    app.add_option("--alpha", alpha, "Absolute alpha (overrides --alpha-c)");
  }

  ThresholdParams params(std::size_t n) const {
    if (alpha) return ThresholdParams{epsilon, *alpha, mu}.validated();
    return ThresholdParams::scaled(alpha_c, n, epsilon, mu);
  }
};

/// Writes to `path`, or to `fallback` when the path is empty or "-".
class Output {
 public:
  Output(const std::string& path, std::ostream& fallback) {
    if (path.empty() || path == "-") {
      stream_ = &fallback;
    } else {
      file_ = std::make_unique<std::ofstream>(path);
      if (!*file_) throw data_error("cannot write " + path);
      stream_ = file_.get();
    }
  }
  std::ostream& operator*() { return *stream_; }
  void finish() {
    stream_->flush();
    if (!*stream_) throw data_error("write failed");
  }

 private:
  std::unique_ptr<std::ofstream> file_;
  std::ostream* stream_ = nullptr;
};

MtdModel load_valid_model(const std::string& path, std::ostream& err) {
  auto model = load_model(path);
  const auto violations = validate_model(model);
  if (!violations.empty()) {
    err << "invalid model " << path << ":\n";
    for (const auto& v : violations) err << "  " << v.what << " at " << v.where << " (residual " << v.residual << ")\n";
    throw data_error("model validation failed");
  }
  return model;
}

// --- simulate --------------------------------------------------------------

struct SimulateCmd {
  std::string model_path, out_path;
  std::size_t n = 0;
  std::uint64_t seed = 1;
  std::size_t burn_in = kDefaultBurnIn;

  void attach(CLI::App& app) {
    app.add_option("--model", model_path, "Model JSON document")->required();
    app.add_option("--n", n, "Sequence length")->required()->check(CLI::PositiveNumber);
    app.add_option("--seed", seed, "Master seed");
    app.add_option("--burn-in", burn_in, "Discarded warm-up steps");
    app.add_option("--out", out_path, "Output file (default stdout)");
  }

  int run(std::ostream& out, std::ostream& err) const {
    const auto model = load_valid_model(model_path, err);
    const auto seq = simulate(model, n, seed, burn_in);
    Output o(out_path, out);
    write_sequence(seq, SymbolTable::numeric(model.alphabet), *o);
    o.finish();
    return kOk;
  }
};

// --- select ----------------------------------------------------------------

struct SelectCmd {
  std::string input, method, lags, out_path, format = "json";
  int d = 0;
  std::optional<std::size_t> ell;
  double split = 0.5;
  SymbolOptions symbols;
  ThresholdOptions thresholds;

  void attach(CLI::App& app) {
    app.add_option("--input", input, "Sequence file")->required();
    app.add_option("--method", method, "pcp | fsc:ell | fs:ell | thresh:tau")->required();
    app.add_option("--d", d, "Maximal order")->required()->check(CLI::PositiveNumber);
    app.add_option("--ell", ell, "Forward-stepwise budget when --method is plain fsc or fs");
    app.add_option("--lags", lags, "Superset S for pcp, e.g. 1,2,8 (default all lags)");
    app.add_option("--split", split, "fsc: fraction (< 1) or length (>= 1) of the forward-stepwise part");
    app.add_option("--format", format, "Output format")->check(CLI::IsMember({"json", "csv"}));
    app.add_option("--out", out_path, "Output file (default stdout)");
    symbols.attach(app);
    thresholds.attach(app);
  }

  int run(std::ostream& out, std::ostream&) const {
    const bool bare = method == "fsc" || method == "fs";
    const auto spec = parse_method(bare && ell ? method + ":" + std::to_string(*ell) : method);
    if (spec.kind == MethodSpec::Kind::naive) throw contract_error("naive does not select lags");
    const auto seq = symbols.load(input);
    const std::size_t n = seq.size();
    if (n <= static_cast<std::size_t>(d)) throw contract_error("window shorter than order");
    const auto params = thresholds.params(n);
    Selection sel;
    nlohmann::json pj = {{"d", d}, {"n", n}};
    switch (spec.kind) {
      case MethodSpec::Kind::pcp:
        sel = pcp_select(seq, lags.empty() ? LagSet::full(d) : parse_lags(lags, d), d, params);
        pj["threshold"] = params;
        break;
      case MethodSpec::Kind::fsc: {
        const auto m = split < 1.0 ? static_cast<std::size_t>(std::floor(split * static_cast<double>(n)))
                                   : static_cast<std::size_t>(split);
        sel = fsc_select(seq, d, spec.ell, m, params);
        pj["threshold"] = params;
        pj["ell"] = spec.ell;
        pj["split"] = m;
        break;
      }
      case MethodSpec::Kind::fs:
        sel = fs_only_select(seq, d, spec.ell);
        pj["ell"] = spec.ell;
        break;
      case MethodSpec::Kind::thresh:
        sel = threshold_stepwise_select(seq, d, spec.tau);
        pj["tau"] = spec.tau;
        break;
      case MethodSpec::Kind::naive:
        break;
    }
    Output o(out_path, out);
    if (format == "csv") {
      *o << "lag\n";
      for (Lag j : sel.lags) *o << j << '\n';
    } else {
      *o << selection_to_json(sel, pj, seq.alphabet()).dump(2) << '\n';
    }
    o.finish();
    return kOk;
  }
};

// --- estimate --------------------------------------------------------------

struct EstimateCmd {
  std::string input, lags, out_path, format = "csv";
  int d = 0;
  SymbolOptions symbols;
  ThresholdOptions thresholds;

  void attach(CLI::App& app) {
    app.add_option("--input", input, "Sequence file")->required();
    app.add_option("--lags", lags, "Selected lags, e.g. 1,8")->required();
    app.add_option("--d", d, "Maximal order")->required()->check(CLI::PositiveNumber);
    app.add_option("--format", format, "Output format")->check(CLI::IsMember({"json", "csv"}));
    app.add_option("--out", out_path, "Output file (default stdout)");
    symbols.attach(app);
    thresholds.attach(app);
  }

  int run(std::ostream& out, std::ostream&) const {
    const auto table = symbols.table();
    const auto seq = symbols.load(input);
    const auto kernel = estimate_kernel(seq, parse_lags(lags, d), d, thresholds.params(seq.size()));
    Output o(out_path, out);
    if (format == "json")
      *o << kernel_to_json(kernel, table.alphabet).dump(2) << '\n';
    else
      write_kernel_csv(kernel, table, *o);
    o.finish();
    return kOk;
  }
};

// --- experiment ------------------------------------------------------------

struct ExperimentCmd {
  std::string config_path, model_path, out_path, format;
  std::vector<std::string> methods;
  std::vector<std::size_t> sizes;
  std::optional<std::size_t> reps, threads, grid_n, grid_reps;
  std::optional<std::uint64_t> seed;
  std::optional<double> alpha_c, epsilon, mu, split;
  std::vector<double> grid_c;
  bool estimate = false;

  void attach(CLI::App& app) {
    app.add_option("--config", config_path, "Experiment JSON (flags below override it)");
    app.add_option("--model", model_path, "Model JSON document");
    app.add_option("--method", methods, "Method, repeatable: pcp | fsc:ell | fs:ell | thresh:tau | naive");
    app.add_option("--n", sizes, "Sample size, repeatable");
    app.add_option("--reps", reps, "Replications per (method, n)");
    app.add_option("--seed", seed, "Master seed");
    app.add_option("--alpha-c", alpha_c, "Fixed C in alpha = C log n (default: tuned on the grid)");
    app.add_option("--grid-c", grid_c, "Grid of C values, repeatable");
    app.add_option("--grid-n", grid_n, "Sample size used for tuning C");
    app.add_option("--grid-reps", grid_reps, "Replications per grid point");
    app.add_option("--epsilon", epsilon, "Threshold epsilon");
    app.add_option("--mu", mu, "Threshold mu");
    app.add_option("--split", split, "Forward-stepwise fraction for fsc");
    app.add_flag("--estimate", estimate, "Also report the spread of p-hat(0 | 0...0) after selection");
    app.add_option("--threads", threads, "Worker threads (0 = hardware)");
    app.add_option("--format", format, "Write only this format")->check(CLI::IsMember({"json", "csv"}));
    app.add_option("--out", out_path, "Output base path: writes <out>.csv and <out>.json");
  }

  ExperimentConfig config() const {
    nlohmann::json j = nlohmann::json::object();
    std::string base = ".";
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw data_error("cannot open config file " + config_path);
      try {
        in >> j;
      } catch (const nlohmann::json::exception& e) {
        throw data_error(config_path + ": " + e.what());
      }
      const auto slash = config_path.find_last_of('/');
      if (slash != std::string::npos) base = config_path.substr(0, slash);
    }
    if (!model_path.empty()) j["model"] = model_to_json(load_model(model_path));
    if (!methods.empty()) j["methods"] = methods;
    if (!sizes.empty()) j["sizes"] = sizes;
    if (reps) j["replications"] = *reps;
    if (seed) j["seed"] = *seed;
    if (alpha_c) j["alpha_c"] = *alpha_c;
    if (!grid_c.empty()) j["grid_c"] = grid_c;
    if (grid_n) j["grid_n"] = *grid_n;
    if (grid_reps) j["grid_replications"] = *grid_reps;
    if (epsilon) j["epsilon"] = *epsilon;
    if (mu) j["mu"] = *mu;
    if (split) j["split"] = *split;
    if (estimate) j["estimate"] = true;
    if (threads) j["threads"] = *threads;
    if (!j.contains("methods") || !j.contains("sizes")) throw contract_error("config: methods and sizes are required");
    return experiment_config_from_json(j, base);
  }

  int run(std::ostream& out, std::ostream&) const {
    const auto result = run_experiment(config());
    auto strip = [](std::string p) {
      for (const char* ext : {".csv", ".json"})
        if (p.ends_with(ext)) return p.substr(0, p.size() - std::string(ext).size());
      return p;
    };
    if (out_path.empty() || out_path == "-") {
      if (format == "json")
        out << experiment_to_json(result).dump(2) << '\n';
      else
        write_experiment_csv(result, out);
      return kOk;
    }
    const auto base = strip(out_path);
    if (format.empty() || format == "csv") {
      Output o(base + ".csv", out);
      write_experiment_csv(result, *o);
      o.finish();
    }
    if (format.empty() || format == "json") {
      Output o(base + ".json", out);
      *o << experiment_to_json(result).dump(2) << '\n';
      o.finish();
    }
    return kOk;
  }
};

// --- verify ----------------------------------------------------------------

struct VerifyCmd {
  std::string model_path, out_path;
  std::size_t budget = std::size_t{1} << 18;
  double inject = 0.0;
  std::optional<std::size_t> max_subset;
  std::size_t coverage_reps = 200;
  std::size_t coverage_n = 2000;
  double coverage_alpha = 3.0;
  std::uint64_t seed = 1;
  bool skip_kl = false;

  void attach(CLI::App& app) {
    app.add_option("--model", model_path, "Model JSON document")->required();
    app.add_option("--budget", budget, "Largest |A|^d enumerated");
    app.add_option("--inject-nu-bar", inject, "Debug: add this offset to every exact nu-bar");
    app.add_option("--max-subset", max_subset, "Largest |S| enumerated");
    app.add_option("--coverage-reps", coverage_reps, "Replications of the threshold coverage test (0 = skip)");
    app.add_option("--coverage-n", coverage_n, "Sample size of the coverage test");
    app.add_option("--coverage-alpha", coverage_alpha, "alpha of the coverage test");
    app.add_option("--seed", seed, "Seed of the coverage test");
    app.add_flag("--skip-kl", skip_kl, "Skip the KL-bound grid");
    app.add_option("--out", out_path, "Report file (default stdout)");
  }

  int run(std::ostream& out, std::ostream& err) const {
    const auto model = load_valid_model(model_path, err);
    ExactLawOptions lo;
    lo.budget = budget;
    std::optional<ExactLaw> law;
    try {
      law.emplace(model, lo);
    } catch (const budget_error& e) {
      err << "warning: skipping verification: " << e.what() << '\n';
      Output o(out_path, out);
      *o << nlohmann::json{{"skipped", true}, {"reason", e.what()}}.dump(2) << '\n';
      o.finish();
      return kOk;
    }
    StructureOptions so;
    so.max_subset_size = max_subset;
    so.nu_bar_perturbation = inject;
    auto report = oracle_report(*law, so);
    if (!skip_kl) report.kl = kl_grid_checks();
    if (coverage_reps > 0 && coverage_n > static_cast<std::size_t>(model.order))
      report.coverage = threshold_coverage(model, coverage_n, coverage_reps,
                                           ThresholdParams{0.1, coverage_alpha, 0.5}.validated(), seed);

    Output o(out_path, out);
    *o << oracle_report_to_json(report).dump(2) << '\n';
    o.finish();

    const auto& s = report.structure;
    auto line = [&](bool ok, const std::string& what) { err << (ok ? "PASS " : "FAIL ") << what << '\n'; };
    line(s.cov_bound_violations == 0, "covariance lower bound (" + std::to_string(s.cov_bound_violations) + " violations)");
    line(s.cov_identity_max_residual <= s.identity_tolerance, "covariance identity residual " + std::to_string(s.cov_identity_max_residual));
    line(s.zero_violations == 0, "nu-bar vanishes when S covers the relevant lags (" +
                                     std::to_string(s.zero_violations) + "/" + std::to_string(s.zero_checked) + " nonzero)");
    if (s.binary_identity_max_residual)
      line(*s.binary_identity_max_residual <= s.identity_tolerance,
           "binary identity residual " + std::to_string(*s.binary_identity_max_residual));
    if (s.kappa && s.kappa_lower_bound)
      line(*s.kappa >= *s.kappa_lower_bound, "kappa " + std::to_string(*s.kappa) + " >= bound " +
                                                 std::to_string(*s.kappa_lower_bound));
    if (!report.kl.empty()) line(report.kl_passed(), "KL bound on " + std::to_string(report.kl.size()) + " grid points");
    if (report.coverage)
      line(report.coverage->passed(), "threshold coverage: max frequency " + std::to_string(report.coverage->max_frequency) +
                                          " vs bound " + std::to_string(report.coverage->bound));
    return report.passed() ? kOk : kVerificationFailed;
  }
};

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Lag selection and transition estimation for sparse MTD Markov chains", "mtdlag"};
  app.require_subcommand(1);
  SimulateCmd simulate_cmd;
  SelectCmd select_cmd;
  EstimateCmd estimate_cmd;
  ExperimentCmd experiment_cmd;
  VerifyCmd verify_cmd;
  auto* sim = app.add_subcommand("simulate", "Simulate a sequence from a model");
  auto* sel = app.add_subcommand("select", "Select relevant lags from a sequence");
  auto* est = app.add_subcommand("estimate", "Estimate transition probabilities on given lags");
  auto* exp = app.add_subcommand("experiment", "Run replicated selection experiments");
  auto* ver = app.add_subcommand("verify", "Run the exact verification battery on a small model");
  simulate_cmd.attach(*sim);
  select_cmd.attach(*sel);
  estimate_cmd.attach(*est);
  experiment_cmd.attach(*exp);
  verify_cmd.attach(*ver);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (sim->parsed()) return simulate_cmd.run(out, err);
    if (sel->parsed()) return select_cmd.run(out, err);
    if (est->parsed()) return estimate_cmd.run(out, err);
    if (exp->parsed()) return experiment_cmd.run(out, err);
    if (ver->parsed()) return verify_cmd.run(out, err);
  } catch (const data_error& e) {
    err << "error: " << e.what() << '\n';
    return kDataError;
  } catch (const contract_error& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kDataError;
  }
  return kUsage;
}

}  // namespace mtdlag::cli
