#pragma once

#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "error.hpp"
#include "model.hpp"

namespace mtdlag {

/// Reads the model document
///   {"alphabet": [...], "order": d, "lambda": {"0": .., "-1": ..},
///    "p0": [...], "kernels": {"-1": [[...], ...], ...}}
/// Lags without a kernel get weight 0; a positive weight on such a lag is an
/// error. Probability invariants are not checked here, see validate_model().
inline MtdModel model_from_json(const nlohmann::json& doc) {
  try {
    MtdModel m;
    m.alphabet = Alphabet(doc.at("alphabet").get<std::vector<double>>());
    m.order = doc.at("order").get<int>();
    if (m.order < 1) throw data_error("model: order must be >= 1");
    const std::size_t k = m.alphabet.size();
    const auto d = static_cast<std::size_t>(m.order);
    m.lambda.assign(d + 1, 0.0);
    m.p0 = doc.at("p0").get<Distribution>();
    m.kernels.assign(d, Kernel(k, Distribution(k, 1.0 / static_cast<double>(k))));

    std::vector<bool> has_kernel(d, false);
    if (doc.contains("kernels")) {
      for (const auto& [key, value] : doc.at("kernels").items()) {
        const int j = std::stoi(key);
        if (j > -1 || j < -m.order) throw data_error("model: kernel for lag " + key + " outside [-d, -1]");
        m.kernels[static_cast<std::size_t>(-j - 1)] = value.get<Kernel>();
        has_kernel[static_cast<std::size_t>(-j - 1)] = true;
      }
    }
    for (const auto& [key, value] : doc.at("lambda").items()) {
      const int j = std::stoi(key);
      if (j > 0 || j < -m.order) throw data_error("model: lambda for lag " + key + " outside [-d, 0]");
      const double w = value.get<double>();
      if (j < 0 && !has_kernel[static_cast<std::size_t>(-j - 1)] && w != 0.0)
        throw data_error("model: lambda[" + key + "] > 0 but its kernel is omitted");
      m.lambda[static_cast<std::size_t>(-j)] = w;
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw data_error(std::string("model: malformed document: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw data_error(std::string("model: ") + e.what());
  }
}

inline nlohmann::json model_to_json(const MtdModel& m) {
  nlohmann::json doc;
  doc["alphabet"] = std::vector<double>(m.alphabet.values().begin(), m.alphabet.values().end());
  doc["order"] = m.order;
  doc["p0"] = m.p0;
  nlohmann::json lambda = nlohmann::json::object();
  nlohmann::json kernels = nlohmann::json::object();
  lambda["0"] = m.lambda.at(0);
  for (int i = 1; i <= m.order; ++i) {
    const double w = m.lambda.at(static_cast<std::size_t>(i));
    if (w == 0.0) continue;
    lambda[std::to_string(-i)] = w;
    kernels[std::to_string(-i)] = m.kernels.at(static_cast<std::size_t>(i - 1));
  }
  doc["lambda"] = lambda;
  doc["kernels"] = kernels;
  return doc;
}

inline MtdModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open model file " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw data_error("model file " + path + ": " + e.what());
  }
  return model_from_json(doc);
}

}  // namespace mtdlag
