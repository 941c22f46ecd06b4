// Exact stationary quantities of a small chain: influence statistics,
// structural checks and the forward-stepwise budget.
#include <iostream>

#include "mtdlag/mtdlag.hpp"

int main() {
  using namespace mtdlag;
  const auto law = exact_law(benchmark_model_1(3, 1, 3));
  const LagSet none(3, {});
  for (Lag k : {-1, -2, -3}) std::cout << "nu_bar(" << k << " | {}) = " << exact_nu_bar(law, k, none) << "\n";

  const auto report = oracle_report(law);
  std::cout << oracle_report_to_json(report).dump(2) << "\n";
  return report.passed() ? 0 : 1;
}
