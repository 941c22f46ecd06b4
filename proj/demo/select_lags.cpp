// Simulates the two-lag benchmark chain and recovers its relevant lags with
// the forward-stepwise-and-cut selector, then estimates the transition
// probabilities on the selected lags.
#include <cstdlib>
#include <iostream>

#include "mtdlag/mtdlag.hpp"

int main(int argc, char** argv) {
  using namespace mtdlag;
  const std::size_t n = argc > 1 ? std::strtoull(argv[1], nullptr, 10) : 10000;
  const int d = 8;

  const auto model = benchmark_model_1(d, 1, 8);
  const auto diag = diagnostics(model);
  std::cout << "relevant lags " << diag.relevant.to_string() << ", Delta = " << diag.Delta << "\n";

  const auto seq = simulate(model, n, 2024);
  const auto params = ThresholdParams::scaled(0.03, n);
  const auto sel = fsc_select(seq, d, 3, params);
  std::cout << "candidate " << sel.trace.candidate->to_string() << ", selected " << sel.lags.to_string() << "\n";

  if (sel.lags.empty()) return 0;
  const auto kernel = estimate_kernel(seq, sel.lags, d, params);
  write_kernel_csv(kernel, SymbolTable::numeric(seq.alphabet()), std::cout);
}
