// Fits LoRA and RandLoRA with the same rank to an identity matrix and prints
// the residual next to the best achievable rank-r error.
#include <cstdio>

#include "randlora/spectral.hpp"

int main() {
  using namespace randlora;
  const int dim = 8;
  const Matrix target = Matrix::Identity(dim, dim);
  const BasisSet bases = generate_basis_set(7, Distribution::normal(), dim, 1, dim, dim);

  AdapterSpec lora;
  lora.kind = LoRASpec{1};
  AdapterSpec rl;
  rl.kind = RandLoRASpec{1, std::nullopt};

  OptimizerConfig opt;
  for (const auto& spec : {lora, rl}) {
    const FitReport rep = fit_adapter(target, spec, bases, opt, "identity:8");
    std::printf("%-18s params=%-4lld error=%.3e  (rank-%d bound %.3f)\n", spec_name(spec).c_str(),
                static_cast<long long>(rep.param_count), rep.final_sq_error, rep.effective_rank, rep.bound_ey);
  }
}
