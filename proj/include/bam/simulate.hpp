#pragma once

#include <cstdint>
#include <optional>

#include "bam/kernel.hpp"

namespace bam {

struct SimulationResult {
  SparseCountTensor X;  // visible contraction, axes in visible order
  SparseCountTensor S;  // full allocation tensor, axes in node order
  double lambda = 0.0;  // drawn rate; 0 when the token count was fixed
  int64_t tokens = 0;
};

// Generative draw: Θ from the model's Dirichlets (tied children share one
// table), then either exactly `tokens` ancestral draws, or λ ~ Gamma(a, b)
// followed by T ~ Poisson(λ) when `tokens` is absent.
SimulationResult simulate(const Kernel& kernel, uint64_t seed,
                          std::optional<int64_t> tokens = std::nullopt);

}  // namespace bam
