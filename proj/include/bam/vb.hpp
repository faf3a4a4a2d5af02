#pragma once

#include <cstdint>
#include <unordered_map>
#include <vector>

#include "bam/kernel.hpp"

namespace bam {

struct VBConfig {
  int restarts = 10;
  int max_iters = 2000;
  double tol = 1e-8;
  uint64_t seed = 0;
  int threads = 1;
  int64_t latent_cap = 1'000'000;
};

// Real-valued analogue of FamilyStats holding expected sufficient statistics
// E_Q[S_fa(n)], E_Q[S_pa(n)] and E_Q[S₊].
struct RealFamilyStats {
  std::vector<std::unordered_map<uint64_t, double>> family;
  std::vector<std::unordered_map<uint64_t, double>> parent;
  double total = 0.0;
};

// Mean-field state. The variational Dirichlet parameters are implicit:
// α̂_fa(n) = α_fa(n) + expected.family[n], row-normalizers α_pa(n)·I-corrected
// plus expected parent counts, and â = a + expected.total. phi holds the
// responsibility of each latent completion per nonzero visible cell, laid out
// row-major as phi[cell_index · latent_cells + latent_key] with cells in
// sorted visible-key order.
struct VBState {
  std::vector<uint64_t> visible_keys;
  std::vector<double> phi;
  RealFamilyStats expected;
  double a_hat = 0.0;
  double elbo = 0.0;
  std::vector<double> elbo_trace;
  int iterations = 0;
};

// Fresh state with Dirichlet(1)-distributed responsibilities per visible cell,
// expectations and α̂ consistent with them, and the initial bound evaluated.
VBState vb_init(const Kernel& kernel, const SparseCountTensor& X, uint64_t restart_seed,
                int64_t latent_cap = 1'000'000);

// One fixed-point sweep: recompute Φ from the current α̂ via
// exp(Σ_n ψ(α̂_fa) − ψ(α̂_pa)) normalized over the latent block per visible
// cell, refresh the expected statistics, then re-evaluate the bound.
void vb_update(const Kernel& kernel, const SparseCountTensor& X, VBState& state);

// 𝓑_P[Q]: negative-binomial part at E[S₊] + Dirichlet Beta-ratio terms at the
// expected counts − Σ_{i_V} log X(i_V)! + the responsibility entropy.
double elbo(const Kernel& kernel, const SparseCountTensor& X, const VBState& state);

// Multi-restart coordinate ascent; returns the max-ELBO state (ties broken by
// lowest restart index, so the result is thread-count independent).
VBState run_vb(const Kernel& kernel, const SparseCountTensor& X, const VBConfig& config);

}  // namespace bam
