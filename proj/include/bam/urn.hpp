#pragma once

#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "bam/model.hpp"
#include "bam/rng.hpp"
#include "bam/tensor.hpp"

namespace bam {

// Pólya-urn view of the allocation model: closed-form marginal allocation
// probabilities, the one-token forward transition kernel, the uniform-removal
// reverse kernel, and sparsity diagnostics. All values are natural logs;
// probability zero is -infinity.

// log Pr(S₊ = T): a negative binomial,
//   lgamma(a+T) − lgamma(a) − lgamma(T+1) + a·log(b/(b+1)) − T·log(b+1).
double log_prob_total(const PriorSpec& prior, int64_t T);

// Σ_n [log B_n(α_fa(n) + S_fa(n)) − log B_n(α_fa(n))]: the log-probability of
// any one token sequence realizing S (the process is exchangeable, so every
// order has the same probability). Evaluated sparsely — untouched cells
// contribute exactly zero.
double log_marginal_events(const AlphaConstants& alpha, const FamilyStats& stats);
double log_marginal_events_node(const AlphaConstants& alpha, const FamilyStats& stats, int n);

// log π(S) over allocations with free total. `log_factorial` is Σ_i log S(i)!
// over cells, supplied separately because SMC-owned stats do not carry the
// full cell map.
double log_marginal_allocation(const AlphaConstants& alpha, const PriorSpec& prior,
                               const FamilyStats& stats, double log_factorial);
// Convenience for stats that track cells.
double log_marginal_allocation(const AlphaConstants& alpha, const PriorSpec& prior,
                               const FamilyStats& stats);

// log π_{S₊}(S), the allocation law conditioned on its total. Computed in the
// form Σ_n Beta-ratio terms + log S₊! − Σ_i log S(i)!, so it is independent of
// b by construction.
double log_marginal_given_total(const AlphaConstants& alpha, const FamilyStats& stats,
                                double log_factorial);
double log_marginal_given_total(const AlphaConstants& alpha, const FamilyStats& stats);

// log f(S+e_c | S): probability the next token lands in full cell c,
//   Σ_n log[(α_fa(n) + S_fa(n)(c)) / (α_pa(n)·I-correction + S_pa(n)(c))],
// with root denominators α_total + S₊.
double transition_logprob(const AlphaConstants& alpha, const FamilyStats& stats,
                          std::span<const int64_t> cell);
double transition_logprob_node(const AlphaConstants& alpha, const FamilyStats& stats,
                               std::span<const int64_t> cell, int n);

// Draws the next token's full cell node-by-node in topological order; the
// resulting law equals exp(transition_logprob). Writes into `cell`.
void sample_transition(const AlphaConstants& alpha, const FamilyStats& stats, Rng& rng,
                       std::span<int64_t> cell);
// Draws node n's coordinate given already-assigned parent coordinates.
void sample_transition_node(const AlphaConstants& alpha, const FamilyStats& stats, Rng& rng,
                            std::span<int64_t> cell, int n);

// log r(S−e_c | S) = log(S(c)/S₊): remove a uniformly chosen token. Requires
// cell-tracking stats; throws cell-empty when S(c) = 0.
double reverse_transition_logprob(const FamilyStats& stats, std::span<const int64_t> cell);

// d_EP(S) = Σ_n (#occupied family cells − #occupied parent configurations):
// the number of free parameters the allocation actually exercises.
int64_t effective_parameters(const FamilyStats& stats);

// Parameters of the closed-form posterior p(λ, Θ | S): λ ~ Gamma(shape, rate)
// and each family row Dirichlet with pseudo-counts α + S_fa. Only touched
// family cells are materialized; absent keys carry the constant α_fa(n).
struct PosteriorFactors {
  double lambda_shape = 0.0;
  double lambda_rate = 0.0;
  std::vector<double> alpha_family_cell;          // per node, the untouched-cell value
  std::vector<std::unordered_map<uint64_t, double>> dirichlet;  // per node, fkey → α+S
};

PosteriorFactors posterior_factors(const AlphaConstants& alpha, const PriorSpec& prior,
                                   const FamilyStats& stats);

}  // namespace bam
