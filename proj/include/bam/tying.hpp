#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "bam/rng.hpp"
#include "bam/tensor.hpp"
#include "bam/urn.hpp"

namespace bam {

// Parameter tying for the supported pattern: a single latent root r whose
// children all share one conditional table θ(i|r). The shared table's
// Dirichlet pseudo-count is the children's common family constant (a/(R·I)
// under BDeu); its per-column normalizer then equals the root constant a/R,
// which makes the tied formulas reduce to the untied ones when there is only
// one child.
struct TiedLayout {
  int root = -1;
  std::vector<int> children;  // ascending node order; drawn in this order within a token
  int64_t R = 0;              // root cardinality
  int64_t I = 0;              // shared child cardinality
  // Per child, strides to build that child's family key from (i, r).
  std::vector<uint64_t> root_stride;
  std::vector<uint64_t> child_stride;

  uint64_t child_family_key(size_t c, int64_t i, int64_t r) const {
    return static_cast<uint64_t>(r) * root_stride[c] + static_cast<uint64_t>(i) * child_stride[c];
  }
  uint64_t shared_key(int64_t i, int64_t r) const {
    return static_cast<uint64_t>(r) + static_cast<uint64_t>(R) * static_cast<uint64_t>(i);
  }
};

// Empty optional when the model has no tying group.
std::optional<TiedLayout> tied_layout(const ModelLayout& layout);

// Aggregated counts the tied formulas run on: S₀(r) from the root family and
// the pooled child counts Sh(i,r) = Σ_children S_fa(child)(i,r).
struct TiedStats {
  CountMap s0;      // r → S₀(r)
  CountMap shared;  // shared_key(i,r) → Sh(i,r)
  int64_t total = 0;
};

TiedStats tied_stats(const TiedLayout& tied, const FamilyStats& stats);

// Σ Sh(i,r) over a touched column r, i.e. N·S₀(r), via per-child lookups.
int64_t tied_shared_count(const TiedLayout& tied, const FamilyStats& stats, int64_t i, int64_t r);

// Log-probability of one token sequence realizing `stats` (exchangeable, so
// any order): the tied root/shared Beta-ratio blocks plus the untied per-node
// terms for every node outside the tying group.
double tied_log_marginal_events(const TiedLayout& tied, const AlphaConstants& alpha,
                                const FamilyStats& stats);

// One-token transition. The N child draws within a token are sequential in
// ascending node order; the shared-table counts advance between them, which is
// exactly what telescopes back to tied_log_marginal_events along trajectories.
double tied_transition_logprob(const TiedLayout& tied, const AlphaConstants& alpha,
                               const FamilyStats& stats, std::span<const int64_t> cell);

// Samples the next token's full cell; distribution equals exp of the above.
void tied_sample_transition(const TiedLayout& tied, const AlphaConstants& alpha,
                            const FamilyStats& stats, Rng& rng, std::span<int64_t> cell);

}  // namespace bam
