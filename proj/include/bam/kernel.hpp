#pragma once

#include <memory>
#include <optional>
#include <span>

#include "bam/tying.hpp"

namespace bam {

// One allocation model ready to run: layout + prior + pseudo-count constants,
// with tied-table dispatch resolved once at construction. Every sampler and
// scorer works through this surface so tied and untied models are
// interchangeable.
class Kernel {
 public:
  Kernel(std::shared_ptr<const ModelLayout> layout, PriorSpec prior);
  Kernel(std::shared_ptr<const ModelLayout> layout, PriorSpec prior, AlphaConstants alpha);

  const ModelLayout& layout() const { return *layout_; }
  std::shared_ptr<const ModelLayout> layout_ptr() const { return layout_; }
  const PriorSpec& prior() const { return prior_; }
  const AlphaConstants& alpha() const { return alpha_; }
  const std::optional<TiedLayout>& tied() const { return tied_; }

  FamilyStats empty_stats(bool track_cells = false) const {
    return FamilyStats(layout_, track_cells);
  }

  double transition_logprob(const FamilyStats& stats, std::span<const int64_t> cell) const;
  void sample_transition(const FamilyStats& stats, Rng& rng, std::span<int64_t> cell) const;

  // Log-probability of one token sequence realizing `stats`.
  double log_marginal_events(const FamilyStats& stats) const;
  // log π(S) with free total; log π_{S₊}(S) given the total.
  double log_marginal_allocation(const FamilyStats& stats, double log_factorial) const;
  double log_marginal_allocation(const FamilyStats& stats) const;
  double log_marginal_given_total(const FamilyStats& stats, double log_factorial) const;
  double log_marginal_given_total(const FamilyStats& stats) const;
  double log_prob_total(int64_t T) const;

 private:
  std::shared_ptr<const ModelLayout> layout_;
  PriorSpec prior_;
  AlphaConstants alpha_;
  std::optional<TiedLayout> tied_;
};

}  // namespace bam
