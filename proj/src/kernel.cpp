#include "bam/kernel.hpp"

#include <cmath>

namespace bam {

Kernel::Kernel(std::shared_ptr<const ModelLayout> layout, PriorSpec prior)
    : Kernel(std::move(layout), prior, AlphaConstants{}) {}

Kernel::Kernel(std::shared_ptr<const ModelLayout> layout, PriorSpec prior, AlphaConstants alpha)
    : layout_(std::move(layout)), prior_(prior), alpha_(std::move(alpha)) {
  if (!(prior_.a > 0.0) || !(prior_.b > 0.0)) {
    throw Error(Error::Code::bad_argument, "prior requires a > 0 and b > 0");
  }
  if (alpha_.family_cell.empty()) alpha_ = bdeu_alpha(layout_->spec(), prior_);
  tied_ = tied_layout(*layout_);
}

double Kernel::transition_logprob(const FamilyStats& stats, std::span<const int64_t> cell) const {
  if (tied_) return tied_transition_logprob(*tied_, alpha_, stats, cell);
  return bam::transition_logprob(alpha_, stats, cell);
}

void Kernel::sample_transition(const FamilyStats& stats, Rng& rng, std::span<int64_t> cell) const {
  if (tied_) {
    tied_sample_transition(*tied_, alpha_, stats, rng, cell);
  } else {
    bam::sample_transition(alpha_, stats, rng, cell);
  }
}

double Kernel::log_marginal_events(const FamilyStats& stats) const {
  if (tied_) return tied_log_marginal_events(*tied_, alpha_, stats);
  return bam::log_marginal_events(alpha_, stats);
}

double Kernel::log_marginal_allocation(const FamilyStats& stats, double log_factorial) const {
  double a = prior_.a, b = prior_.b;
  double T = static_cast<double>(stats.total());
  double lambda_part = a * std::log(b) - (a + T) * std::log(b + 1.0) + lgam(a + T) - lgam(a);
  return lambda_part + log_marginal_events(stats) - log_factorial;
}

double Kernel::log_marginal_allocation(const FamilyStats& stats) const {
  return log_marginal_allocation(stats, log_factorial_term(stats.cells()));
}

double Kernel::log_marginal_given_total(const FamilyStats& stats, double log_factorial) const {
  return log_marginal_events(stats) + lgam(static_cast<double>(stats.total()) + 1.0) -
         log_factorial;
}

double Kernel::log_marginal_given_total(const FamilyStats& stats) const {
  return log_marginal_given_total(stats, log_factorial_term(stats.cells()));
}

double Kernel::log_prob_total(int64_t T) const { return bam::log_prob_total(prior_, T); }

}  // namespace bam
