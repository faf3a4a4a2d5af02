#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <vector>

#include "bam/kernel.hpp"

namespace bam {

struct ExactConfig {
  double max_states = 1e8;  // hard error above this, never silent truncation
};

// Number of allocation tensors S with S_V = X:
// ∏_{visible cells} C(X(i_V) + L − 1, L − 1) with L latent configurations.
// Returned as a double; may overflow to +inf, which simply fails the cap.
double count_compatible(const ModelLayout& layout, const SparseCountTensor& X);

// Advances a composition vector in colex order; false after the last one.
bool next_composition(std::vector<int64_t>& comp);

// Visits every compatible S exactly once. The callback receives the current
// cell-tracking FamilyStats and Σ_i log S(i)!, both maintained incrementally;
// the stats object is reused, so callbacks must not retain references.
void enumerate_compatible(const Kernel& kernel, const SparseCountTensor& X,
                          const std::function<void(const FamilyStats&, double)>& fn,
                          const ExactConfig& config = {});

// log 𝓛_X = log Σ_S π(S) over the enumeration, via streaming log-sum-exp.
double exact_log_marginal(const Kernel& kernel, const SparseCountTensor& X,
                          const ExactConfig& config = {});

// Unnormalized posterior over the grand total for a tensor with masked cells:
// T → log Σ over completions of the masked cells summing to T − (observed
// total) of exact 𝓛 of the completed tensor.
std::map<int64_t, double> exact_missing_posterior(const Kernel& kernel,
                                                  const SparseCountTensor& X, int64_t t_lo,
                                                  int64_t t_hi, const ExactConfig& config = {});

struct MarginalHistogram {
  double lo = 0.0;
  double hi = 0.0;
  std::vector<int64_t> bins;               // uniform over [lo, hi]
  std::map<int64_t, int64_t> dep_counts;   // d_EP value → #states
  double log_total = kNegInf;              // equals exact_log_marginal
  int64_t states = 0;
};

// Histogram of log π(S) over all compatible S plus the companion d_EP
// histogram. Two enumeration passes; memory stays O(bins).
MarginalHistogram marginal_histogram(const Kernel& kernel, const SparseCountTensor& X, int bins,
                                     const ExactConfig& config = {});

}  // namespace bam
