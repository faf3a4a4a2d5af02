#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "bam/kernel.hpp"

namespace bam {

enum class ResamplingScheme { multinomial, residual, stratified, systematic };
enum class ResampleSchedule { always, adaptive, never };

struct SmcConfig {
  int64_t particles = 1000;
  uint64_t seed = 0;
  ResamplingScheme resampling = ResamplingScheme::systematic;
  ResampleSchedule schedule = ResampleSchedule::adaptive;
  double ess_threshold = 0.5;  // adaptive: fire when ESS < threshold·M
  int threads = 1;
  int64_t latent_cap = 1'000'000;
};

// One importance-sampling trajectory: the urn state built so far, the running
// log-weight, and this particle's multiset of not-yet-allocated observed
// tokens (kept as a shuffled prefix so one uniform pick is one token).
struct Particle {
  FamilyStats stats;
  double log_weight = 0.0;
  std::vector<uint64_t> pool;  // visible keys; live tokens occupy [0, remaining)
  int64_t remaining = 0;
};

struct SmcEstimate {
  double log_Z = 0.0;   // estimate of log 𝓛_X, prefactor included
  double log_Z0 = 0.0;  // closed-form prefactor
  std::vector<double> ess_trace;        // one entry per token step
  std::vector<int64_t> resample_steps;  // 1-based steps where resampling fired
  std::vector<Particle> particles;      // final set; log_weights normalized
};

// (Σw)²/Σw² on linear weights, computed stably from log-weights.
double effective_sample_size(std::span<const double> log_weights);

// Offspring counts for M draws over normalized weights. Residual guarantees
// ⌊M·w̄⌋ copies; systematic keeps every count within {⌊M·w̄⌋, ⌈M·w̄⌉}.
std::vector<int64_t> resample_counts(std::span<const double> weights, int64_t M,
                                     ResamplingScheme scheme, Rng& rng);

// Replaces the set by offspring of the named scheme and resets log-weights to
// zero. Throws all-weights-zero when no particle has positive weight.
void resample(std::vector<Particle>& particles, ResamplingScheme scheme, Rng& rng);

// Shared machinery of one SIS pass over an observation tensor X (dims must
// equal the model's visible dims, no mask). The visible proposal draws a
// remaining token uniformly — equivalently a cell with probability
// (X−S_V)(i_V)/(T−τ+1) — and the latent proposal enumerates every completion
// of that cell and samples from the exact conditional of the urn transition.
class SisSampler {
 public:
  SisSampler(const Kernel& kernel, const SparseCountTensor& X, int64_t latent_cap = 1'000'000);

  const Kernel& kernel() const { return *kernel_; }
  int64_t tokens() const { return total_; }

  Particle make_particle() const;

  // Consumes one token from the particle's pool; throws when exhausted.
  uint64_t propose_visible(Particle& p, Rng& rng) const;

  // Fills the latent coordinates of `cell` (visible ones already scattered)
  // and returns log p_{τ,V}(i_V | S) = log Σ_{i_V̄} f(S+e_c | S).
  double propose_latent(const FamilyStats& stats, Rng& rng, std::span<int64_t> cell) const;

  struct StepInfo {
    uint64_t visible_key = 0;
    double log_proposal = 0.0;  // log p_{τ,V}
    double log_u = 0.0;         // incremental weight
  };

  // One full token step: propose, weigh, and commit the increment.
  StepInfo step(Particle& p, Rng& rng) const;

 private:
  const Kernel* kernel_;
  const SparseCountTensor* X_;
  std::vector<uint64_t> token_order_;
  int64_t total_ = 0;
};

// Plain importance sampling: M independent trajectories, log_Z = log_Z0 +
// log-mean-exp of the trajectory weights. Identical to run_sis_r with
// schedule=never.
SmcEstimate run_sis(const Kernel& kernel, const SparseCountTensor& X, const SmcConfig& config);

// With resampling: M coupled particles; when the schedule fires, the running Z
// absorbs the mean incremental weight and the set is resampled. With any
// schedule the returned estimate is deterministic in (seed, M) regardless of
// thread count: particle slot s draws from stream (seed, s, step) and the
// resampler from (seed, step).
SmcEstimate run_sis_r(const Kernel& kernel, const SparseCountTensor& X, const SmcConfig& config);

// Posterior-mean conditional table θ̂_{n|pa(n)} for one node, dense over its
// family cells (mixed-radix layout over ascending family members).
struct FactorTable {
  int node = -1;
  std::vector<int> family;        // ascending, includes node
  std::vector<int64_t> family_dims;
  std::vector<double> values;
};

std::vector<FactorTable> extract_decomposition(const Kernel& kernel, const FamilyStats& stats);
// Weight-averaged tables over a normalized particle set.
std::vector<FactorTable> extract_decomposition(const Kernel& kernel,
                                               std::span<const Particle> particles);

}  // namespace bam
