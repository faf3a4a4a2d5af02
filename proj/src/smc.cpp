#include "bam/smc.hpp"

#include <algorithm>
#include <cmath>

namespace bam {

namespace {

int64_t lookup(const CountMap& map, uint64_t key) {
  auto it = map.find(key);
  return it == map.end() ? 0 : it->second;
}

}  // namespace

double effective_sample_size(std::span<const double> log_weights) {
  double m = kNegInf;
  for (double lw : log_weights) m = std::max(m, lw);
  if (!std::isfinite(m)) return 0.0;
  double sum = 0.0, sumsq = 0.0;
  for (double lw : log_weights) {
    double w = std::exp(lw - m);
    sum += w;
    sumsq += w * w;
  }
  return sum * sum / sumsq;
}

std::vector<int64_t> resample_counts(std::span<const double> weights, int64_t M,
                                     ResamplingScheme scheme, Rng& rng) {
  const size_t n = weights.size();
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0)) {
    throw Error(Error::Code::all_weights_zero, "all-weights-zero: cannot resample");
  }
  std::vector<int64_t> counts(n, 0);

  auto place_ordered = [&](auto next_point) {
    // Points arrive increasing in [0, total); walk the cumulative weight once.
    double cum = weights[0];
    size_t idx = 0;
    for (int64_t k = 0; k < M; ++k) {
      double u = next_point(k);
      while (u > cum && idx + 1 < n) cum += weights[++idx];
      ++counts[idx];
    }
  };

  switch (scheme) {
    case ResamplingScheme::multinomial: {
      std::vector<double> cum(n);
      double acc = 0.0;
      for (size_t i = 0; i < n; ++i) {
        acc += weights[i];
        cum[i] = acc;
      }
      for (int64_t k = 0; k < M; ++k) {
        double u = rng.uniform() * total;
        size_t idx = static_cast<size_t>(
            std::upper_bound(cum.begin(), cum.end(), u) - cum.begin());
        if (idx >= n) idx = n - 1;
        ++counts[idx];
      }
      break;
    }
    case ResamplingScheme::residual: {
      int64_t assigned = 0;
      std::vector<double> residual(n);
      for (size_t i = 0; i < n; ++i) {
        double scaled = static_cast<double>(M) * weights[i] / total;
        int64_t floor_count = static_cast<int64_t>(std::floor(scaled));
        counts[i] = floor_count;
        assigned += floor_count;
        residual[i] = scaled - static_cast<double>(floor_count);
      }
      int64_t leftover = M - assigned;
      if (leftover > 0) {
        double rtotal = 0.0;
        for (double r : residual) rtotal += r;
        std::vector<double> cum(n);
        double acc = 0.0;
        for (size_t i = 0; i < n; ++i) {
          acc += residual[i];
          cum[i] = acc;
        }
        for (int64_t k = 0; k < leftover; ++k) {
          double u = rng.uniform() * rtotal;
          size_t idx = static_cast<size_t>(
              std::upper_bound(cum.begin(), cum.end(), u) - cum.begin());
          if (idx >= n) idx = n - 1;
          ++counts[idx];
        }
      }
      break;
    }
    case ResamplingScheme::stratified: {
      double step = total / static_cast<double>(M);
      place_ordered([&](int64_t k) { return (static_cast<double>(k) + rng.uniform()) * step; });
      break;
    }
    case ResamplingScheme::systematic: {
      double step = total / static_cast<double>(M);
      double offset = rng.uniform();
      place_ordered([&](int64_t k) { return (static_cast<double>(k) + offset) * step; });
      break;
    }
  }
  return counts;
}

void resample(std::vector<Particle>& particles, ResamplingScheme scheme, Rng& rng) {
  const size_t n = particles.size();
  double m = kNegInf;
  for (const Particle& p : particles) m = std::max(m, p.log_weight);
  if (!std::isfinite(m)) {
    throw Error(Error::Code::all_weights_zero,
                "all-weights-zero: the observation has probability zero under every particle");
  }
  std::vector<double> weights(n);
  for (size_t i = 0; i < n; ++i) weights[i] = std::exp(particles[i].log_weight - m);
  auto counts = resample_counts(weights, static_cast<int64_t>(n), scheme, rng);

  std::vector<Particle> next;
  next.reserve(n);
  for (size_t i = 0; i < n; ++i) {
    for (int64_t c = 0; c < counts[i]; ++c) next.push_back(particles[i]);
  }
  for (Particle& p : next) p.log_weight = 0.0;
  particles = std::move(next);
}

SisSampler::SisSampler(const Kernel& kernel, const SparseCountTensor& X, int64_t latent_cap)
    : kernel_(&kernel), X_(&X) {
  if (X.dims() != kernel.layout().visible_dims()) {
    throw Error(Error::Code::bad_argument,
                "dim-mismatch: observation dims must match the model's visible axes");
  }
  if (!X.mask().empty()) {
    throw Error(Error::Code::bad_argument,
                "the samplers require a fully observed tensor (no missing cells)");
  }
  if (kernel.layout().latent_cells() > latent_cap) {
    throw Error(Error::Code::infeasible,
                "latent-space-too-large: " + std::to_string(kernel.layout().latent_cells()) +
                    " latent configurations exceed the cap of " + std::to_string(latent_cap));
  }
  total_ = X.total();
  token_order_.reserve(static_cast<size_t>(total_));
  for (uint64_t key : X.sorted_entry_keys()) {
    for (int64_t c = 0; c < X.at_key(key); ++c) token_order_.push_back(key);
  }
}

Particle SisSampler::make_particle() const {
  Particle p{kernel_->empty_stats(false), 0.0, token_order_, total_};
  return p;
}

uint64_t SisSampler::propose_visible(Particle& p, Rng& rng) const {
  if (p.remaining <= 0) {
    throw Error(Error::Code::bad_argument, "exhausted: every observed token is already allocated");
  }
  int64_t idx = rng.below(p.remaining);
  uint64_t key = p.pool[static_cast<size_t>(idx)];
  std::swap(p.pool[static_cast<size_t>(idx)], p.pool[static_cast<size_t>(p.remaining - 1)]);
  --p.remaining;
  return key;
}

double SisSampler::propose_latent(const FamilyStats& stats, Rng& rng,
                                  std::span<int64_t> cell) const {
  const ModelLayout& L = kernel_->layout();
  const int64_t cells = L.latent_cells();
  thread_local std::vector<double> logp;
  logp.resize(static_cast<size_t>(cells));
  double m = kNegInf;
  for (int64_t l = 0; l < cells; ++l) {
    L.scatter_latent(static_cast<uint64_t>(l), cell);
    logp[static_cast<size_t>(l)] = kernel_->transition_logprob(stats, cell);
    m = std::max(m, logp[static_cast<size_t>(l)]);
  }
  double total = 0.0;
  for (int64_t l = 0; l < cells; ++l) total += std::exp(logp[static_cast<size_t>(l)] - m);
  double target = rng.uniform() * total;
  double acc = 0.0;
  int64_t chosen = cells - 1;
  for (int64_t l = 0; l < cells; ++l) {
    acc += std::exp(logp[static_cast<size_t>(l)] - m);
    if (target < acc) {
      chosen = l;
      break;
    }
  }
  L.scatter_latent(static_cast<uint64_t>(chosen), cell);
  return m + std::log(total);
}

SisSampler::StepInfo SisSampler::step(Particle& p, Rng& rng) const {
  const ModelLayout& L = kernel_->layout();
  const int64_t before = p.remaining;
  uint64_t vkey = propose_visible(p, rng);
  thread_local std::vector<int64_t> cell;
  cell.resize(static_cast<size_t>(L.size()));
  L.scatter_visible(vkey, cell);
  double log_pV = propose_latent(p.stats, rng, cell);
  // Count of this visible cell still unallocated, before committing the token.
  int64_t cell_remaining = X_->at_key(vkey) - lookup(p.stats.visible(), vkey);
  p.stats.increment(cell);
  StepInfo info;
  info.visible_key = vkey;
  info.log_proposal = log_pV;
  info.log_u = log_pV + std::log(static_cast<double>(before)) -
               std::log(static_cast<double>(cell_remaining));
  p.log_weight += info.log_u;
  return info;
}

namespace {

SmcEstimate run_engine(const Kernel& kernel, const SparseCountTensor& X, const SmcConfig& config,
                       ResampleSchedule schedule) {
  if (config.particles < 1) {
    throw Error(Error::Code::bad_argument, "particle count must be at least 1");
  }
  if (schedule == ResampleSchedule::adaptive &&
      !(config.ess_threshold > 0.0 && config.ess_threshold <= 1.0)) {
    throw Error(Error::Code::bad_argument, "ess threshold must lie in (0, 1]");
  }
  SisSampler sampler(kernel, X, config.latent_cap);
  const int64_t M = config.particles;
  const int64_t T = sampler.tokens();

  SmcEstimate est;
  est.log_Z0 = kernel.log_prob_total(T);

  std::vector<Particle> particles;
  particles.reserve(static_cast<size_t>(M));
  for (int64_t s = 0; s < M; ++s) particles.push_back(sampler.make_particle());

  std::vector<double> log_weights(static_cast<size_t>(M), 0.0);
  double log_Z_run = 0.0;
  for (int64_t tau = 1; tau <= T; ++tau) {
    // Slot-keyed streams make the run independent of the thread partition.
    parallel_for(M, config.threads, [&](int64_t lo, int64_t hi) {
      for (int64_t s = lo; s < hi; ++s) {
        Rng rng = Rng::keyed(config.seed, static_cast<uint64_t>(1 + s),
                             static_cast<uint64_t>(tau), 0);
        sampler.step(particles[static_cast<size_t>(s)], rng);
      }
    });
    for (int64_t s = 0; s < M; ++s) {
      log_weights[static_cast<size_t>(s)] = particles[static_cast<size_t>(s)].log_weight;
    }
    double ess = effective_sample_size(log_weights);
    est.ess_trace.push_back(ess);
    bool fire = schedule == ResampleSchedule::always ||
                (schedule == ResampleSchedule::adaptive &&
                 ess < config.ess_threshold * static_cast<double>(M));
    if (fire) {
      est.resample_steps.push_back(tau);
      log_Z_run += log_mean_exp(log_weights);
      Rng rng = Rng::keyed(config.seed, 0, static_cast<uint64_t>(tau), 1);
      resample(particles, config.resampling, rng);
    }
  }
  for (int64_t s = 0; s < M; ++s) {
    log_weights[static_cast<size_t>(s)] = particles[static_cast<size_t>(s)].log_weight;
  }
  log_Z_run += log_mean_exp(log_weights);
  est.log_Z = est.log_Z0 + log_Z_run;

  // Hitting guarantee: the proposal allocates each observed token exactly
  // once, so every trajectory must reproduce X on the visible margin.
  for (const Particle& p : particles) {
    if (p.remaining != 0 || p.stats.visible().size() != X.entries().size()) {
      throw Error(Error::Code::bad_model, "internal: trajectory did not reproduce the observation");
    }
    for (const auto& [key, count] : X.entries()) {
      if (lookup(p.stats.visible(), key) != count) {
        throw Error(Error::Code::bad_model,
                    "internal: trajectory did not reproduce the observation");
      }
    }
  }

  double norm = log_sum_exp(log_weights);
  for (Particle& p : particles) p.log_weight -= norm;
  est.particles = std::move(particles);
  return est;
}

}  // namespace

SmcEstimate run_sis(const Kernel& kernel, const SparseCountTensor& X, const SmcConfig& config) {
  return run_engine(kernel, X, config, ResampleSchedule::never);
}

SmcEstimate run_sis_r(const Kernel& kernel, const SparseCountTensor& X, const SmcConfig& config) {
  return run_engine(kernel, X, config, config.schedule);
}

namespace {

void fill_node_table(const Kernel& kernel, const FamilyStats& stats, int n, FactorTable& table) {
  const ModelLayout& L = kernel.layout();
  const ModelSpec& spec = L.spec();
  table.node = n;
  table.family = L.family(n);
  table.family_dims.clear();
  for (int member : table.family) table.family_dims.push_back(spec.nodes[member].card);
  if (L.family_cells(n) > 1e7) {
    throw Error(Error::Code::infeasible, "family of node " + spec.nodes[n].name +
                                             " is too large to materialize densely");
  }
  const int64_t cells = static_cast<int64_t>(L.family_cells(n));
  table.values.assign(static_cast<size_t>(cells), 0.0);

  const auto& tied = kernel.tied();
  auto child_pos = [&]() -> int {
    if (!tied) return -1;
    auto it = std::find(tied->children.begin(), tied->children.end(), n);
    return it == tied->children.end() ? -1 : static_cast<int>(it - tied->children.begin());
  }();

  if (child_pos >= 0) {
    // Shared-table posterior mean: pooled counts over all tied children.
    const double as = kernel.alpha().family_cell[n];
    const double col_total = as * static_cast<double>(tied->I);
    const double N = static_cast<double>(tied->children.size());
    for (int64_t fkey = 0; fkey < cells; ++fkey) {
      uint64_t key = static_cast<uint64_t>(fkey);
      int64_t i, r;
      if (tied->root_stride[static_cast<size_t>(child_pos)] == 1) {
        r = static_cast<int64_t>(key % static_cast<uint64_t>(tied->R));
        i = static_cast<int64_t>(key / static_cast<uint64_t>(tied->R));
      } else {
        i = static_cast<int64_t>(key % static_cast<uint64_t>(tied->I));
        r = static_cast<int64_t>(key / static_cast<uint64_t>(tied->I));
      }
      double sh = static_cast<double>(tied_shared_count(*tied, stats, i, r));
      double s0 = static_cast<double>(lookup(stats.family(tied->root), static_cast<uint64_t>(r)));
      table.values[static_cast<size_t>(fkey)] = (as + sh) / (col_total + N * s0);
    }
    return;
  }

  const double af = kernel.alpha().family_cell[n];
  const double ap = af * static_cast<double>(spec.nodes[n].card);
  for (int64_t fkey = 0; fkey < cells; ++fkey) {
    // Re-encode the parent configuration of this family cell.
    uint64_t rest = static_cast<uint64_t>(fkey);
    uint64_t pkey = 0;
    uint64_t pstride = 1;
    for (int member : table.family) {
      uint64_t card = static_cast<uint64_t>(spec.nodes[member].card);
      uint64_t coord = rest % card;
      rest /= card;
      if (member != n) {
        pkey += coord * pstride;
        pstride *= card;
      }
    }
    double sf = static_cast<double>(lookup(stats.family(n), static_cast<uint64_t>(fkey)));
    double sp = static_cast<double>(stats.parent_count(n, pkey));
    table.values[static_cast<size_t>(fkey)] = (af + sf) / (ap + sp);
  }
}

}  // namespace

std::vector<FactorTable> extract_decomposition(const Kernel& kernel, const FamilyStats& stats) {
  std::vector<FactorTable> tables(static_cast<size_t>(kernel.layout().size()));
  for (int n = 0; n < kernel.layout().size(); ++n) {
    fill_node_table(kernel, stats, n, tables[static_cast<size_t>(n)]);
  }
  return tables;
}

std::vector<FactorTable> extract_decomposition(const Kernel& kernel,
                                               std::span<const Particle> particles) {
  if (particles.empty()) {
    throw Error(Error::Code::bad_argument, "cannot average over an empty particle set");
  }
  std::vector<double> log_weights;
  log_weights.reserve(particles.size());
  for (const Particle& p : particles) log_weights.push_back(p.log_weight);
  double norm = log_sum_exp(log_weights);
  if (!std::isfinite(norm)) {
    throw Error(Error::Code::all_weights_zero, "all-weights-zero: cannot average tables");
  }

  std::vector<FactorTable> sum;
  for (size_t s = 0; s < particles.size(); ++s) {
    double w = std::exp(log_weights[s] - norm);
    auto tables = extract_decomposition(kernel, particles[s].stats);
    if (sum.empty()) {
      sum = std::move(tables);
      for (auto& t : sum) {
        for (double& v : t.values) v *= w;
      }
    } else {
      for (size_t n = 0; n < sum.size(); ++n) {
        for (size_t c = 0; c < sum[n].values.size(); ++c) {
          sum[n].values[c] += w * tables[n].values[c];
        }
      }
    }
  }
  return sum;
}

}  // namespace bam
