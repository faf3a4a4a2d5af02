#include "bam/urn.hpp"

#include <cmath>

namespace bam {

double log_prob_total(const PriorSpec& prior, int64_t T) {
  double a = prior.a, b = prior.b;
  double t = static_cast<double>(T);
  return lgam(a + t) - lgam(a) - lgam(t + 1.0) + a * (std::log(b) - std::log(b + 1.0)) -
         t * std::log(b + 1.0);
}

// Cells with S = 0 contribute lgamma(α) − lgamma(α) = 0, so only touched
// family cells and touched parent configurations enter. Root nodes have the
// single empty parent configuration with count S₊ and normalizer α_fa·I_n.
double log_marginal_events_node(const AlphaConstants& alpha, const FamilyStats& stats, int n) {
  const ModelLayout& L = stats.layout();
  const double af = alpha.family_cell[n];
  const double ap = af * static_cast<double>(L.spec().nodes[n].card);
  double sum = 0.0;
  for (uint64_t key : sorted_keys(stats.family(n))) {
    double s = static_cast<double>(stats.family(n).at(key));
    sum += lgam(af + s) - lgam(af);
  }
  if (L.spec().parents[n].empty()) {
    double s = static_cast<double>(stats.total());
    sum -= lgam(ap + s) - lgam(ap);
  } else {
    for (uint64_t key : sorted_keys(stats.parent(n))) {
      double s = static_cast<double>(stats.parent(n).at(key));
      sum -= lgam(ap + s) - lgam(ap);
    }
  }
  return sum;
}

double log_marginal_events(const AlphaConstants& alpha, const FamilyStats& stats) {
  double sum = 0.0;
  for (int n = 0; n < stats.layout().size(); ++n) {
    sum += log_marginal_events_node(alpha, stats, n);
  }
  return sum;
}

double log_marginal_allocation(const AlphaConstants& alpha, const PriorSpec& prior,
                               const FamilyStats& stats, double log_factorial) {
  double a = prior.a, b = prior.b;
  double T = static_cast<double>(stats.total());
  double lambda_part =
      a * std::log(b) - (a + T) * std::log(b + 1.0) + lgam(a + T) - lgam(a);
  return lambda_part + log_marginal_events(alpha, stats) - log_factorial;
}

double log_marginal_allocation(const AlphaConstants& alpha, const PriorSpec& prior,
                               const FamilyStats& stats) {
  return log_marginal_allocation(alpha, prior, stats, log_factorial_term(stats.cells()));
}

double log_marginal_given_total(const AlphaConstants& alpha, const FamilyStats& stats,
                                double log_factorial) {
  double T = static_cast<double>(stats.total());
  return log_marginal_events(alpha, stats) + lgam(T + 1.0) - log_factorial;
}

double log_marginal_given_total(const AlphaConstants& alpha, const FamilyStats& stats) {
  return log_marginal_given_total(alpha, stats, log_factorial_term(stats.cells()));
}

double transition_logprob_node(const AlphaConstants& alpha, const FamilyStats& stats,
                               std::span<const int64_t> cell, int n) {
  const ModelLayout& L = stats.layout();
  const double af = alpha.family_cell[n];
  const double ap = af * static_cast<double>(L.spec().nodes[n].card);
  auto it = stats.family(n).find(L.family_key(n, cell));
  double sf = it == stats.family(n).end() ? 0.0 : static_cast<double>(it->second);
  double sp = static_cast<double>(stats.parent_count(n, L.parent_key(n, cell)));
  return std::log(af + sf) - std::log(ap + sp);
}

double transition_logprob(const AlphaConstants& alpha, const FamilyStats& stats,
                          std::span<const int64_t> cell) {
  double sum = 0.0;
  for (int n = 0; n < stats.layout().size(); ++n) {
    sum += transition_logprob_node(alpha, stats, cell, n);
  }
  return sum;
}

void sample_transition_node(const AlphaConstants& alpha, const FamilyStats& stats, Rng& rng,
                            std::span<int64_t> cell, int n) {
  const ModelLayout& L = stats.layout();
  const double af = alpha.family_cell[n];
  const int64_t card = L.spec().nodes[n].card;
  const double ap = af * static_cast<double>(card);
  double sp = static_cast<double>(stats.parent_count(n, L.parent_key(n, cell)));
  // Σ_{i_n} (α_fa + S_fa) = α_pa·I-normalizer + S_pa exactly, so a single
  // uniform draw over [0, ap+sp) selects i_n without renormalization.
  double target = rng.uniform() * (ap + sp);
  double acc = 0.0;
  int64_t chosen = card - 1;
  for (int64_t i = 0; i < card; ++i) {
    cell[n] = i;
    auto it = stats.family(n).find(L.family_key(n, cell));
    double sf = it == stats.family(n).end() ? 0.0 : static_cast<double>(it->second);
    acc += af + sf;
    if (target < acc) {
      chosen = i;
      break;
    }
  }
  cell[n] = chosen;
}

void sample_transition(const AlphaConstants& alpha, const FamilyStats& stats, Rng& rng,
                       std::span<int64_t> cell) {
  for (int n : stats.layout().topo()) sample_transition_node(alpha, stats, rng, cell, n);
}

double reverse_transition_logprob(const FamilyStats& stats, std::span<const int64_t> cell) {
  const auto& cells = stats.cells();
  auto it = cells.find(stats.layout().cell_key(cell));
  if (it == cells.end() || it->second <= 0) {
    throw Error(Error::Code::bad_argument, "cell-empty: no token to remove at this cell");
  }
  return std::log(static_cast<double>(it->second)) -
         std::log(static_cast<double>(stats.total()));
}

int64_t effective_parameters(const FamilyStats& stats) {
  const ModelLayout& L = stats.layout();
  int64_t d = 0;
  for (int n = 0; n < L.size(); ++n) {
    int64_t occupied_parents;
    if (L.spec().parents[n].empty()) {
      occupied_parents = stats.total() > 0 ? 1 : 0;
    } else {
      occupied_parents = static_cast<int64_t>(stats.parent(n).size());
    }
    d += static_cast<int64_t>(stats.family(n).size()) - occupied_parents;
  }
  return d;
}

PosteriorFactors posterior_factors(const AlphaConstants& alpha, const PriorSpec& prior,
                                   const FamilyStats& stats) {
  const ModelLayout& L = stats.layout();
  PosteriorFactors post;
  post.lambda_shape = prior.a + static_cast<double>(stats.total());
  post.lambda_rate = prior.b + 1.0;
  post.alpha_family_cell = alpha.family_cell;
  post.dirichlet.resize(L.size());
  for (int n = 0; n < L.size(); ++n) {
    post.dirichlet[n].reserve(stats.family(n).size());
    for (const auto& [key, count] : stats.family(n)) {
      post.dirichlet[n][key] = alpha.family_cell[n] + static_cast<double>(count);
    }
  }
  return post;
}

}  // namespace bam
