#include "bam/simulate.hpp"

#include <random>
#include <vector>

#include "bam/rng.hpp"
#include "bam/util.hpp"

namespace bam {

namespace {

// One Dirichlet row via normalized gamma draws; an all-zero draw (possible for
// tiny concentrations at double precision) falls back to uniform.
void dirichlet_row(std::vector<double>& table, size_t lo, size_t len, double concentration,
                   Rng& rng) {
  std::gamma_distribution<double> gamma(concentration, 1.0);
  double sum = 0.0;
  for (size_t i = 0; i < len; ++i) {
    table[lo + i] = gamma(rng);
    sum += table[lo + i];
  }
  if (sum <= 0.0) {
    for (size_t i = 0; i < len; ++i) table[lo + i] = 1.0 / static_cast<double>(len);
    return;
  }
  for (size_t i = 0; i < len; ++i) table[lo + i] /= sum;
}

int64_t sample_row(const std::vector<double>& table, size_t lo, size_t len, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (size_t i = 0; i + 1 < len; ++i) {
    acc += table[lo + i];
    if (u < acc) return static_cast<int64_t>(i);
  }
  return static_cast<int64_t>(len - 1);
}

}  // namespace

SimulationResult simulate(const Kernel& kernel, uint64_t seed, std::optional<int64_t> tokens) {
  const ModelLayout& layout = kernel.layout();
  const ModelSpec& spec = layout.spec();
  const int N = layout.size();

  constexpr double kMaxThetaCells = 1e7;
  for (int n = 0; n < N; ++n) {
    if (layout.family_cells(n) > kMaxThetaCells)
      throw Error(Error::Code::infeasible, "theta-table-too-large: node " + spec.nodes[n].name);
  }
  if (tokens && *tokens < 0) throw Error(Error::Code::bad_argument, "token-count-negative");

  Rng rng = Rng::keyed(seed, 0x53494D55, 0, 0);

  // Dense conditional tables, row-major over [parent key][child state]. Parent
  // keys are dense mixed-radix, so each node's table has parent_cells rows.
  std::vector<std::vector<double>> theta(static_cast<size_t>(N));
  const std::optional<TiedLayout>& tied = kernel.tied();
  std::vector<bool> is_tied_child(static_cast<size_t>(N), false);
  if (tied)
    for (int c : tied->children) is_tied_child[static_cast<size_t>(c)] = true;

  for (int n = 0; n < N; ++n) {
    const size_t card = static_cast<size_t>(spec.nodes[n].card);
    const size_t rows = static_cast<size_t>(layout.parent_cells(n));
    theta[static_cast<size_t>(n)].resize(rows * card);
    if (is_tied_child[static_cast<size_t>(n)]) continue;  // filled from the shared draw
    const double conc = kernel.alpha().family_cell[n];
    for (size_t p = 0; p < rows; ++p)
      dirichlet_row(theta[static_cast<size_t>(n)], p * card, card, conc, rng);
  }
  if (tied) {
    // One shared table θ(i|r); every tied child has the root as sole parent,
    // so its rows are indexed by r and can carry the draw verbatim.
    const size_t R = static_cast<size_t>(tied->R);
    const size_t I = static_cast<size_t>(tied->I);
    const double conc = kernel.alpha().family_cell[tied->children.front()];
    std::vector<double> shared(R * I);
    for (size_t r = 0; r < R; ++r) dirichlet_row(shared, r * I, I, conc, rng);
    for (int c : tied->children) theta[static_cast<size_t>(c)] = shared;
  }

  double lambda = 0.0;
  int64_t T = 0;
  if (tokens) {
    T = *tokens;
  } else {
    std::gamma_distribution<double> rate(kernel.prior().a, 1.0 / kernel.prior().b);
    lambda = rate(rng);
    std::poisson_distribution<int64_t> count(lambda);
    T = count(rng);
  }

  SimulationResult result;
  result.lambda = lambda;
  result.tokens = T;
  result.S = SparseCountTensor(layout.full_dims());
  result.X = SparseCountTensor(layout.visible_dims());

  std::vector<int64_t> cell(static_cast<size_t>(N), 0);
  std::vector<int64_t> vis(spec.visible.size(), 0);
  for (int64_t t = 0; t < T; ++t) {
    for (int n : layout.topo()) {
      const size_t card = static_cast<size_t>(spec.nodes[n].card);
      const uint64_t pkey = layout.parent_key(n, cell);
      cell[static_cast<size_t>(n)] =
          sample_row(theta[static_cast<size_t>(n)], static_cast<size_t>(pkey) * card, card, rng);
    }
    result.S.add(cell, 1);
    for (size_t v = 0; v < spec.visible.size(); ++v)
      vis[v] = cell[static_cast<size_t>(spec.visible[v])];
    result.X.add(vis, 1);
  }
  return result;
}

}  // namespace bam
