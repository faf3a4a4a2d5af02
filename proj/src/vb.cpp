#include "bam/vb.hpp"

#include <algorithm>
#include <cmath>

namespace bam {

namespace {

double lookup(const std::unordered_map<uint64_t, double>& map, uint64_t key) {
  auto it = map.find(key);
  return it == map.end() ? 0.0 : it->second;
}

void check_vb_inputs(const Kernel& kernel, const SparseCountTensor& X, int64_t latent_cap) {
  if (kernel.tied()) {
    throw Error(Error::Code::bad_model,
                "tied tables are not supported by the variational scorer; use smc or exact");
  }
  if (X.dims() != kernel.layout().visible_dims()) {
    throw Error(Error::Code::bad_argument,
                "dim-mismatch: observation dims must match the model's visible axes");
  }
  if (!X.mask().empty()) {
    throw Error(Error::Code::bad_argument,
                "the variational scorer requires a fully observed tensor");
  }
  if (kernel.layout().latent_cells() > latent_cap) {
    throw Error(Error::Code::infeasible,
                "latent-space-too-large: " + std::to_string(kernel.layout().latent_cells()) +
                    " latent configurations exceed the cap of " + std::to_string(latent_cap));
  }
}

// E_Q[S_fa], E_Q[S_pa], E_Q[S₊] from the current responsibilities.
RealFamilyStats expectations(const Kernel& kernel, const SparseCountTensor& X,
                             const VBState& state) {
  const ModelLayout& L = kernel.layout();
  const int64_t cells = L.latent_cells();
  RealFamilyStats E;
  E.family.resize(static_cast<size_t>(L.size()));
  E.parent.resize(static_cast<size_t>(L.size()));
  std::vector<int64_t> cell(static_cast<size_t>(L.size()));
  for (size_t c = 0; c < state.visible_keys.size(); ++c) {
    const uint64_t vkey = state.visible_keys[c];
    const double x = static_cast<double>(X.at_key(vkey));
    L.scatter_visible(vkey, cell);
    for (int64_t l = 0; l < cells; ++l) {
      double w = x * state.phi[c * static_cast<size_t>(cells) + static_cast<size_t>(l)];
      if (w == 0.0) continue;
      L.scatter_latent(static_cast<uint64_t>(l), cell);
      for (int n = 0; n < L.size(); ++n) {
        E.family[static_cast<size_t>(n)][L.family_key(n, cell)] += w;
        if (!L.spec().parents[n].empty()) {
          E.parent[static_cast<size_t>(n)][L.parent_key(n, cell)] += w;
        }
      }
      E.total += w;
    }
  }
  return E;
}

}  // namespace

double elbo(const Kernel& kernel, const SparseCountTensor& X, const VBState& state) {
  const ModelLayout& L = kernel.layout();
  const PriorSpec& prior = kernel.prior();
  const double a = prior.a, b = prior.b;
  const double total = state.expected.total;

  double value = a * std::log(b) - (a + total) * std::log(b + 1.0) + lgam(a + total) - lgam(a);

  for (int n = 0; n < L.size(); ++n) {
    const double af = kernel.alpha().family_cell[n];
    const double ap = af * static_cast<double>(L.spec().nodes[n].card);
    const auto& fam = state.expected.family[static_cast<size_t>(n)];
    std::vector<uint64_t> keys;
    keys.reserve(fam.size());
    for (const auto& [k, v] : fam) keys.push_back(k);
    std::sort(keys.begin(), keys.end());
    for (uint64_t key : keys) value += lgam(af + fam.at(key)) - lgam(af);
    if (L.spec().parents[n].empty()) {
      value -= lgam(ap + total) - lgam(ap);
    } else {
      const auto& par = state.expected.parent[static_cast<size_t>(n)];
      keys.clear();
      for (const auto& [k, v] : par) keys.push_back(k);
      std::sort(keys.begin(), keys.end());
      for (uint64_t key : keys) value -= lgam(ap + par.at(key)) - lgam(ap);
    }
  }

  const int64_t cells = L.latent_cells();
  for (size_t c = 0; c < state.visible_keys.size(); ++c) {
    const double x = static_cast<double>(X.at_key(state.visible_keys[c]));
    value -= lgam(x + 1.0);
    // −Σ E[S(i)]·log Φ(i) = X(i_V) · entropy of the cell's responsibilities.
    for (int64_t l = 0; l < cells; ++l) {
      double p = state.phi[c * static_cast<size_t>(cells) + static_cast<size_t>(l)];
      if (p > 0.0) value -= x * p * std::log(p);
    }
  }
  return value;
}

VBState vb_init(const Kernel& kernel, const SparseCountTensor& X, uint64_t restart_seed,
                int64_t latent_cap) {
  check_vb_inputs(kernel, X, latent_cap);
  const ModelLayout& L = kernel.layout();
  const int64_t cells = L.latent_cells();

  VBState state;
  state.visible_keys = X.sorted_entry_keys();
  state.phi.resize(state.visible_keys.size() * static_cast<size_t>(cells));
  for (size_t c = 0; c < state.visible_keys.size(); ++c) {
    Rng rng = Rng::keyed(restart_seed, 0x5649u, static_cast<uint64_t>(c));
    // Dirichlet(1) row: normalized standard exponentials.
    double sum = 0.0;
    for (int64_t l = 0; l < cells; ++l) {
      double e = -std::log(1.0 - rng.uniform());
      state.phi[c * static_cast<size_t>(cells) + static_cast<size_t>(l)] = e;
      sum += e;
    }
    for (int64_t l = 0; l < cells; ++l) {
      state.phi[c * static_cast<size_t>(cells) + static_cast<size_t>(l)] /= sum;
    }
  }
  state.expected = expectations(kernel, X, state);
  state.a_hat = kernel.prior().a + state.expected.total;
  state.elbo = elbo(kernel, X, state);
  state.elbo_trace.push_back(state.elbo);
  return state;
}

void vb_update(const Kernel& kernel, const SparseCountTensor& X, VBState& state) {
  const ModelLayout& L = kernel.layout();
  const int64_t cells = L.latent_cells();
  std::vector<int64_t> cell(static_cast<size_t>(L.size()));
  std::vector<double> logphi(static_cast<size_t>(cells));

  for (size_t c = 0; c < state.visible_keys.size(); ++c) {
    L.scatter_visible(state.visible_keys[c], cell);
    double m = kNegInf;
    for (int64_t l = 0; l < cells; ++l) {
      L.scatter_latent(static_cast<uint64_t>(l), cell);
      double lp = 0.0;
      for (int n = 0; n < L.size(); ++n) {
        const double af = kernel.alpha().family_cell[n];
        const double ap = af * static_cast<double>(L.spec().nodes[n].card);
        double ef = lookup(state.expected.family[static_cast<size_t>(n)], L.family_key(n, cell));
        double ep = L.spec().parents[n].empty()
                        ? state.expected.total
                        : lookup(state.expected.parent[static_cast<size_t>(n)],
                                 L.parent_key(n, cell));
        lp += digamma(af + ef) - digamma(ap + ep);
      }
      logphi[static_cast<size_t>(l)] = lp;
      m = std::max(m, lp);
    }
    double sum = 0.0;
    for (int64_t l = 0; l < cells; ++l) {
      double w = std::exp(logphi[static_cast<size_t>(l)] - m);
      state.phi[c * static_cast<size_t>(cells) + static_cast<size_t>(l)] = w;
      sum += w;
    }
    for (int64_t l = 0; l < cells; ++l) {
      state.phi[c * static_cast<size_t>(cells) + static_cast<size_t>(l)] /= sum;
    }
  }

  state.expected = expectations(kernel, X, state);
  state.a_hat = kernel.prior().a + state.expected.total;
  state.elbo = elbo(kernel, X, state);
  state.elbo_trace.push_back(state.elbo);
  ++state.iterations;
}

VBState run_vb(const Kernel& kernel, const SparseCountTensor& X, const VBConfig& config) {
  if (config.restarts < 1) {
    throw Error(Error::Code::bad_argument, "restart count must be at least 1");
  }
  check_vb_inputs(kernel, X, config.latent_cap);

  std::vector<VBState> results(static_cast<size_t>(config.restarts));
  parallel_for(config.restarts, config.threads, [&](int64_t lo, int64_t hi) {
    for (int64_t r = lo; r < hi; ++r) {
      uint64_t restart_seed = Rng::keyed(config.seed, 0x7662u, static_cast<uint64_t>(r)).next();
      VBState state = vb_init(kernel, X, restart_seed, config.latent_cap);
      double prev = state.elbo;
      for (int iter = 0; iter < config.max_iters; ++iter) {
        vb_update(kernel, X, state);
        if (std::abs(state.elbo - prev) < config.tol) break;
        prev = state.elbo;
      }
      results[static_cast<size_t>(r)] = std::move(state);
    }
  });

  size_t best = 0;
  for (size_t r = 1; r < results.size(); ++r) {
    if (results[r].elbo > results[best].elbo) best = r;
  }
  return std::move(results[best]);
}

}  // namespace bam
