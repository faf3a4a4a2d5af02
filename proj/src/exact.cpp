#include "bam/exact.hpp"

#include <algorithm>
#include <cmath>

#include "bam/urn.hpp"

namespace bam {

double count_compatible(const ModelLayout& layout, const SparseCountTensor& X) {
  const double parts = static_cast<double>(layout.latent_cells());
  double total = 1.0;
  for (uint64_t key : X.sorted_entry_keys()) {
    // C(x + L − 1, L − 1) by a multiplicative ladder.
    double x = static_cast<double>(X.at_key(key));
    double combos = 1.0;
    for (double j = 1.0; j <= parts - 1.0; j += 1.0) combos *= (x + j) / j;
    total *= std::round(combos) > 0 ? std::round(combos) : combos;
    if (std::isinf(total)) return total;
  }
  return total;
}

bool next_composition(std::vector<int64_t>& comp) {
  const size_t L = comp.size();
  size_t j = 0;
  while (j < L && comp[j] == 0) ++j;
  if (j >= L || j + 1 >= L) return false;
  int64_t v = comp[j];
  comp[j + 1] += 1;
  if (j > 0) comp[j] = 0;
  comp[0] = v - 1;
  return true;
}

namespace {

int64_t lookup(const CountMap& map, uint64_t key) {
  auto it = map.find(key);
  return it == map.end() ? 0 : it->second;
}

// Depth-first walk over per-visible-cell compositions with incremental
// FamilyStats and log-factorial maintenance, so each state transition costs
// O(changed cells) instead of a rebuild.
class Enumerator {
 public:
  Enumerator(const Kernel& kernel, const SparseCountTensor& X,
             const std::function<void(const FamilyStats&, double)>& fn)
      : kernel_(kernel),
        layout_(kernel.layout()),
        X_(X),
        fn_(fn),
        vkeys_(X.sorted_entry_keys()),
        stats_(kernel.empty_stats(true)),
        cell_(static_cast<size_t>(kernel.layout().size())) {
    comps_.resize(vkeys_.size());
    for (auto& comp : comps_) {
      comp.assign(static_cast<size_t>(layout_.latent_cells()), 0);
    }
  }

  void run() { recurse(0); }

 private:
  void apply(size_t ci, int64_t l, int64_t delta) {
    layout_.scatter_visible(vkeys_[ci], cell_);
    layout_.scatter_latent(static_cast<uint64_t>(l), cell_);
    int64_t old = lookup(stats_.cells(), layout_.cell_key(cell_));
    log_factorial_ += lgam(static_cast<double>(old + delta) + 1.0) -
                      lgam(static_cast<double>(old) + 1.0);
    stats_.add(cell_, delta);
  }

  void recurse(size_t ci) {
    if (ci == vkeys_.size()) {
      fn_(stats_, log_factorial_);
      return;
    }
    const int64_t L = layout_.latent_cells();
    auto& comp = comps_[ci];
    std::fill(comp.begin(), comp.end(), 0);
    int64_t x = X_.at_key(vkeys_[ci]);
    comp[0] = x;
    apply(ci, 0, x);
    for (;;) {
      recurse(ci + 1);
      // Advance in colex order, applying only the changed coordinates.
      size_t j = 0;
      while (j < comp.size() && comp[j] == 0) ++j;
      if (j + 1 >= static_cast<size_t>(L)) break;
      int64_t v = comp[j];
      comp[j + 1] += 1;
      apply(ci, static_cast<int64_t>(j) + 1, 1);
      if (j > 0) {
        comp[j] = 0;
        apply(ci, static_cast<int64_t>(j), -v);
        comp[0] = v - 1;
        if (v > 1) apply(ci, 0, v - 1);
      } else {
        comp[0] = v - 1;
        apply(ci, 0, -1);
      }
    }
    for (size_t l = 0; l < comp.size(); ++l) {
      if (comp[l] > 0) apply(ci, static_cast<int64_t>(l), -comp[l]);
    }
  }

  const Kernel& kernel_;
  const ModelLayout& layout_;
  const SparseCountTensor& X_;
  const std::function<void(const FamilyStats&, double)>& fn_;
  std::vector<uint64_t> vkeys_;
  FamilyStats stats_;
  std::vector<int64_t> cell_;
  std::vector<std::vector<int64_t>> comps_;
  double log_factorial_ = 0.0;
};

}  // namespace

void enumerate_compatible(const Kernel& kernel, const SparseCountTensor& X,
                          const std::function<void(const FamilyStats&, double)>& fn,
                          const ExactConfig& config) {
  if (X.dims() != kernel.layout().visible_dims()) {
    throw Error(Error::Code::bad_argument,
                "dim-mismatch: observation dims must match the model's visible axes");
  }
  if (!X.mask().empty()) {
    throw Error(Error::Code::bad_argument,
                "enumeration requires a fully observed tensor; see the missing-posterior path");
  }
  double states = count_compatible(kernel.layout(), X);
  if (!(states <= config.max_states)) {
    throw Error(Error::Code::infeasible,
                "search-space-too-large: " + std::to_string(states) +
                    " compatible allocations exceed the cap of " +
                    std::to_string(config.max_states));
  }
  Enumerator(kernel, X, fn).run();
}

double exact_log_marginal(const Kernel& kernel, const SparseCountTensor& X,
                          const ExactConfig& config) {
  StreamingLogSumExp acc;
  enumerate_compatible(
      kernel, X,
      [&](const FamilyStats& stats, double log_factorial) {
        acc.add(kernel.log_marginal_allocation(stats, log_factorial));
      },
      config);
  return acc.value();
}

std::map<int64_t, double> exact_missing_posterior(const Kernel& kernel,
                                                  const SparseCountTensor& X, int64_t t_lo,
                                                  int64_t t_hi, const ExactConfig& config) {
  if (X.mask().empty()) {
    throw Error(Error::Code::bad_argument, "tensor has no missing cells");
  }
  if (t_lo > t_hi) {
    throw Error(Error::Code::bad_argument, "empty total range");
  }
  const int64_t observed = X.total();
  const std::vector<uint64_t> masked = X.mask();
  std::vector<int64_t> tuple(static_cast<size_t>(X.order()));

  std::map<int64_t, double> out;
  for (int64_t T = t_lo; T <= t_hi; ++T) {
    int64_t extra = T - observed;
    if (extra < 0) {
      out[T] = kNegInf;
      continue;
    }
    StreamingLogSumExp acc;
    std::vector<int64_t> comp(masked.size(), 0);
    if (!comp.empty()) comp[0] = extra;
    for (bool more = true; more; more = !comp.empty() && next_composition(comp)) {
      SparseCountTensor completed(X.dims());
      for (const auto& [key, count] : X.entries()) {
        X.unpack(key, tuple);
        completed.set(tuple, count);
      }
      for (size_t m = 0; m < masked.size(); ++m) {
        if (comp[m] > 0) {
          X.unpack(masked[m], tuple);
          completed.set(tuple, comp[m]);
        }
      }
      acc.add(exact_log_marginal(kernel, completed, config));
      if (comp.empty()) break;  // no masked cells — degenerate single completion
    }
    out[T] = acc.value();
  }
  return out;
}

MarginalHistogram marginal_histogram(const Kernel& kernel, const SparseCountTensor& X, int bins,
                                     const ExactConfig& config) {
  if (bins < 1) throw Error(Error::Code::bad_argument, "bin count must be positive");
  MarginalHistogram hist;
  hist.bins.assign(static_cast<size_t>(bins), 0);

  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  StreamingLogSumExp acc;
  enumerate_compatible(
      kernel, X,
      [&](const FamilyStats& stats, double log_factorial) {
        double v = kernel.log_marginal_allocation(stats, log_factorial);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
        acc.add(v);
        ++hist.states;
        ++hist.dep_counts[effective_parameters(stats)];
      },
      config);
  hist.lo = lo;
  hist.hi = hi;
  hist.log_total = acc.value();

  const double width = hi - lo;
  enumerate_compatible(
      kernel, X,
      [&](const FamilyStats& stats, double log_factorial) {
        double v = kernel.log_marginal_allocation(stats, log_factorial);
        int64_t bin = width > 0.0
                          ? static_cast<int64_t>((v - lo) / width * static_cast<double>(bins))
                          : 0;
        bin = std::clamp<int64_t>(bin, 0, bins - 1);
        ++hist.bins[static_cast<size_t>(bin)];
      },
      config);
  return hist;
}

}  // namespace bam
