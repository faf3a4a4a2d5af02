#include "bam/tying.hpp"

#include <algorithm>
#include <cmath>

namespace bam {

std::optional<TiedLayout> tied_layout(const ModelLayout& layout) {
  const ModelSpec& spec = layout.spec();
  if (spec.tying.empty()) return std::nullopt;
  const auto& group = spec.tying.front();
  TiedLayout tied;
  tied.root = group.front().parents.front();
  for (const auto& binding : group) tied.children.push_back(binding.child);
  std::sort(tied.children.begin(), tied.children.end());
  tied.R = spec.nodes[tied.root].card;
  tied.I = spec.nodes[tied.children.front()].card;
  for (int child : tied.children) {
    // Family members are sorted, so the lower-numbered node gets stride 1.
    if (tied.root < child) {
      tied.root_stride.push_back(1);
      tied.child_stride.push_back(static_cast<uint64_t>(tied.R));
    } else {
      tied.root_stride.push_back(static_cast<uint64_t>(tied.I));
      tied.child_stride.push_back(1);
    }
  }
  return tied;
}

namespace {

int64_t lookup(const CountMap& map, uint64_t key) {
  auto it = map.find(key);
  return it == map.end() ? 0 : it->second;
}

}  // namespace

TiedStats tied_stats(const TiedLayout& tied, const FamilyStats& stats) {
  TiedStats out;
  out.total = stats.total();
  out.s0 = stats.family(tied.root);
  for (size_t c = 0; c < tied.children.size(); ++c) {
    const CountMap& fam = stats.family(tied.children[c]);
    for (uint64_t key : sorted_keys(fam)) {
      uint64_t i, r;
      if (tied.root_stride[c] == 1) {
        r = key % static_cast<uint64_t>(tied.R);
        i = key / static_cast<uint64_t>(tied.R);
      } else {
        i = key % static_cast<uint64_t>(tied.I);
        r = key / static_cast<uint64_t>(tied.I);
      }
      out.shared[tied.shared_key(static_cast<int64_t>(i), static_cast<int64_t>(r))] += fam.at(key);
    }
  }
  return out;
}

int64_t tied_shared_count(const TiedLayout& tied, const FamilyStats& stats, int64_t i, int64_t r) {
  int64_t sum = 0;
  for (size_t c = 0; c < tied.children.size(); ++c) {
    sum += lookup(stats.family(tied.children[c]), tied.child_family_key(c, i, r));
  }
  return sum;
}

double tied_log_marginal_events(const TiedLayout& tied, const AlphaConstants& alpha,
                                const FamilyStats& stats) {
  const double a0 = alpha.family_cell[tied.root];
  const double as = alpha.family_cell[tied.children.front()];
  const double root_total = a0 * static_cast<double>(tied.R);
  const double col_total = as * static_cast<double>(tied.I);
  const double N = static_cast<double>(tied.children.size());

  TiedStats ts = tied_stats(tied, stats);
  double sum = 0.0;
  // Root block: its own Dirichlet–multinomial Beta ratio.
  for (uint64_t key : sorted_keys(ts.s0)) {
    double s = static_cast<double>(ts.s0.at(key));
    sum += lgam(a0 + s) - lgam(a0);
  }
  sum -= lgam(root_total + static_cast<double>(ts.total)) - lgam(root_total);
  // Shared table: one Beta ratio per column r, with column totals N·S₀(r).
  for (uint64_t key : sorted_keys(ts.shared)) {
    double s = static_cast<double>(ts.shared.at(key));
    sum += lgam(as + s) - lgam(as);
  }
  for (uint64_t key : sorted_keys(ts.s0)) {
    double s0 = static_cast<double>(ts.s0.at(key));
    sum -= lgam(col_total + N * s0) - lgam(col_total);
  }
  // Nodes outside the tying group keep their untied terms.
  for (int n = 0; n < stats.layout().size(); ++n) {
    if (n == tied.root) continue;
    if (std::find(tied.children.begin(), tied.children.end(), n) != tied.children.end()) continue;
    sum += log_marginal_events_node(alpha, stats, n);
  }
  return sum;
}

double tied_transition_logprob(const TiedLayout& tied, const AlphaConstants& alpha,
                               const FamilyStats& stats, std::span<const int64_t> cell) {
  const double a0 = alpha.family_cell[tied.root];
  const double as = alpha.family_cell[tied.children.front()];
  const double root_total = a0 * static_cast<double>(tied.R);
  const double col_total = as * static_cast<double>(tied.I);
  const int64_t r = cell[tied.root];
  const int64_t s0 = lookup(stats.family(tied.root), static_cast<uint64_t>(r));
  const double N = static_cast<double>(tied.children.size());

  double sum = std::log(a0 + static_cast<double>(s0)) -
               std::log(root_total + static_cast<double>(stats.total()));
  const double denom_base = col_total + N * static_cast<double>(s0);
  for (size_t k = 0; k < tied.children.size(); ++k) {
    int64_t i = cell[tied.children[k]];
    int64_t prev_same = 0;
    for (size_t j = 0; j < k; ++j) {
      if (cell[tied.children[j]] == i) ++prev_same;
    }
    double sh = static_cast<double>(tied_shared_count(tied, stats, i, r) + prev_same);
    sum += std::log(as + sh) - std::log(denom_base + static_cast<double>(k));
  }
  for (int n = 0; n < stats.layout().size(); ++n) {
    if (n == tied.root) continue;
    if (std::find(tied.children.begin(), tied.children.end(), n) != tied.children.end()) continue;
    sum += transition_logprob_node(alpha, stats, cell, n);
  }
  return sum;
}

void tied_sample_transition(const TiedLayout& tied, const AlphaConstants& alpha,
                            const FamilyStats& stats, Rng& rng, std::span<int64_t> cell) {
  const ModelLayout& L = stats.layout();
  const double as = alpha.family_cell[tied.children.front()];
  const double col_total = as * static_cast<double>(tied.I);
  bool children_drawn = false;
  for (int n : L.topo()) {
    bool is_child =
        std::find(tied.children.begin(), tied.children.end(), n) != tied.children.end();
    if (!is_child) {
      // The root's draw is its ordinary urn step; only the shared children
      // need the sequential within-token treatment.
      sample_transition_node(alpha, stats, rng, cell, n);
      continue;
    }
    if (children_drawn) continue;
    children_drawn = true;
    const int64_t r = cell[tied.root];
    const int64_t s0 = lookup(stats.family(tied.root), static_cast<uint64_t>(r));
    const double N = static_cast<double>(tied.children.size());
    const double denom_base = col_total + N * static_cast<double>(s0);
    std::vector<int64_t> added(static_cast<size_t>(tied.I), 0);
    for (size_t k = 0; k < tied.children.size(); ++k) {
      double target = rng.uniform() * (denom_base + static_cast<double>(k));
      double acc = 0.0;
      int64_t chosen = tied.I - 1;
      for (int64_t i = 0; i < tied.I; ++i) {
        double sh = static_cast<double>(tied_shared_count(tied, stats, i, r) +
                                        added[static_cast<size_t>(i)]);
        acc += as + sh;
        if (target < acc) {
          chosen = i;
          break;
        }
      }
      cell[tied.children[k]] = chosen;
      ++added[static_cast<size_t>(chosen)];
    }
  }
}

}  // namespace bam
