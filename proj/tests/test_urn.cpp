#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "doctest.h"

#include "bam/kernel.hpp"
#include "bam/urn.hpp"
#include "oracle.hpp"

using namespace bam;

namespace {

ModelSpec chain3() {
  ModelSpec s;
  s.nodes = {{"j", 4}, {"k", 2}, {"i", 3}};
  s.parents = {{}, {0}, {1}};
  s.visible = {2, 0};
  return s;
}

ModelSpec fork3() {
  // k -> j, k -> i: the common-cause orientation of the same skeleton.
  ModelSpec s;
  s.nodes = {{"j", 4}, {"k", 2}, {"i", 3}};
  s.parents = {{1}, {}, {1}};
  s.visible = {2, 0};
  return s;
}

ModelSpec vee() {
  // j -> s <- i: an immorality, for checking that scores differ from chains.
  ModelSpec s;
  s.nodes = {{"j", 2}, {"s", 2}, {"i", 2}};
  s.parents = {{}, {0, 2}, {}};
  s.visible = {0, 2};
  return s;
}

// Random full cell via independent coordinate draws.
std::vector<int64_t> random_cell(const ModelLayout& layout, Rng& rng) {
  std::vector<int64_t> cell(static_cast<size_t>(layout.size()));
  for (int n = 0; n < layout.size(); ++n)
    cell[static_cast<size_t>(n)] =
        static_cast<int64_t>(rng.below(static_cast<uint64_t>(layout.spec().nodes[n].card)));
  return cell;
}

struct RandomState {
  FamilyStats stats;
  oracle::DenseS dense;
  std::vector<std::vector<int64_t>> tokens;  // one cell per token
};

RandomState random_state(const Kernel& kernel, int64_t tokens, Rng& rng) {
  std::vector<int64_t> cards;
  for (const Node& n : kernel.layout().spec().nodes) cards.push_back(n.card);
  RandomState out{kernel.empty_stats(/*track_cells=*/true), oracle::DenseS(cards), {}};
  for (int64_t t = 0; t < tokens; ++t) {
    auto cell = random_cell(kernel.layout(), rng);
    out.stats.add(cell, 1);
    out.dense.at(cell) += 1;
    out.tokens.push_back(std::move(cell));
  }
  return out;
}

}  // namespace

TEST_CASE("negative-binomial total probabilities normalize and match the formula") {
  const PriorSpec prior{1.5, 0.7};
  Kernel kernel(ModelLayout::create(chain3()), prior);

  long double mass = 0.0L;
  for (int64_t T = 0; T < 600; ++T) mass += std::exp(static_cast<long double>(kernel.log_prob_total(T)));
  CHECK(static_cast<double>(mass) == doctest::Approx(1.0).epsilon(1e-10));

  const double direct = oracle::lg(1.5 + 3.0) - oracle::lg(1.5) - oracle::lg(4.0) +
                        1.5 * std::log(0.7 / 1.7) - 3.0 * std::log(1.7);
  CHECK(kernel.log_prob_total(3) == doctest::Approx(direct).epsilon(1e-13));
}

TEST_CASE("sparse marginal scores match the dense oracle on random states") {
  Rng rng = Rng::keyed(11, 0, 0, 0);
  for (const ModelSpec& base : {chain3(), vee()}) {
    auto layout = ModelLayout::create(base);
    const PriorSpec prior{0.8, 1.3};
    const ModelSpec& spec = layout->spec();
    for (const AlphaConstants& alpha : {bdeu_alpha(spec, prior), flat_cell_alpha(spec, prior)}) {
      Kernel kernel(layout, prior, alpha);
      for (int rep = 0; rep < 6; ++rep) {
        const RandomState st = random_state(kernel, 3 + static_cast<int64_t>(rng.below(8)), rng);
        const double expect = oracle::log_marginal_allocation(spec, alpha, prior, st.dense);
        CHECK(kernel.log_marginal_allocation(st.stats) == doctest::Approx(expect).epsilon(1e-12));

        // π(S) = Pr(T) · π_{S₊}(S) must hold exactly.
        const double split = kernel.log_prob_total(st.stats.total()) +
                             kernel.log_marginal_given_total(st.stats);
        CHECK(kernel.log_marginal_allocation(st.stats) ==
              doctest::Approx(split).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("one-token transitions normalize to one") {
  Rng rng = Rng::keyed(12, 0, 0, 0);
  for (const ModelSpec& base : {chain3(), vee()}) {
    Kernel kernel(ModelLayout::create(base), PriorSpec{0.6, 1.0});
    const RandomState st = random_state(kernel, 5, rng);
    const auto dims = kernel.layout().full_dims();
    std::vector<int64_t> cell(dims.size(), 0);
    long double mass = 0.0L;
    int64_t cells = 1;
    for (int64_t d : dims) cells *= d;
    for (int64_t flat = 0; flat < cells; ++flat) {
      int64_t rem = flat;
      for (size_t d = 0; d < dims.size(); ++d) {
        cell[d] = rem % dims[d];
        rem /= dims[d];
      }
      mass += std::exp(static_cast<long double>(kernel.transition_logprob(st.stats, cell)));
    }
    CHECK(static_cast<double>(mass) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("transition probability equals the dense sequence-probability ratio") {
  Rng rng = Rng::keyed(13, 0, 0, 0);
  auto layout = ModelLayout::create(chain3());
  const PriorSpec prior{1.0, 1.0};
  const AlphaConstants alpha = bdeu_alpha(layout->spec(), prior);
  Kernel kernel(layout, prior, alpha);
  RandomState st = random_state(kernel, 6, rng);
  for (int rep = 0; rep < 20; ++rep) {
    const auto cell = random_cell(*layout, rng);
    const double before = oracle::log_events(layout->spec(), alpha, st.dense);
    st.dense.at(cell) += 1;
    const double after = oracle::log_events(layout->spec(), alpha, st.dense);
    st.dense.at(cell) -= 1;
    CHECK(kernel.transition_logprob(st.stats, cell) ==
          doctest::Approx(after - before).epsilon(1e-12));
  }
}

TEST_CASE("sampled transitions follow the transition distribution") {
  Rng rng = Rng::keyed(14, 0, 0, 0);
  Kernel kernel(ModelLayout::create(chain3()), PriorSpec{2.0, 1.0});
  RandomState st = random_state(kernel, 4, rng);

  std::map<std::vector<int64_t>, int64_t> hits;
  const int draws = 60000;
  std::vector<int64_t> cell(3);
  for (int d = 0; d < draws; ++d) {
    kernel.sample_transition(st.stats, rng, cell);
    hits[cell] += 1;
  }
  for (const auto& [c, n] : hits) {
    const double p = std::exp(kernel.transition_logprob(st.stats, c));
    const double freq = static_cast<double>(n) / draws;
    const double sigma = std::sqrt(p * (1.0 - p) / draws);
    CHECK(std::abs(freq - p) < 5.0 * sigma + 1e-9);
  }
}

TEST_CASE("trajectory probability is exchangeable and telescopes to the event score") {
  Rng rng = Rng::keyed(15, 0, 0, 0);
  Kernel kernel(ModelLayout::create(chain3()), PriorSpec{0.9, 1.0});
  const RandomState st = random_state(kernel, 5, rng);
  const double events = kernel.log_marginal_events(st.stats);

  std::vector<std::vector<int64_t>> order = st.tokens;
  std::sort(order.begin(), order.end());
  int permutations = 0;
  do {
    FamilyStats walk = kernel.empty_stats();
    double acc = 0.0;
    for (const auto& cell : order) {
      acc += kernel.transition_logprob(walk, cell);
      walk.add(cell, 1);
    }
    CHECK(acc == doctest::Approx(events).epsilon(1e-12));
    ++permutations;
  } while (std::next_permutation(order.begin(), order.end()) && permutations < 130);
  CHECK(permutations >= 1);
}

TEST_CASE("forward and uniform-removal reverse kernels are in detailed balance") {
  // Over every 2-token state S' and removal cell c with S'(c) > 0:
  //   log π₁(S) + log f(S'|S) = log π₂(S') + log r(S|S').
  Kernel kernel(ModelLayout::create(chain3()), PriorSpec{1.1, 1.0});
  const auto dims = kernel.layout().full_dims();
  int64_t cells = 1;
  for (int64_t d : dims) cells *= d;
  auto cell_of = [&](int64_t flat) {
    std::vector<int64_t> c(dims.size());
    for (size_t d = 0; d < dims.size(); ++d) {
      c[d] = flat % dims[d];
      flat /= dims[d];
    }
    return c;
  };
  for (int64_t u = 0; u < cells; ++u) {
    for (int64_t v = u; v < cells; ++v) {
      FamilyStats two = kernel.empty_stats(/*track_cells=*/true);
      two.add(cell_of(u), 1);
      two.add(cell_of(v), 1);
      const double pi2 = kernel.log_marginal_given_total(two);
      for (int64_t c : {u, v}) {
        FamilyStats one = kernel.empty_stats(/*track_cells=*/true);
        one.add(cell_of(c == u ? v : u), 1);
        const double forward = kernel.transition_logprob(one, cell_of(c));
        const double reverse = reverse_transition_logprob(two, cell_of(c));
        const double pi1 = kernel.log_marginal_given_total(one);
        CHECK(pi1 + forward == doctest::Approx(pi2 + reverse).epsilon(1e-12));
      }
    }
  }

  FamilyStats empty = kernel.empty_stats(/*track_cells=*/true);
  empty.add(cell_of(0), 1);
  CHECK_THROWS_AS(reverse_transition_logprob(empty, cell_of(1)), Error);
}

TEST_CASE("Markov-equivalent orientations score allocations identically") {
  const ModelSpec a = chain3();
  const ModelSpec b = fork3();
  const ModelSpec c = markov_equivalent_reorder(a, {2, 1, 0});
  const PriorSpec prior{0.7, 1.0};
  Kernel ka(ModelLayout::create(a), prior);
  Kernel kb(ModelLayout::create(b), prior);
  Kernel kc(ModelLayout::create(c), prior);

  Rng rng = Rng::keyed(16, 0, 0, 0);
  for (int rep = 0; rep < 10; ++rep) {
    FamilyStats sa = ka.empty_stats(), sb = kb.empty_stats(), sc = kc.empty_stats();
    double lf = 0.0;
    std::map<std::vector<int64_t>, int64_t> cells;
    for (int t = 0; t < 6; ++t) {
      const auto cell = random_cell(ka.layout(), rng);
      sa.add(cell, 1);
      sb.add(cell, 1);
      sc.add(cell, 1);
      cells[cell] += 1;
    }
    for (const auto& [cell, count] : cells) lf += oracle::lg(static_cast<double>(count) + 1.0);
    const double va = ka.log_marginal_allocation(sa, lf);
    CHECK(va == doctest::Approx(kb.log_marginal_allocation(sb, lf)).epsilon(1e-12));
    CHECK(va == doctest::Approx(kc.log_marginal_allocation(sc, lf)).epsilon(1e-12));
  }
}

TEST_CASE("effective parameter count follows occupied configurations") {
  Kernel kernel(ModelLayout::create(chain3()), PriorSpec{1.0, 1.0});
  FamilyStats stats = kernel.empty_stats();
  CHECK(effective_parameters(stats) == 0);

  stats.add(std::vector<int64_t>{0, 1, 2}, 2);
  stats.add(std::vector<int64_t>{3, 0, 0}, 1);
  // j: {0,3} vs root 1 → +1; k: {(0,1),(3,0)} vs {0,3} → 0; i: 2 vs 2 → 0.
  CHECK(effective_parameters(stats) == 1);

  stats.add(std::vector<int64_t>{0, 0, 2}, 1);
  // j unchanged; k gains (0,0) → +1; i: families {(1,2),(0,0),(0,2)} vs parents {1,0} → +1.
  CHECK(effective_parameters(stats) == 3);
}

TEST_CASE("posterior factors carry the conjugate updates") {
  auto layout = ModelLayout::create(chain3());
  const PriorSpec prior{2.0, 3.0};
  Kernel kernel(layout, prior);
  FamilyStats stats = kernel.empty_stats();
  stats.add(std::vector<int64_t>{1, 0, 2}, 4);

  const PosteriorFactors post = posterior_factors(kernel.alpha(), prior, stats);
  CHECK(post.lambda_shape == doctest::Approx(6.0));
  CHECK(post.lambda_rate == doctest::Approx(4.0));
  const uint64_t jkey = layout->family_key(0, std::vector<int64_t>{1, 0, 2});
  CHECK(post.dirichlet[0].at(jkey) == doctest::Approx(2.0 / 4 + 4));
}
