#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"

#include "bam/rng.hpp"
#include "bam/util.hpp"

using namespace bam;

TEST_CASE("lgam matches std::lgamma on positive arguments") {
  for (double x : {1e-8, 0.25, 0.5, 1.0, 2.0, 10.5, 171.0, 1e6})
    CHECK(lgam(x) == doctest::Approx(std::lgamma(x)).epsilon(1e-14));
}

TEST_CASE("digamma satisfies the recurrence and known values") {
  // ψ(1) = −γ; ψ(x+1) = ψ(x) + 1/x.
  CHECK(digamma(1.0) == doctest::Approx(-0.5772156649015329).epsilon(1e-12));
  for (double x : {0.1, 0.7, 3.0, 25.0})
    CHECK(digamma(x + 1.0) == doctest::Approx(digamma(x) + 1.0 / x).epsilon(1e-12));
}

TEST_CASE("log_sum_exp handles shifts, empties, and -inf") {
  std::vector<double> xs{-1000.0, -1001.0, -1002.0};
  const double expect = -1000.0 + std::log(1.0 + std::exp(-1.0) + std::exp(-2.0));
  CHECK(log_sum_exp(xs) == doctest::Approx(expect).epsilon(1e-14));
  CHECK(log_mean_exp(xs) == doctest::Approx(expect - std::log(3.0)).epsilon(1e-14));

  CHECK(log_sum_exp({}) == kNegInf);
  std::vector<double> inf{kNegInf, kNegInf};
  CHECK(log_sum_exp(inf) == kNegInf);

  std::vector<double> mixed{kNegInf, 2.0};
  CHECK(log_sum_exp(mixed) == doctest::Approx(2.0));
}

TEST_CASE("streaming log-sum-exp equals the batch version in any order") {
  std::vector<double> xs{3.0, -2.0, 700.0, 699.5, -800.0, 0.0};
  StreamingLogSumExp acc;
  for (double x : xs) acc.add(x);
  CHECK(acc.count() == 6);
  CHECK(acc.value() == doctest::Approx(log_sum_exp(xs)).epsilon(1e-14));

  StreamingLogSumExp rev;
  for (auto it = xs.rbegin(); it != xs.rend(); ++it) rev.add(*it);
  CHECK(rev.value() == doctest::Approx(acc.value()).epsilon(1e-14));
}

TEST_CASE("parallel_for partitions exactly and propagates exceptions") {
  std::vector<int> hit(1000, 0);
  parallel_for(1000, 4, [&](int64_t lo, int64_t hi) {
    for (int64_t i = lo; i < hi; ++i) hit[static_cast<size_t>(i)] += 1;
  });
  CHECK(std::accumulate(hit.begin(), hit.end(), 0) == 1000);
  CHECK(*std::min_element(hit.begin(), hit.end()) == 1);
  CHECK(*std::max_element(hit.begin(), hit.end()) == 1);

  CHECK_THROWS_AS(parallel_for(8, 3,
                               [](int64_t lo, int64_t) {
                                 if (lo == 0) throw Error(Error::Code::bad_argument, "boom");
                               }),
                  Error);
}

TEST_CASE("keyed rng streams are deterministic and key-sensitive") {
  Rng a = Rng::keyed(42, 1, 2, 3);
  Rng b = Rng::keyed(42, 1, 2, 3);
  for (int i = 0; i < 8; ++i) CHECK(a.next() == b.next());

  Rng c = Rng::keyed(42, 1, 2, 4);
  CHECK(Rng::keyed(42, 1, 2, 3).next() != c.next());
  CHECK(Rng::keyed(43, 1, 2, 3).next() != Rng::keyed(42, 1, 2, 3).next());
}

TEST_CASE("uniform draws live in [0,1) and below() respects its bound") {
  Rng rng = Rng::keyed(7, 0, 0, 0);
  double lo = 1.0, hi = 0.0, sum = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    lo = std::min(lo, u);
    hi = std::max(hi, u);
    sum += u;
  }
  CHECK(lo >= 0.0);
  CHECK(hi < 1.0);
  CHECK(sum / n == doctest::Approx(0.5).epsilon(0.02));

  for (int i = 0; i < 1000; ++i) CHECK(rng.below(7) < 7);
}
