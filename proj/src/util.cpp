#include "bam/util.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include <boost/math/special_functions/digamma.hpp>

namespace bam {

double lgam(double x) {
#if defined(__GLIBC__)
  int sign = 0;
  return ::lgamma_r(x, &sign);
#else
  return std::lgamma(x);
#endif
}

double digamma(double x) { return boost::math::digamma(x); }

double log_sum_exp(std::span<const double> xs) {
  double m = kNegInf;
  for (double x : xs) m = std::max(m, x);
  if (!std::isfinite(m)) return m;  // empty, all -inf, or a nan/inf poisoned max
  double s = 0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

double log_mean_exp(std::span<const double> xs) {
  if (xs.empty()) return kNegInf;
  return log_sum_exp(xs) - std::log(static_cast<double>(xs.size()));
}

void StreamingLogSumExp::add(double x) {
  ++count_;
  if (x == kNegInf) return;
  if (x <= max_) {
    sum_ += std::exp(x - max_);
  } else {
    sum_ = sum_ * std::exp(max_ - x) + 1.0;
    max_ = x;
  }
}

double StreamingLogSumExp::value() const {
  if (max_ == kNegInf) return kNegInf;
  return max_ + std::log(sum_);
}

void parallel_for(int64_t n, int threads, const std::function<void(int64_t, int64_t)>& fn) {
  if (n <= 0) return;
  int workers = std::max(1, threads);
  workers = static_cast<int>(std::min<int64_t>(workers, n));
  if (workers == 1) {
    fn(0, n);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  std::exception_ptr first_error;
  std::mutex error_mutex;
  int64_t chunk = (n + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    int64_t begin = w * chunk;
    int64_t end = std::min<int64_t>(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&, begin, end] {
      try {
        fn(begin, end);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace bam
