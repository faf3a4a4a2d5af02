#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace bam {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Failures carry a coarse category so the CLI can map them to exit codes.
struct Error : std::runtime_error {
  enum class Code {
    parse,
    bad_model,
    bad_argument,
    infeasible,
    all_weights_zero,
    underflow,
  };
  Code code;
  Error(Code c, const std::string& msg) : std::runtime_error(msg), code(c) {}
};

// log Γ(x) for x > 0, thread-safe (std::lgamma may race on signgam).
double lgam(double x);

// Digamma ψ(x) for x > 0.
double digamma(double x);

// log Σ exp(x_i) with max shift; empty input and all -inf yield -inf.
double log_sum_exp(std::span<const double> xs);
double log_mean_exp(std::span<const double> xs);

// Streaming log-sum-exp that rescales the running sum whenever a new maximum
// arrives, so the whole value sequence never has to be stored.
class StreamingLogSumExp {
 public:
  void add(double x);
  double value() const;
  int64_t count() const { return count_; }

 private:
  double max_ = kNegInf;
  double sum_ = 0;  // Σ exp(x - max_)
  int64_t count_ = 0;
};

// Runs fn(begin, end) over a partition of [0, n) using at most `threads`
// workers. Callers own determinism: fn must write only to per-index slots.
void parallel_for(int64_t n, int threads, const std::function<void(int64_t, int64_t)>& fn);

}  // namespace bam
