#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace fracbubbles {

/// Worker count used by parallel loops. The FRACBUBBLES_THREADS environment
/// variable, when set, wins over the value passed here.
void set_thread_count(int n);
int thread_count();

/// Neumaier-compensated accumulator.
struct CompensatedSum {
  double sum = 0.0;
  double carry = 0.0;

  void add(double v) {
    const double t = sum + v;
    if (std::abs(sum) >= std::abs(v))
      carry += (sum - t) + v;
    else
      carry += (v - t) + sum;
    sum = t;
  }
  double value() const { return sum + carry; }
};

/// Runs body(begin, end) over fixed-size chunks of [0, n). Chunk boundaries do
/// not depend on the worker count.
void parallel_chunks(std::size_t n, std::size_t chunk, const std::function<void(std::size_t, std::size_t)>& body);

/// Sum of term(i) over [0, n). Chunks are summed with compensation and then
/// combined in index order, so the result is identical for any thread count.
double parallel_sum(std::size_t n, const std::function<double(std::size_t)>& term, std::size_t chunk = 4096);

/// Elementwise sums of a width-`width` vector term; same determinism as parallel_sum.
std::vector<double> parallel_sum_vec(std::size_t n, std::size_t width,
                                     const std::function<void(std::size_t, std::span<double>)>& term,
                                     std::size_t chunk = 4096);

}  // namespace fracbubbles
