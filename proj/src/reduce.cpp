#include "limcur/reduce.hpp"

#include <algorithm>
#include <atomic>
#include <thread>

namespace limcur {

namespace {
int g_workers = 1;
constexpr std::size_t kBlock = 4096;
}  // namespace

void set_worker_count(int n) { g_workers = std::max(1, n); }
int worker_count() { return g_workers; }

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  if (n == 0) return;
  int nw = g_workers;
  if (nw <= 1 || n < 2 * kBlock) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  auto work = [&]() {
    for (;;) {
      std::size_t b = next.fetch_add(1);
      std::size_t lo = b * kBlock;
      if (lo >= n) return;
      std::size_t hi = std::min(n, lo + kBlock);
      for (std::size_t i = lo; i < hi; ++i) fn(i);
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(nw - 1);
  for (int t = 1; t < nw; ++t) pool.emplace_back(work);
  work();
  for (auto& th : pool) th.join();
}

namespace {

// Pairwise tree over block sums; the tree shape depends only on the block
// count, never on the worker count.
double combine(std::vector<double>& sums) {
  std::size_t m = sums.size();
  if (m == 0) return 0.0;
  while (m > 1) {
    std::size_t half = (m + 1) / 2;
    for (std::size_t i = 0; i + half < m; ++i) sums[i] += sums[i + half];
    m = half;
  }
  return sums[0];
}

}  // namespace

double det_sum(std::size_t n, const std::function<double(std::size_t)>& term) {
  if (n == 0) return 0.0;
  std::size_t nblocks = (n + kBlock - 1) / kBlock;
  std::vector<double> sums(nblocks, 0.0);
  parallel_for(nblocks, [&](std::size_t b) {
    std::size_t lo = b * kBlock, hi = std::min(n, lo + kBlock);
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) s += term(i);
    sums[b] = s;
  });
  return combine(sums);
}

double det_sum(const std::vector<double>& terms) {
  return det_sum(terms.size(), [&](std::size_t i) { return terms[i]; });
}

}  // namespace limcur
