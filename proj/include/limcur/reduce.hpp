// Deterministic parallel map/reduce helpers. Sums are computed over fixed
// 4096-element blocks combined in a fixed pairwise tree, so results are
// bit-identical regardless of the worker count.
#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace limcur {

// Process-wide worker count (1 = serial). Set once from the CLI.
void set_worker_count(int n);
int worker_count();

// Runs fn(i) for i in [0, n). Work is split into contiguous chunks; fn must
// only write to locations owned by index i.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

// Deterministic sum of term(i) for i in [0, n): fixed 4096-wide blocks,
// serial within a block, pairwise tree across blocks.
double det_sum(std::size_t n, const std::function<double(std::size_t)>& term);

// Same tree applied to a materialised vector.
double det_sum(const std::vector<double>& terms);

}  // namespace limcur
