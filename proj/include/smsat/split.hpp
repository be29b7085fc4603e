#pragma once

#include "smsat/common.hpp"
#include "smsat/rng.hpp"

#include <cstdint>
#include <vector>

namespace smsat {

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> held_out;
};

/// Per-class shuffle, then round(frac * n_c) items of each class (at least one
/// when the class has two or more) go to the held-out side. Both index lists
/// come back sorted.
Split stratified_split(const std::vector<ClassLabel>& labels, double frac, std::uint64_t seed);

/// Fisher-Yates driven by `rng`.
template <typename T>
void shuffle(std::vector<T>& v, CounterRng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

}  // namespace smsat
