#include "smsat/split.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace smsat {

Split stratified_split(const std::vector<ClassLabel>& labels, double frac, std::uint64_t seed) {
  if (!(frac >= 0.0 && frac < 1.0)) throw Error("stratified_split: fraction must lie in [0, 1), got " + std::to_string(frac));
  Split s;
  const CounterRng root(seed);
  for (auto l : kAllLabels) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == l) idx.push_back(i);
    CounterRng rng = root.derive(static_cast<std::uint64_t>(label_index(l)));
    shuffle(idx, rng);
    auto n_out = static_cast<std::size_t>(std::llround(frac * static_cast<double>(idx.size())));
    if (frac > 0.0 && idx.size() >= 2) n_out = std::clamp<std::size_t>(n_out, 1, idx.size() - 1);
    s.held_out.insert(s.held_out.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_out));
    s.train.insert(s.train.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_out), idx.end());
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.held_out.begin(), s.held_out.end());
  return s;
}

}  // namespace smsat
