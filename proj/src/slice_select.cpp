#include "ctseq/slice_select.hpp"

#include <algorithm>

#include "ctseq/error.hpp"

namespace ctseq {

SliceRange select_range(std::span<const std::int64_t> areas, int budget) {
  if (areas.empty()) throw Error(ErrorCode::Contract, "select_range: empty area profile");
  if (budget < 1) throw Error(ErrorCode::Contract, "select_range: budget must be >= 1");
  const int n = static_cast<int>(areas.size());
  const int len = std::min(budget, n);

  std::int64_t window = 0;
  for (int i = 0; i < len; ++i) window += areas[static_cast<std::size_t>(i)];
  SliceRange best{0, len - 1, window};
  for (int s = 1; s + len <= n; ++s) {
    window += areas[static_cast<std::size_t>(s + len - 1)] - areas[static_cast<std::size_t>(s - 1)];
    if (window > best.sum_area) best = {s, s + len - 1, window};
  }
  return best;
}

int default_budget(int n) {
  if (n < 1) throw Error(ErrorCode::Contract, "default_budget: slice count must be >= 1");
  return std::max(1, (n + 1) / 2);
}

}  // namespace ctseq
