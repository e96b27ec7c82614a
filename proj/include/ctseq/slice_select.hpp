#pragma once

#include <cstdint>
#include <span>

namespace ctseq {

// Inclusive 0-based slice window.
struct SliceRange {
  int s = 0;
  int e = 0;
  std::int64_t sum_area = 0;

  int length() const { return e - s + 1; }
  friend bool operator==(const SliceRange&, const SliceRange&) = default;
};

/// Window of exactly min(budget, n) slices with the largest accumulated area;
/// ties go to the smallest start. `budget` counts slices.
SliceRange select_range(std::span<const std::int64_t> areas, int budget);

/// Half of the slices, rounded up.
int default_budget(int n);

}  // namespace ctseq
