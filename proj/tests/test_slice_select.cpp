#include <gtest/gtest.h>

#include <random>

#include "ctseq/lung_seg.hpp"
#include "ctseq/phantom.hpp"
#include "ctseq/slice_select.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace ctseq {
namespace {

TEST(SelectRange, UniformTiesTakeFirstWindow) {
  const std::vector<std::int64_t> areas(10, 7);
  EXPECT_EQ(select_range(areas, 5), (SliceRange{0, 4, 35}));
}

TEST(SelectRange, UniquePeakPair) {
  const std::vector<std::int64_t> areas{0, 1, 5, 5, 1, 0};
  EXPECT_EQ(select_range(areas, 2), (SliceRange{2, 3, 10}));
}

TEST(SelectRange, BudgetLargerThanVolumeTakesEverything) {
  const std::vector<std::int64_t> areas{3, 0, 9};
  EXPECT_EQ(select_range(areas, 8), (SliceRange{0, 2, 12}));
}

TEST(SelectRange, BudgetOneIsArgmax) {
  const std::vector<std::int64_t> areas{4, 9, 2, 9, 1};
  EXPECT_EQ(select_range(areas, 1), (SliceRange{1, 1, 9}));
}

TEST(SelectRange, Errors) {
  EXPECT_CTSEQ_ERROR(select_range(std::vector<std::int64_t>{}, 3), ErrorCode::Contract);
  EXPECT_CTSEQ_ERROR(select_range(std::vector<std::int64_t>{1, 2}, 0), ErrorCode::Contract);
}

TEST(SelectRange, MatchesExhaustiveSearch) {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> len(1, 64);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = len(rng);
    // Small value ranges give plenty of ties.
    const int hi = trial % 3 == 0 ? 3 : 5000;
    std::uniform_int_distribution<int> val(0, hi);
    std::vector<std::int64_t> areas(static_cast<std::size_t>(n));
    for (auto& a : areas) a = val(rng);
    const int budget = std::uniform_int_distribution<int>(1, n)(rng);
    const SliceRange got = select_range(areas, budget);
    ASSERT_EQ(got, oracle::brute_force_window(areas, budget)) << "trial " << trial;
    ASSERT_EQ(got.length(), std::min(budget, n));
  }
}

TEST(SelectRange, ShiftInvariantWhenUnique) {
  std::mt19937_64 rng(5);
  int checked = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const int n = std::uniform_int_distribution<int>(2, 40)(rng);
    const int budget = std::uniform_int_distribution<int>(1, n)(rng);
    std::vector<std::int64_t> areas(static_cast<std::size_t>(n));
    for (auto& a : areas) a = std::uniform_int_distribution<int>(0, 1000)(rng);
    const SliceRange base = select_range(areas, budget);
    int optima = 0;
    for (int s = 0; s + base.length() <= n; ++s) {
      std::int64_t sum = 0;
      for (int i = s; i < s + base.length(); ++i) sum += areas[static_cast<std::size_t>(i)];
      optima += sum == base.sum_area;
    }
    if (optima != 1) continue;
    ++checked;
    const std::int64_t c = std::uniform_int_distribution<int>(0, 500)(rng);
    auto shifted = areas;
    for (auto& a : shifted) a += c;
    const SliceRange moved = select_range(shifted, budget);
    EXPECT_EQ(moved.s, base.s);
    EXPECT_EQ(moved.e, base.e);
    EXPECT_EQ(moved.sum_area, base.sum_area + c * std::min(budget, n));
  }
  EXPECT_GT(checked, 250);
}

TEST(SelectRange, NoiselessPhantomWindowContainsCenter) {
  for (int label : {0, 1}) {
    for (int n : {24, 33, 48}) {
      PhantomSpec spec;
      spec.noise_sigma = 0.0;
      spec.n_slices = n;
      spec.label = label;
      spec.seed = static_cast<std::uint64_t>(n + label);
      const Phantom ph = generate_phantom(spec);
      const auto profile = slice_area_profile(ph.volume, SegConfig{});
      const SliceRange r = select_range(profile, default_budget(n));
      const int c = phantom_center_slice(n);
      EXPECT_LE(r.s, c);
      EXPECT_GE(r.e, c);
    }
  }
}

TEST(DefaultBudget, HalfRoundedUp) {
  EXPECT_EQ(default_budget(10), 5);
  EXPECT_EQ(default_budget(1), 1);
  EXPECT_EQ(default_budget(7), 4);
  EXPECT_CTSEQ_ERROR(default_budget(0), ErrorCode::Contract);
}

}  // namespace
}  // namespace ctseq
