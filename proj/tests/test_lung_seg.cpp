#include "ctseq/lung_seg.hpp"
#include "ctseq/phantom.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace ctseq {
namespace {

BinaryMask mask_from(const std::vector<std::string>& rows) {
  BinaryMask m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t y = 0; y < rows.size(); ++y) {
    for (std::size_t x = 0; x < rows[y].size(); ++x) {
      m(static_cast<Eigen::Index>(y), static_cast<Eigen::Index>(x)) = rows[y][x] == '1';
    }
  }
  return m;
}

BinaryMask random_mask(int rows, int cols, double density, std::mt19937_64& rng) {
  std::bernoulli_distribution on(density);
  BinaryMask m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = on(rng);
  return m;
}

TEST(Crop, AllDarkFallsBackToFullImage) {
  const CroppedSlice c = crop_slice(SliceImage::Zero(8, 8), SegConfig{});
  EXPECT_EQ(c.box, (CropBox{0, 0, 7, 7}));
  EXPECT_EQ(c.image.rows(), 8);
}

TEST(Crop, SinglePixelGrowsByMargin) {
  SliceImage img = SliceImage::Zero(8, 8);
  img(4, 3) = 255;  // x = 3, y = 4
  const CroppedSlice c = crop_slice(img, SegConfig{});
  EXPECT_EQ(c.box, (CropBox{1, 2, 5, 6}));
  EXPECT_EQ(c.image.rows(), 5);
  EXPECT_EQ(c.image.cols(), 5);
  EXPECT_EQ(c.image(2, 2), 255);
}

TEST(Crop, ClampsAtTheCorner) {
  SliceImage img = SliceImage::Zero(8, 8);
  img(0, 0) = 255;
  EXPECT_EQ(crop_slice(img, SegConfig{}).box, (CropBox{0, 0, 2, 2}));
}

TEST(Crop, ThresholdIsStrict) {
  SliceImage img = SliceImage::Constant(8, 8, 10);
  img(5, 5) = 11;
  EXPECT_EQ(crop_slice(img, SegConfig{}).box, (CropBox{3, 3, 7, 7}));
}

TEST(Median, ConstantSliceUnchanged) {
  const SliceImage img = SliceImage::Constant(9, 7, 77);
  EXPECT_TRUE((median_filter(img, 5) == img).all());
}

TEST(Median, RemovesSingleOutlier) {
  SliceImage img = SliceImage::Constant(3, 3, 10);
  img(1, 1) = 255;
  EXPECT_EQ(median_filter(img, 3)(1, 1), 10);
}

TEST(Median, KernelOneIsIdentity) {
  std::mt19937_64 rng(1);
  const SliceImage img = testing::random_slice(6, 11, rng);
  EXPECT_TRUE((median_filter(img, 1) == img).all());
}

TEST(Median, MatchesSortingOracle) {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 60; ++trial) {
    const int rows = 1 + static_cast<int>(rng() % 20);
    const int cols = 1 + static_cast<int>(rng() % 20);
    const int kernel = 1 + 2 * static_cast<int>(rng() % 4);
    const int hi = trial % 2 ? 255 : 3;  // low range forces many equal values
    const SliceImage img = testing::random_slice(rows, cols, rng, 0, hi);
    EXPECT_TRUE((median_filter(img, kernel) == oracle::sort_median(img, kernel)).all())
        << rows << "x" << cols << " kernel " << kernel;
  }
}

TEST(Median, StaysWithinInputRange) {
  std::mt19937_64 rng(4);
  const SliceImage img = testing::random_slice(16, 16, rng, 40, 90);
  const SliceImage out = filter_slice(img, SegConfig{});
  EXPECT_GE(out.minCoeff(), img.minCoeff());
  EXPECT_LE(out.maxCoeff(), img.maxCoeff());
}

TEST(Median, EvenKernelRejected) {
  EXPECT_CTSEQ_ERROR(median_filter(SliceImage::Zero(3, 3), 4), ErrorCode::Config);
}

TEST(Otsu, ConstantImage) { EXPECT_EQ(otsu_threshold(SliceImage::Constant(5, 5, 77)), 77); }

TEST(Otsu, TwoLevelImageTakesSmallestSeparatingT) {
  SliceImage img(4, 4);
  img.topRows(2).setConstant(0);
  img.bottomRows(2).setConstant(255);
  EXPECT_EQ(otsu_threshold(img), 1);
  EXPECT_EQ(otsu_threshold(img), oracle::otsu_sweep(img));
}

TEST(Otsu, MatchesExhaustiveSweep) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 80; ++trial) {
    const int hi = trial % 3 == 0 ? 7 : 255;
    const SliceImage img = testing::random_slice(32, 32, rng, 0, hi);
    EXPECT_EQ(otsu_threshold(img), oracle::otsu_sweep(img)) << "trial " << trial;
  }
}

TEST(Otsu, RejectsOversizedSlices) {
  EXPECT_CTSEQ_ERROR(otsu_threshold(SliceImage::Zero(513, 512)), ErrorCode::Contract);
}

TEST(Segment, InclusiveThreshold) {
  SliceImage img(1, 3);
  img << 5, 10, 200;
  const BinaryMask m = segment(img, 10);
  EXPECT_FALSE(m(0, 0));
  EXPECT_TRUE(m(0, 1));
  EXPECT_TRUE(m(0, 2));
  EXPECT_TRUE(segment(img, 0).all());
  EXPECT_FALSE(segment(SliceImage::Constant(3, 3, 254), 255).any());
}

TEST(Segment, MonotoneInThreshold) {
  std::mt19937_64 rng(2);
  const SliceImage img = testing::random_slice(16, 16, rng);
  for (int t = 0; t < 255; ++t) {
    const BinaryMask lo = segment(img, t), hi = segment(img, t + 1);
    EXPECT_FALSE((hi && !lo).any()) << t;
  }
}

TEST(FillHoles, RingCenterFilled) {
  const BinaryMask ring = mask_from({"00000", "01110", "01010", "01110", "00000"});
  const BinaryMask filled = fill_holes(ring);
  EXPECT_TRUE(filled(2, 2));
  EXPECT_EQ(lung_area(ring, filled), 1);
}

TEST(FillHoles, CorridorToBorderKeepsHoleOpen) {
  BinaryMask m = mask_from({"11011", "10001", "10001", "11111", "00000"});
  EXPECT_TRUE((fill_holes(m) == m).all());
  EXPECT_EQ(lung_area(m, fill_holes(m)), 0);
  m(0, 2) = true;  // close the corridor
  EXPECT_EQ(lung_area(m, fill_holes(m)), 6);
}

TEST(FillHoles, MatchesFloodFillOracleAndInvariants) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 300; ++trial) {
    const int rows = 1 + static_cast<int>(rng() % 16);
    const int cols = 1 + static_cast<int>(rng() % 16);
    const BinaryMask m = random_mask(rows, cols, 0.3 + 0.4 * (trial % 5) / 4.0, rng);
    const BinaryMask filled = fill_holes(m);
    ASSERT_TRUE((filled == oracle::flood_fill_holes(m)).all()) << "trial " << trial;
    EXPECT_FALSE((m && !filled).any());
    EXPECT_TRUE((fill_holes(filled) == filled).all());
    EXPECT_GE(lung_area(m, filled), 0);
  }
}

TEST(LungArea, ZeroWithoutHoles) {
  const BinaryMask m = mask_from({"110", "011", "000"});
  EXPECT_EQ(lung_area(m, fill_holes(m)), 0);
  EXPECT_EQ(lung_area(m, m), 0);
}

TEST(LungArea, ContractErrors) {
  const BinaryMask m = mask_from({"11", "11"});
  EXPECT_CTSEQ_ERROR(lung_area(m, BinaryMask::Constant(3, 2, true)), ErrorCode::Dimension);
  EXPECT_CTSEQ_ERROR(lung_area(m, BinaryMask::Constant(2, 2, false)), ErrorCode::Contract);
}

TEST(Profile, AllZeroVolume) {
  CtVolume vol{"z", std::vector<SliceImage>(5, SliceImage::Zero(20, 20)), std::nullopt};
  for (auto a : slice_area_profile(vol, SegConfig{})) EXPECT_EQ(a, 0);
}

TEST(Profile, NoiselessPhantomMatchesGroundTruthExactly) {
  for (int label : {0, 1}) {
    PhantomSpec spec;
    spec.noise_sigma = 0.0;
    spec.label = label;
    spec.seed = 31;
    const Phantom ph = generate_phantom(spec);
    const auto profile = slice_area_profile(ph.volume, SegConfig{});
    for (int i = 0; i < ph.volume.size(); ++i) {
      EXPECT_EQ(profile[static_cast<std::size_t>(i)], ph.lung_masks[static_cast<std::size_t>(i)].count())
          << "label " << label << " slice " << i;
    }
    // Lesions eat into the lung, so only healthy volumes peak at the center.
    if (label == 0) {
      const auto peak = std::max_element(profile.begin(), profile.end()) - profile.begin();
      EXPECT_EQ(peak, phantom_center_slice(ph.volume.size()));
    }
  }
}

TEST(Profile, FixedThresholdOnCenterSlice) {
  PhantomSpec spec;
  spec.noise_sigma = 0.0;
  const Phantom ph = generate_phantom(spec);
  const int c = phantom_center_slice(spec.n_slices);
  SegConfig cfg;
  cfg.mode = ThresholdMode::Fixed;
  cfg.fixed_threshold = 115;  // midway between lung and body
  EXPECT_EQ(slice_lung_area(ph.volume.slices[static_cast<std::size_t>(c)], cfg),
            ph.lung_masks[static_cast<std::size_t>(c)].count());
}

TEST(Profile, NoisyPhantomWithinFivePercent) {
  PhantomSpec spec;
  spec.noise_sigma = 4.0;
  spec.label = 1;
  spec.seed = 8;
  const Phantom ph = generate_phantom(spec);
  const auto profile = slice_area_profile(ph.volume, SegConfig{});
  for (int i = 0; i < ph.volume.size(); ++i) {
    const double truth = static_cast<double>(ph.lung_masks[static_cast<std::size_t>(i)].count());
    if (truth < 100) continue;
    EXPECT_NEAR(static_cast<double>(profile[static_cast<std::size_t>(i)]), truth, 0.05 * truth) << "slice " << i;
  }
  EXPECT_EQ(profile, slice_area_profile(ph.volume, SegConfig{}));
}

TEST(ProfileCsv, RoundTripAndHeader) {
  const std::vector<std::int64_t> profile{0, 12, 400, 3};
  const std::string csv = profile_csv(profile);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "slice_index,area");
  EXPECT_EQ(parse_profile_csv(csv), profile);
  EXPECT_CTSEQ_ERROR(parse_profile_csv("index,area\n0,1\n"), ErrorCode::Parse);
  EXPECT_CTSEQ_ERROR(parse_profile_csv("slice_index,area\n1,5\n"), ErrorCode::Parse);
  EXPECT_CTSEQ_ERROR(parse_profile_csv("slice_index,area\n0,x\n"), ErrorCode::Parse);
}

TEST(SegConfig, Validation) {
  SegConfig cfg;
  cfg.filter_kernel = 4;
  EXPECT_CTSEQ_ERROR(cfg.validate(), ErrorCode::Config);
  cfg = {};
  cfg.background_threshold = 256;
  EXPECT_CTSEQ_ERROR(cfg.validate(), ErrorCode::Config);
  cfg = {};
  cfg.crop_margin = -1;
  EXPECT_CTSEQ_ERROR(cfg.validate(), ErrorCode::Config);
}

}  // namespace
}  // namespace ctseq
