#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ctseq/volume_io.hpp"

namespace ctseq {

enum class ThresholdMode { Fixed, Otsu };

struct SegConfig {
  int background_threshold = 10;
  int crop_margin = 2;
  int filter_kernel = 5;  // odd side length of the square median window
  ThresholdMode mode = ThresholdMode::Otsu;
  int fixed_threshold = 128;  // used when mode == Fixed

  void validate() const;
};

// Inclusive pixel bounds; x indexes columns, y indexes rows.
struct CropBox {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  int width() const { return x1 - x0 + 1; }
  int height() const { return y1 - y0 + 1; }
  friend bool operator==(const CropBox&, const CropBox&) = default;
};

struct CroppedSlice {
  SliceImage image;
  CropBox box;
};

/// Tight box around pixels brighter than the background threshold, grown by
/// the margin and clamped to the image. Falls back to the full image when no
/// pixel qualifies.
CroppedSlice crop_slice(const SliceImage& slice, const SegConfig& cfg);

/// Square median filter with edge replication.
SliceImage median_filter(const SliceImage& slice, int kernel);
inline SliceImage filter_slice(const SliceImage& slice, const SegConfig& cfg) {
  return median_filter(slice, cfg.filter_kernel);
}

/// Threshold maximizing between-class variance of the split {< t} / {>= t};
/// ties resolve to the smallest t, a constant image yields its value.
std::uint8_t otsu_threshold(const SliceImage& slice);

/// 1 where intensity >= t.
BinaryMask segment(const SliceImage& filtered, int t);

/// Sets every background pixel not 4-connected to the image border. Computed
/// by dilating the border background with a 3x3 cross, restricted to the
/// background, until nothing changes.
BinaryMask fill_holes(const BinaryMask& mask);

/// Pixel count of filled minus mask. Requires filled to contain mask.
std::int64_t lung_area(const BinaryMask& mask, const BinaryMask& filled);

/// crop -> filter -> threshold -> fill -> area for one slice.
std::int64_t slice_lung_area(const SliceImage& slice, const SegConfig& cfg);

std::vector<std::int64_t> slice_area_profile(const CtVolume& volume, const SegConfig& cfg);

// "slice_index,area" with 0-based indices.
std::string profile_csv(std::span<const std::int64_t> profile);
std::vector<std::int64_t> parse_profile_csv(const std::string& text);

}  // namespace ctseq
