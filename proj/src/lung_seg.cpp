#include "ctseq/lung_seg.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <sstream>

#include "ctseq/error.hpp"

namespace ctseq {

void SegConfig::validate() const {
  if (filter_kernel < 1 || filter_kernel % 2 == 0) {
    throw Error(ErrorCode::Config, "filter kernel must be odd and >= 1");
  }
  if (background_threshold < 0 || background_threshold > 255 || fixed_threshold < 0 ||
      fixed_threshold > 255) {
    throw Error(ErrorCode::Config, "thresholds must lie in [0,255]");
  }
  if (crop_margin < 0) throw Error(ErrorCode::Config, "crop margin must be >= 0");
}

CroppedSlice crop_slice(const SliceImage& slice, const SegConfig& cfg) {
  const int rows = static_cast<int>(slice.rows());
  const int cols = static_cast<int>(slice.cols());
  const auto foreground = (slice.cast<int>() > cfg.background_threshold).eval();
  if (!foreground.any()) {
    return {slice, CropBox{0, 0, cols - 1, rows - 1}};
  }
  const auto row_hit = foreground.rowwise().any().eval();
  const auto col_hit = foreground.colwise().any().eval();
  int y0 = 0, y1 = rows - 1, x0 = 0, x1 = cols - 1;
  while (!row_hit(y0)) ++y0;
  while (!row_hit(y1)) --y1;
  while (!col_hit(x0)) ++x0;
  while (!col_hit(x1)) --x1;
  const CropBox box{std::max(0, x0 - cfg.crop_margin), std::max(0, y0 - cfg.crop_margin),
                    std::min(cols - 1, x1 + cfg.crop_margin),
                    std::min(rows - 1, y1 + cfg.crop_margin)};
  return {slice.block(box.y0, box.x0, box.height(), box.width()), box};
}

SliceImage median_filter(const SliceImage& slice, int kernel) {
  if (kernel < 1 || kernel % 2 == 0) {
    throw Error(ErrorCode::Config, "median kernel must be odd and >= 1");
  }
  const int r = kernel / 2;
  const Eigen::Index rows = slice.rows();
  const Eigen::Index cols = slice.cols();

  SliceImage padded(rows + 2 * r, cols + 2 * r);
  for (Eigen::Index y = 0; y < padded.rows(); ++y) {
    const Eigen::Index sy = std::clamp<Eigen::Index>(y - r, 0, rows - 1);
    for (Eigen::Index x = 0; x < padded.cols(); ++x) {
      padded(y, x) = slice(sy, std::clamp<Eigen::Index>(x - r, 0, cols - 1));
    }
  }

  // Sliding 256-bin histogram along each row; `below` counts window values
  // under the current median candidate m.
  const int half = kernel * kernel / 2;
  SliceImage out(rows, cols);
  std::array<int, 256> hist;
  for (Eigen::Index y = 0; y < rows; ++y) {
    hist.fill(0);
    for (int dy = 0; dy < kernel; ++dy) {
      for (int dx = 0; dx < kernel; ++dx) ++hist[padded(y + dy, dx)];
    }
    int m = 0, below = 0;
    while (below + hist[m] <= half) below += hist[m++];
    out(y, 0) = static_cast<std::uint8_t>(m);
    for (Eigen::Index x = 1; x < cols; ++x) {
      for (int dy = 0; dy < kernel; ++dy) {
        const int gone = padded(y + dy, x - 1);
        const int added = padded(y + dy, x - 1 + kernel);
        --hist[gone];
        ++hist[added];
        below += (added < m) - (gone < m);
      }
      while (below > half) below -= hist[--m];
      while (below + hist[m] <= half) below += hist[m++];
      out(y, x) = static_cast<std::uint8_t>(m);
    }
  }
  return out;
}

std::uint8_t otsu_threshold(const SliceImage& slice) {
  if (slice.size() == 0) throw Error(ErrorCode::Contract, "otsu_threshold on an empty slice");
  std::array<std::int64_t, 256> hist{};
  for (Eigen::Index i = 0; i < slice.size(); ++i) ++hist[slice.data()[i]];

  const std::int64_t total = slice.size();
  if (total > (std::int64_t{1} << 18)) {
    // Keeps the exact 128-bit comparison below free of overflow.
    throw Error(ErrorCode::Contract, "otsu_threshold supports at most 512x512 pixels");
  }
  std::int64_t total_sum = 0;
  for (int v = 0; v < 256; ++v) total_sum += v * hist[v];

  // Between-class variance for the split {< t} / {>= t} is
  //   (total*sum0 - n0*total_sum)^2 / (total^2 * n0 * n1),
  // compared exactly as fractions so plateaus tie bit-for-bit.
  using u128 = unsigned __int128;
  u128 best_num = 0;
  std::int64_t best_den = 1;
  int best_t = -1;
  std::int64_t n0 = 0, sum0 = 0;
  for (int t = 1; t < 256; ++t) {
    n0 += hist[t - 1];
    sum0 += static_cast<std::int64_t>(t - 1) * hist[t - 1];
    const std::int64_t n1 = total - n0;
    if (n0 == 0 || n1 == 0) continue;
    const std::int64_t diff = total * sum0 - n0 * total_sum;
    const u128 num = static_cast<u128>(static_cast<__int128>(diff) * diff);
    const std::int64_t den = n0 * n1;
    if (best_t < 0 || num * static_cast<u128>(best_den) > best_num * static_cast<u128>(den)) {
      best_num = num;
      best_den = den;
      best_t = t;
    }
  }
  if (best_t < 0) return slice.data()[0];  // constant image
  return static_cast<std::uint8_t>(best_t);
}

BinaryMask segment(const SliceImage& filtered, int t) { return filtered.cast<int>() >= t; }

BinaryMask fill_holes(const BinaryMask& mask) {
  const Eigen::Index rows = mask.rows();
  const Eigen::Index cols = mask.cols();
  if (rows == 0 || cols == 0) return mask;
  const BinaryMask background = !mask;

  BinaryMask reached = BinaryMask::Constant(rows, cols, false);
  reached.row(0) = background.row(0);
  reached.row(rows - 1) = background.row(rows - 1);
  reached.col(0) = background.col(0);
  reached.col(cols - 1) = background.col(cols - 1);

  BinaryMask grown(rows, cols);
  for (;;) {
    grown = reached;
    if (rows > 1) {
      grown.topRows(rows - 1) = grown.topRows(rows - 1) || reached.bottomRows(rows - 1);
      grown.bottomRows(rows - 1) = grown.bottomRows(rows - 1) || reached.topRows(rows - 1);
    }
    if (cols > 1) {
      grown.leftCols(cols - 1) = grown.leftCols(cols - 1) || reached.rightCols(cols - 1);
      grown.rightCols(cols - 1) = grown.rightCols(cols - 1) || reached.leftCols(cols - 1);
    }
    grown = grown && background;
    if ((grown == reached).all()) break;
    reached.swap(grown);
  }
  return !reached;
}

std::int64_t lung_area(const BinaryMask& mask, const BinaryMask& filled) {
  if (mask.rows() != filled.rows() || mask.cols() != filled.cols()) {
    throw Error(ErrorCode::Dimension, "lung_area: mask and filled mask differ in size");
  }
  if ((mask && !filled).any()) {
    throw Error(ErrorCode::Contract, "lung_area: filled mask does not contain the mask");
  }
  return static_cast<std::int64_t>((filled && !mask).count());
}

std::int64_t slice_lung_area(const SliceImage& slice, const SegConfig& cfg) {
  const CroppedSlice cropped = crop_slice(slice, cfg);
  const SliceImage filtered = filter_slice(cropped.image, cfg);
  const int t = cfg.mode == ThresholdMode::Otsu ? otsu_threshold(filtered) : cfg.fixed_threshold;
  const BinaryMask mask = segment(filtered, t);
  return lung_area(mask, fill_holes(mask));
}

std::vector<std::int64_t> slice_area_profile(const CtVolume& volume, const SegConfig& cfg) {
  cfg.validate();
  std::vector<std::int64_t> profile;
  profile.reserve(volume.slices.size());
  for (const auto& slice : volume.slices) profile.push_back(slice_lung_area(slice, cfg));
  return profile;
}

std::string profile_csv(std::span<const std::int64_t> profile) {
  std::string out = "slice_index,area\n";
  for (std::size_t i = 0; i < profile.size(); ++i) {
    out += std::to_string(i) + "," + std::to_string(profile[i]) + "\n";
  }
  return out;
}

std::vector<std::int64_t> parse_profile_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "slice_index,area") {
    throw Error(ErrorCode::Parse, "area profile: expected header \"slice_index,area\"");
  }
  std::vector<std::int64_t> profile;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto comma = line.find(',');
    long long index = -1, area = -1;
    bool ok = comma != std::string::npos;
    if (ok) {
      auto [p1, e1] = std::from_chars(line.data(), line.data() + comma, index);
      auto [p2, e2] = std::from_chars(line.data() + comma + 1, line.data() + line.size(), area);
      ok = e1 == std::errc{} && e2 == std::errc{} && p1 == line.data() + comma &&
           p2 == line.data() + line.size();
    }
    if (!ok || index != static_cast<long long>(profile.size()) || area < 0) {
      throw Error(ErrorCode::Parse, "area profile: malformed line " + std::to_string(line_no));
    }
    profile.push_back(area);
  }
  return profile;
}

}  // namespace ctseq
