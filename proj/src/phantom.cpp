#include "ctseq/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "ctseq/error.hpp"
#include "ctseq/lung_seg.hpp"

namespace ctseq {

namespace {

struct Ellipse {
  double cx, cy, ax, ay;

  bool contains(double x, double y) const {
    const double u = (x - cx) / ax;
    const double v = (y - cy) / ay;
    return u * u + v * v <= 1.0;
  }
};

// Part of a lung beyond a straight cut: in the lung's unit-disc coordinates,
// the points whose projection on (ux, uy) is at least `offset`.
struct Cap {
  int lung;
  double ux, uy, offset;
};

constexpr double kWallPixels = 5.0;
constexpr double kMinLungScale = 0.70;
constexpr int kMaxSettleRounds = 256;

// Repeats the median filter until the image stops changing.
SliceImage settle(SliceImage img, int kernel) {
  for (int round = 0; round < kMaxSettleRounds; ++round) {
    SliceImage next = median_filter(img, kernel);
    if ((next == img).all()) return img;
    img = std::move(next);
  }
  throw Error(ErrorCode::Geometry, "phantom shapes do not settle under the median filter");
}

}  // namespace

void PhantomSpec::validate() const {
  auto check_intensity = [](int v, const char* name) {
    if (v < 0 || v > 255) {
      throw Error(ErrorCode::Contract, std::string(name) + " intensity must lie in [0,255]");
    }
  };
  check_intensity(body_intensity, "body");
  check_intensity(lung_intensity, "lung");
  check_intensity(lesion_intensity, "lesion");
  if (n_slices < 4) throw Error(ErrorCode::Contract, "phantom needs at least 4 slices");
  if (width < 1 || height < 1) throw Error(ErrorCode::Contract, "phantom dimensions must be >= 1");
  if (!(noise_sigma >= 0.0)) throw Error(ErrorCode::Contract, "noise sigma must be >= 0");
  if (label != 0 && label != 1) throw Error(ErrorCode::Contract, "phantom label must be 0 or 1");
  if (body_intensity == 0 || lung_intensity == 0 || lesion_intensity == 0 || body_intensity == lung_intensity ||
      body_intensity == lesion_intensity || lung_intensity == lesion_intensity) {
    throw Error(ErrorCode::Contract, "background, body, lung and lesion intensities must be distinct");
  }
  if (stable_kernel < 1 || stable_kernel % 2 == 0) {
    throw Error(ErrorCode::Contract, "stable kernel must be odd and >= 1");
  }
}

Phantom generate_phantom(const PhantomSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> jitter(-1.0, 1.0);

  const double w = spec.width;
  const double h = spec.height;
  const double scale = 1.0 + 0.04 * jitter(rng);
  const Ellipse body{(w - 1) / 2 + 0.02 * w * jitter(rng), (h - 1) / 2 + 0.02 * h * jitter(rng),
                     0.40 * w * scale, 0.32 * h * scale};
  const double lung_dx = 0.18 * w;
  const double lung_ax = 0.12 * w;
  const double lung_ay = 0.19 * h;

  // The largest lungs (center slice) must sit inside the body with a wall of
  // at least kWallPixels and must not touch each other.
  const Ellipse inner{body.cx, body.cy, body.ax - kWallPixels, body.ay - kWallPixels};
  bool fits = inner.ax > 0 && inner.ay > 0 && 2 * (lung_dx - lung_ax) >= kWallPixels;
  for (int side = -1; fits && side <= 1; side += 2) {
    for (int deg = 0; deg < 360; ++deg) {
      const double theta = deg * std::numbers::pi / 180.0;
      const double x = body.cx + side * lung_dx + lung_ax * std::cos(theta);
      const double y = body.cy + lung_ay * std::sin(theta);
      if (!inner.contains(x, y)) {
        fits = false;
        break;
      }
    }
  }
  if (!fits) {
    throw Error(ErrorCode::Geometry, "lungs do not fit inside the body for a " +
                                         std::to_string(spec.width) + "x" +
                                         std::to_string(spec.height) + " phantom");
  }

  const int n = spec.n_slices;
  const int center = phantom_center_slice(n);
  const int lesion_begin = n / 3;
  const int lesion_end = n - n / 3;
  const double spread = 0.3 * n;

  Phantom phantom;
  phantom.volume.id = "phantom";
  phantom.volume.label = spec.label;
  std::normal_distribution<double> noise(0.0, spec.noise_sigma > 0 ? spec.noise_sigma : 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  for (int i = 0; i < n; ++i) {
    const double d = (i - center) / spread;
    const double s = kMinLungScale + (1.0 - kMinLungScale) * std::exp(-0.5 * d * d);
    const Ellipse lungs[2] = {{body.cx - lung_dx, body.cy, lung_ax * s, lung_ay * s},
                              {body.cx + lung_dx, body.cy, lung_ax * s, lung_ay * s}};

    std::vector<Cap> lesions;
    if (spec.label == 1 && i >= lesion_begin && i < lesion_end) {
      const int count = 1 + static_cast<int>(rng() % 2);
      for (int l = 0; l < count; ++l) {
        const double phi = 2.0 * std::numbers::pi * unit(rng);
        const double depth = 0.5 + 0.3 * unit(rng);  // cap height in lung radii
        lesions.push_back({static_cast<int>(rng() % 2), std::cos(phi), std::sin(phi), 1.0 - depth});
      }
    }

    SliceImage slice = SliceImage::Zero(spec.height, spec.width);
    for (int y = 0; y < spec.height; ++y) {
      for (int x = 0; x < spec.width; ++x) {
        if (!body.contains(x, y)) continue;
        slice(y, x) = static_cast<std::uint8_t>(spec.body_intensity);
        const int lung = lungs[0].contains(x, y) ? 0 : lungs[1].contains(x, y) ? 1 : -1;
        if (lung < 0) continue;
        const double u = (x - lungs[lung].cx) / lungs[lung].ax;
        const double v = (y - lungs[lung].cy) / lungs[lung].ay;
        bool in_lesion = false;
        for (const auto& cap : lesions) {
          in_lesion = in_lesion || (cap.lung == lung && u * cap.ux + v * cap.uy >= cap.offset);
        }
        slice(y, x) = static_cast<std::uint8_t>(in_lesion ? spec.lesion_intensity : spec.lung_intensity);
      }
    }
    if (spec.stable_kernel > 1) slice = settle(std::move(slice), spec.stable_kernel);
    BinaryMask lung_mask = slice == static_cast<std::uint8_t>(spec.lung_intensity);
    BinaryMask lesion_mask = slice == static_cast<std::uint8_t>(spec.lesion_intensity);

    if (spec.noise_sigma > 0) {
      for (Eigen::Index p = 0; p < slice.size(); ++p) {
        const double v = std::round(slice.data()[p] + noise(rng));
        slice.data()[p] = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
      }
    }

    phantom.volume.slices.push_back(std::move(slice));
    phantom.lung_masks.push_back(std::move(lung_mask));
    phantom.lesion_masks.push_back(std::move(lesion_mask));
  }
  return phantom;
}

}  // namespace ctseq
