#pragma once

#include <cstdint>
#include <vector>

#include "ctseq/volume_io.hpp"

namespace ctseq {

// Synthetic chest CT: a bright body ellipse holding two dark lungs whose size
// follows a bell profile over the slice axis. Covid-labelled phantoms carry
// bright lesion discs inside the lungs on the central third of the slices.
struct PhantomSpec {
  int n_slices = 32;
  int width = 96;
  int height = 96;
  int body_intensity = 200;
  int lung_intensity = 30;
  int lesion_intensity = 120;
  double noise_sigma = 4.0;
  // The painted shapes are smoothed until a median filter of this size leaves
  // them unchanged, so the noiseless image survives the filtering step intact.
  // 1 keeps the raw ellipses.
  int stable_kernel = 5;
  int label = 0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Phantom {
  CtVolume volume;
  // Pixels at lung intensity before noise (lesion pixels excluded).
  std::vector<BinaryMask> lung_masks;
  std::vector<BinaryMask> lesion_masks;
};

Phantom generate_phantom(const PhantomSpec& spec);

// Index of the slice at the peak of the lung-size profile.
inline int phantom_center_slice(int n_slices) { return n_slices / 2; }

}  // namespace ctseq
