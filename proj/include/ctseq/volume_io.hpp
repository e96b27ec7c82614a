#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace ctseq {

namespace fs = std::filesystem;

// Rows index y (height), columns index x (width).
using SliceImage = Eigen::Array<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using BinaryMask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct CtVolume {
  std::string id;
  std::vector<SliceImage> slices;
  std::optional<int> label;  // 1 = covid, 0 = non-covid

  int size() const { return static_cast<int>(slices.size()); }
  int width() const { return slices.empty() ? 0 : static_cast<int>(slices.front().cols()); }
  int height() const { return slices.empty() ? 0 : static_cast<int>(slices.front().rows()); }
};

enum class Split { Train, Val, Test };

struct ManifestEntry {
  fs::path path;  // resolved volume directory
  int label = 0;

  std::string id() const { return path.filename().string(); }
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::optional<Split> split;  // inferred from the file stem when it is train/val/test
};

SliceImage read_pgm(const fs::path& file);
std::string encode_pgm(const SliceImage& image);
void write_pgm(const SliceImage& image, const fs::path& file);

/// Loads every *.pgm in `dir` in lexicographic filename order. All slices must
/// share one width and height.
CtVolume load_volume(const fs::path& dir, std::optional<int> label = std::nullopt);

/// Writes one P5 file per slice, named s0001.pgm, s0002.pgm, ... (the padding
/// widens past four digits only when the slice count needs it).
void save_volume(const CtVolume& volume, const fs::path& dir);

/// Manifest paths are stored relative to the manifest file and resolved against
/// its directory on read.
DatasetManifest read_manifest(const fs::path& file);
std::string encode_manifest(const DatasetManifest& manifest, const fs::path& base_dir);
void write_manifest(const DatasetManifest& manifest, const fs::path& file);

// Writes to a sibling temporary file and renames it into place.
void write_file_atomic(const fs::path& file, std::string_view bytes);
std::string read_file(const fs::path& file);

}  // namespace ctseq
