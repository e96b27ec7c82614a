#include "ctseq/volume_io.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include "ctseq/error.hpp"
#include "json.hpp"

namespace ctseq {

namespace {

// Reads one ASCII header token, skipping whitespace and '#' comments.
std::string next_token(const std::string& data, std::size_t& pos) {
  while (pos < data.size()) {
    if (std::isspace(static_cast<unsigned char>(data[pos]))) {
      ++pos;
    } else if (data[pos] == '#') {
      while (pos < data.size() && data[pos] != '\n') ++pos;
    } else {
      break;
    }
  }
  const std::size_t start = pos;
  while (pos < data.size() && !std::isspace(static_cast<unsigned char>(data[pos])) &&
         data[pos] != '#') {
    ++pos;
  }
  return data.substr(start, pos - start);
}

int parse_header_int(const std::string& token, const fs::path& file, const char* what) {
  if (token.empty() || !std::all_of(token.begin(), token.end(),
                                    [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
    throw Error(ErrorCode::Format, "invalid PGM " + std::string(what) + " in " + file.string());
  }
  long value = std::stol(token);
  if (value < 1 || value > 1'000'000) {
    throw Error(ErrorCode::Format, "PGM " + std::string(what) + " out of range in " + file.string());
  }
  return static_cast<int>(value);
}

std::optional<Split> split_from_stem(const std::string& stem) {
  if (stem == "train") return Split::Train;
  if (stem == "val") return Split::Val;
  if (stem == "test") return Split::Test;
  return std::nullopt;
}

}  // namespace

std::string read_file(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + file.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  if (in.bad()) throw Error(ErrorCode::Io, "read failure on " + file.string());
  return buffer.str();
}

void write_file_atomic(const fs::path& file, std::string_view bytes) {
  fs::path tmp = file;
  tmp += ".tmp";
  if (file.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(file.parent_path(), ec);
  }
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + file.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw Error(ErrorCode::Io, "write failure on " + file.string());
  }
  std::error_code ec;
  fs::rename(tmp, file, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw Error(ErrorCode::Io, "cannot move temporary file into " + file.string());
  }
}

SliceImage read_pgm(const fs::path& file) {
  const std::string data = read_file(file);
  std::size_t pos = 0;
  if (next_token(data, pos) != "P5") {
    throw Error(ErrorCode::Format, "not a binary PGM (P5) file: " + file.string());
  }
  const int width = parse_header_int(next_token(data, pos), file, "width");
  const int height = parse_header_int(next_token(data, pos), file, "height");
  const int maxval = parse_header_int(next_token(data, pos), file, "maxval");
  if (maxval != 255) {
    throw Error(ErrorCode::Format, "unsupported PGM maxval " + std::to_string(maxval) + " in " +
                                       file.string());
  }
  if (pos >= data.size() || !std::isspace(static_cast<unsigned char>(data[pos]))) {
    throw Error(ErrorCode::Format, "truncated PGM header in " + file.string());
  }
  ++pos;
  const std::size_t count = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  if (data.size() - pos != count) {
    throw Error(ErrorCode::Format, "PGM pixel payload has " + std::to_string(data.size() - pos) +
                                       " bytes, expected " + std::to_string(count) + " in " +
                                       file.string());
  }
  SliceImage image(height, width);
  std::copy_n(reinterpret_cast<const std::uint8_t*>(data.data() + pos), count, image.data());
  return image;
}

std::string encode_pgm(const SliceImage& image) {
  std::string out = "P5\n" + std::to_string(image.cols()) + " " + std::to_string(image.rows()) +
                    "\n255\n";
  const std::size_t header = out.size();
  out.resize(header + static_cast<std::size_t>(image.size()));
  std::copy_n(image.data(), image.size(), reinterpret_cast<std::uint8_t*>(out.data() + header));
  return out;
}

void write_pgm(const SliceImage& image, const fs::path& file) {
  write_file_atomic(file, encode_pgm(image));
}

CtVolume load_volume(const fs::path& dir, std::optional<int> label) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) {
    throw Error(ErrorCode::Io, "volume directory not found: " + dir.string());
  }
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".pgm") {
      files.push_back(entry.path());
    }
  }
  if (files.empty()) {
    throw Error(ErrorCode::Io, "no .pgm slices in " + dir.string());
  }
  std::sort(files.begin(), files.end(), [](const fs::path& a, const fs::path& b) {
    return a.filename().string() < b.filename().string();
  });

  CtVolume volume;
  volume.id = dir.filename().string();
  if (volume.id.empty()) volume.id = dir.parent_path().filename().string();
  volume.label = label;
  volume.slices.reserve(files.size());
  for (const auto& file : files) {
    SliceImage slice = read_pgm(file);
    if (!volume.slices.empty() &&
        (slice.rows() != volume.height() || slice.cols() != volume.width())) {
      throw Error(ErrorCode::Dimension,
                  "dimension mismatch: " + file.string() + " is " + std::to_string(slice.cols()) +
                      "x" + std::to_string(slice.rows()) + ", expected " +
                      std::to_string(volume.width()) + "x" + std::to_string(volume.height()));
    }
    volume.slices.push_back(std::move(slice));
  }
  return volume;
}

void save_volume(const CtVolume& volume, const fs::path& dir) {
  if (volume.slices.empty()) {
    throw Error(ErrorCode::Contract, "cannot save an empty volume");
  }
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw Error(ErrorCode::Io, "cannot create volume directory " + dir.string());
  }
  const int digits = std::max<int>(4, static_cast<int>(std::to_string(volume.size()).size()));
  for (int i = 0; i < volume.size(); ++i) {
    std::string number = std::to_string(i + 1);
    number.insert(0, static_cast<std::size_t>(digits) - number.size(), '0');
    write_pgm(volume.slices[static_cast<std::size_t>(i)], dir / ("s" + number + ".pgm"));
  }
}

DatasetManifest read_manifest(const fs::path& file) {
  std::error_code ec;
  if (!fs::is_regular_file(file, ec)) {
    throw Error(ErrorCode::Io, "manifest not found: " + file.string());
  }
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_file(file));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Parse, "manifest " + file.string() + ": " + e.what());
  }
  if (!doc.is_array()) {
    throw Error(ErrorCode::Parse, "manifest " + file.string() + " must be a JSON array");
  }
  DatasetManifest manifest;
  manifest.split = split_from_stem(file.stem().string());
  const fs::path base = file.parent_path();
  std::set<std::string> seen;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto& item = doc[i];
    if (!item.is_object() || !item.contains("path") || !item["path"].is_string() ||
        !item.contains("label") || !item["label"].is_number_integer()) {
      throw Error(ErrorCode::Parse, "manifest entry " + std::to_string(i) +
                                        " needs a string \"path\" and integer \"label\"");
    }
    const int label = item["label"].get<int>();
    if (label != 0 && label != 1) {
      throw Error(ErrorCode::Parse, "manifest entry " + std::to_string(i) + " has label " +
                                        std::to_string(label) + "; expected 0 or 1");
    }
    fs::path path = item["path"].get<std::string>();
    if (path.is_relative()) path = base / path;
    path = path.lexically_normal();
    if (!seen.insert(path.string()).second) {
      throw Error(ErrorCode::Parse, "duplicate manifest path " + path.string());
    }
    manifest.entries.push_back({path, label});
  }
  return manifest;
}

std::string encode_manifest(const DatasetManifest& manifest, const fs::path& base_dir) {
  nlohmann::json doc = nlohmann::json::array();
  for (const auto& entry : manifest.entries) {
    fs::path rel = entry.path.is_absolute() || !base_dir.empty()
                       ? entry.path.lexically_relative(base_dir)
                       : entry.path;
    if (rel.empty()) rel = entry.path;
    doc.push_back({{"path", rel.generic_string()}, {"label", entry.label}});
  }
  return doc.dump(2) + "\n";
}

void write_manifest(const DatasetManifest& manifest, const fs::path& file) {
  write_file_atomic(file, encode_manifest(manifest, file.parent_path()));
}

}  // namespace ctseq
