#include "ctseq/embedding_io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <vector>

#include "ctseq/error.hpp"
#include "ctseq/volume_io.hpp"

namespace ctseq {

namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

[[noreturn]] void fail(int line_no, const std::string& what) {
  throw Error(ErrorCode::Parse, "embeddings CSV line " + std::to_string(line_no) + ": " + what);
}

}  // namespace

std::string encode_embeddings_csv(const EmbeddingSequence& seq) {
  std::string out = "slice_index";
  for (int j = 0; j < seq.dim(); ++j) out += ",e" + std::to_string(j);
  out += '\n';
  char buf[32];
  for (int i = 0; i < seq.size(); ++i) {
    out += std::to_string(i);
    for (int j = 0; j < seq.dim(); ++j) {
      std::snprintf(buf, sizeof buf, ",%.17g", seq.values(i, j));
      out += buf;
    }
    out += '\n';
  }
  return out;
}

EmbeddingSequence decode_embeddings_csv(const std::string& text, const std::string& volume_id) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) fail(1, "missing header");
  const auto header = split_commas(line);
  if (header.size() < 2 || header[0] != "slice_index") fail(1, "header must start with slice_index");
  for (std::size_t j = 1; j < header.size(); ++j) {
    if (header[j] != "e" + std::to_string(j - 1)) {
      fail(1, "expected column e" + std::to_string(j - 1) + ", found \"" + std::string(header[j]) + "\"");
    }
  }
  const std::size_t dim = header.size() - 1;

  std::vector<double> values;
  long long previous = -1;
  int line_no = 1;
  int rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_commas(line);
    if (fields.size() != dim + 1) {
      fail(line_no, "expected " + std::to_string(dim + 1) + " fields, found " +
                        std::to_string(fields.size()));
    }
    long long index = 0;
    auto [ptr, ec] = std::from_chars(fields[0].data(), fields[0].data() + fields[0].size(), index);
    if (ec != std::errc{} || ptr != fields[0].data() + fields[0].size()) fail(line_no, "bad slice index");
    if (index <= previous) fail(line_no, "slice indices must be strictly increasing");
    previous = index;
    for (std::size_t j = 1; j <= dim; ++j) {
      double v = 0.0;
      auto [p, e] = std::from_chars(fields[j].data(), fields[j].data() + fields[j].size(), v);
      if (e != std::errc{} || p != fields[j].data() + fields[j].size()) {
        fail(line_no, "bad number in column e" + std::to_string(j - 1));
      }
      if (!std::isfinite(v)) fail(line_no, "non-finite value in column e" + std::to_string(j - 1));
      values.push_back(v);
    }
    ++rows;
  }
  if (rows == 0) fail(line_no, "no embedding rows");

  EmbeddingSequence seq;
  seq.volume_id = volume_id;
  seq.values = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      values.data(), rows, static_cast<Eigen::Index>(dim));
  return seq;
}

void export_embeddings(const EmbeddingSequence& seq, const std::filesystem::path& file) {
  write_file_atomic(file, encode_embeddings_csv(seq));
}

EmbeddingSequence import_embeddings(const std::filesystem::path& file) {
  std::string id = file.filename().string();
  for (const std::string suffix : {".emb.csv", ".csv"}) {
    if (id.size() > suffix.size() && id.ends_with(suffix)) {
      id.resize(id.size() - suffix.size());
      break;
    }
  }
  return decode_embeddings_csv(read_file(file), id);
}

}  // namespace ctseq
