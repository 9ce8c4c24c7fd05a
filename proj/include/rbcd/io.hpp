#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rbcd/core.hpp"
#include "rbcd/operators.hpp"
#include "rbcd/problems.hpp"

namespace rbcd {

namespace fs = std::filesystem;

/// Malformed or unreadable input file.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::string next_content_line(std::istream& in) {
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '%') continue;
    return line;
  }
  throw FormatError("unexpected end of Matrix Market file");
}

inline std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Matrix Market.

/// Reads a real or integer `coordinate` or `array` Matrix Market file
/// (general or symmetric) into a sparse row-major matrix.
inline SparseRowMatrix read_matrix_market(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::string header;
  std::getline(in, header);
  std::istringstream hs(detail::lower(header));
  std::string banner, object, format, field, symmetry;
  hs >> banner >> object >> format >> field >> symmetry;
  if (banner != "%%matrixmarket" || object != "matrix")
    throw FormatError(path.string() + ": missing MatrixMarket matrix banner");
  if (field != "real" && field != "integer" && field != "double")
    throw FormatError(path.string() + ": unsupported field '" + field + "'");
  if (symmetry != "general" && symmetry != "symmetric")
    throw FormatError(path.string() + ": unsupported symmetry '" + symmetry + "'");
  const bool symmetric = symmetry == "symmetric";

  std::istringstream size_line(detail::next_content_line(in));
  std::vector<Eigen::Triplet<double>> triplets;
  Index rows = 0, cols = 0;
  if (format == "coordinate") {
    Index nnz = 0;
    if (!(size_line >> rows >> cols >> nnz)) throw FormatError(path.string() + ": bad size line");
    triplets.reserve(std::size_t(nnz));
    for (Index k = 0; k < nnz; ++k) {
      std::istringstream ls(detail::next_content_line(in));
      Index r = 0, c = 0;
      double v = 0.0;
      if (!(ls >> r >> c >> v)) throw FormatError(path.string() + ": bad entry line");
      if (r < 1 || r > rows || c < 1 || c > cols)
        throw FormatError(path.string() + ": entry index out of range");
      triplets.emplace_back(r - 1, c - 1, v);
      if (symmetric && r != c) triplets.emplace_back(c - 1, r - 1, v);
    }
  } else if (format == "array") {
    if (!(size_line >> rows >> cols)) throw FormatError(path.string() + ": bad size line");
    for (Index c = 0; c < cols; ++c)
      for (Index r = symmetric ? c : 0; r < rows; ++r) {
        std::istringstream ls(detail::next_content_line(in));
        double v = 0.0;
        if (!(ls >> v)) throw FormatError(path.string() + ": bad value line");
        if (v == 0.0) continue;
        triplets.emplace_back(r, c, v);
        if (symmetric && r != c) triplets.emplace_back(c, r, v);
      }
  } else {
    throw FormatError(path.string() + ": unsupported format '" + format + "'");
  }
  SparseRowMatrix m(rows, cols);
  m.setFromTriplets(triplets.begin(), triplets.end());
  return m;
}

inline void write_matrix_market(const fs::path& path, const SparseRowMatrix& m) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out << "%%MatrixMarket matrix coordinate real general\n";
  out << m.rows() << ' ' << m.cols() << ' ' << m.nonZeros() << '\n';
  out.precision(17);
  for (Index r = 0; r < m.outerSize(); ++r)
    for (SparseRowMatrix::InnerIterator it(m, r); it; ++it)
      out << it.row() + 1 << ' ' << it.col() + 1 << ' ' << it.value() << '\n';
}

inline void write_matrix_market(const fs::path& path, const Matrix& m) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out << "%%MatrixMarket matrix array real general\n";
  out << m.rows() << ' ' << m.cols() << '\n';
  out.precision(17);
  for (Index c = 0; c < m.cols(); ++c)
    for (Index r = 0; r < m.rows(); ++r) out << m(r, c) << '\n';
}

/// Loads a dense or sparse block operator from a JSON descriptor:
///
///   {"kind": "dense" | "sparse", "block_dims": [n_1, ...], "payload": "A.mtx"}
///
/// The payload holds the full m x (n_1 + ... + n_b) matrix; relative paths
/// resolve against the descriptor's directory. An optional "data_dim" is
/// checked against the payload.
inline std::unique_ptr<BlockOperator> load_operator(const fs::path& descriptor) {
  std::ifstream in(descriptor);
  if (!in) throw FormatError("cannot open " + descriptor.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(descriptor.string() + ": " + e.what());
  }
  const std::string kind = j.value("kind", "");
  if (!j.contains("block_dims") || !j.contains("payload"))
    throw FormatError(descriptor.string() + ": descriptor needs block_dims and payload");
  const auto dims = j.at("block_dims").get<std::vector<Index>>();
  fs::path payload = j.at("payload").get<std::string>();
  if (payload.is_relative()) payload = descriptor.parent_path() / payload;

  const SparseRowMatrix full = read_matrix_market(payload);
  if (j.contains("data_dim") && j.at("data_dim").get<Index>() != full.rows())
    throw ShapeError("descriptor data_dim does not match payload rows");
  if (kind == "sparse") return std::make_unique<SparseBlockOperator>(SparseBlockOperator::from_columns(full, dims));
  if (kind == "dense")
    return std::make_unique<DenseBlockOperator>(DenseBlockOperator::from_columns(Matrix(full), dims));
  throw ConfigError("unsupported operator kind '" + kind + "'");
}

// ---------------------------------------------------------------------------
// Images.

struct PgmScaling {
  double min = 0.0;
  double max = 1.0;
};

/// Writes an 8-bit binary PGM, min-max scaled; returns the scaling used.
inline PgmScaling write_pgm(const fs::path& path, const Image& img) {
  PgmScaling s{img.minCoeff(), img.maxCoeff()};
  const double range = s.max - s.min;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out << "P5\n" << img.cols() << ' ' << img.rows() << "\n255\n";
  for (Index r = 0; r < img.rows(); ++r)
    for (Index c = 0; c < img.cols(); ++c) {
      const double t = range > 0.0 ? (img(r, c) - s.min) / range : 0.0;
      out.put(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(t, 0.0, 1.0) * 255.0))));
    }
  return s;
}

/// Reads an 8-bit P5 or P2 PGM; values are returned on [0, maxval].
inline Image read_pgm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  auto token = [&]() {
    std::string t;
    char ch = 0;
    while (in.get(ch)) {
      if (ch == '#') {
        std::string skip;
        std::getline(in, skip);
        continue;
      }
      if (std::isspace(static_cast<unsigned char>(ch))) {
        if (!t.empty()) break;
        continue;
      }
      t.push_back(ch);
    }
    return t;
  };
  const std::string magic = token();
  if (magic != "P5" && magic != "P2") throw FormatError(path.string() + ": not a PGM file");
  Index cols = 0, rows = 0;
  int maxval = 0;
  try {
    cols = std::stol(token());
    rows = std::stol(token());
    maxval = std::stoi(token());
  } catch (const std::exception&) {
    throw FormatError(path.string() + ": bad PGM header");
  }
  if (cols < 1 || rows < 1 || maxval < 1 || maxval > 255)
    throw FormatError(path.string() + ": unsupported PGM header");
  Image img(rows, cols);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) {
      if (magic == "P5") {
        char ch = 0;
        if (!in.get(ch)) throw FormatError(path.string() + ": truncated PGM data");
        img(r, c) = double(static_cast<unsigned char>(ch));
      } else {
        const std::string t = token();
        if (t.empty()) throw FormatError(path.string() + ": truncated PGM data");
        img(r, c) = std::stod(t);
      }
    }
  return img;
}

/// Raw little-endian float64 frames (each frame column-major) plus a JSON
/// sidecar `<path>.json` with dims and the PGM preview scaling if any.
struct RawHeader {
  Index rows = 0;
  Index cols = 0;
  Index frames = 1;
  nlohmann::json extra = nlohmann::json::object();
};

inline void write_raw(const fs::path& path, const BlockVector& frames, Index rows, Index cols,
                      nlohmann::json extra = nlohmann::json::object()) {
  static_assert(std::endian::native == std::endian::little, "raw output assumes little-endian");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  for (const auto& f : frames) {
    if (f.size() != rows * cols) throw ShapeError("frame does not match raw dims");
    out.write(reinterpret_cast<const char*>(f.data()), std::streamsize(f.size() * sizeof(double)));
  }
  nlohmann::json h = {{"rows", rows},
                      {"cols", cols},
                      {"frames", frames.block_count()},
                      {"dtype", "float64"},
                      {"endianness", "little"},
                      {"layout", "column-major frames"}};
  if (!extra.empty()) h["extra"] = std::move(extra);
  std::ofstream hj(path.string() + ".json");
  hj << h.dump(2) << '\n';
}

inline BlockVector read_raw(const fs::path& path, RawHeader* header_out = nullptr) {
  std::ifstream hj(path.string() + ".json");
  if (!hj) throw FormatError("missing raw header " + path.string() + ".json");
  nlohmann::json h;
  try {
    hj >> h;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ".json: " + e.what());
  }
  RawHeader header{h.at("rows").get<Index>(), h.at("cols").get<Index>(),
                   h.at("frames").get<Index>(), h.value("extra", nlohmann::json::object())};
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<Vector> frames;
  for (Index f = 0; f < header.frames; ++f) {
    Vector v(header.rows * header.cols);
    in.read(reinterpret_cast<char*>(v.data()), std::streamsize(v.size() * sizeof(double)));
    if (!in) throw FormatError(path.string() + ": truncated raw data");
    frames.push_back(std::move(v));
  }
  if (header_out) *header_out = header;
  return BlockVector(std::move(frames));
}

}  // namespace rbcd
