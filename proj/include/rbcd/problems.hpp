#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "rbcd/core.hpp"
#include "rbcd/operators.hpp"
#include "rbcd/radon.hpp"
#include "rbcd/random.hpp"

namespace rbcd {

/// Column-major, so the flat storage of an image is the stacking of its
/// columns.
using Image = Eigen::MatrixXd;

inline Vector stack_columns(const Image& img) {
  return Eigen::Map<const Vector>(img.data(), img.size());
}

inline Image unstack_columns(const Vector& v, Index rows, Index cols) {
  if (v.size() != rows * cols) throw ShapeError("vector length does not match image dims");
  return Eigen::Map<const Image>(v.data(), rows, cols);
}

// ---------------------------------------------------------------------------
// Tensor-product systems sum_i v_{li} K x_i = y_l.

inline TensorProductOperator make_tensor_product(Matrix V, Matrix K) {
  if (V.size() == 0) throw ConfigError("V must be nonempty");
  if (K.size() == 0) throw ConfigError("K must be nonempty");
  return TensorProductOperator(std::move(V), std::move(K));
}

// ---------------------------------------------------------------------------
// Modified Shepp-Logan phantom.

struct Ellipse {
  double intensity, semi_x, semi_y, center_x, center_y, angle_deg;
};

/// High-contrast ten-ellipse table, coordinates in [-1, 1]^2.
inline constexpr std::array<Ellipse, 10> kModifiedSheppLogan{{
    {1.0, 0.69, 0.92, 0.0, 0.0, 0.0},
    {-0.8, 0.6624, 0.8740, 0.0, -0.0184, 0.0},
    {-0.2, 0.1100, 0.3100, 0.22, 0.0, -18.0},
    {-0.2, 0.1600, 0.4100, -0.22, 0.0, 18.0},
    {0.1, 0.2100, 0.2500, 0.0, 0.35, 0.0},
    {0.1, 0.0460, 0.0460, 0.0, 0.1, 0.0},
    {0.1, 0.0460, 0.0460, 0.0, -0.1, 0.0},
    {0.1, 0.0460, 0.0230, -0.08, -0.605, 0.0},
    {0.1, 0.0230, 0.0230, 0.0, -0.606, 0.0},
    {0.1, 0.0230, 0.0460, 0.06, -0.605, 0.0},
}};

/// Sum of intensities of the ellipses containing (x, y).
inline double shepp_logan_value(double x, double y) {
  double v = 0.0;
  for (const auto& e : kModifiedSheppLogan) {
    const double phi = e.angle_deg * std::numbers::pi / 180.0;
    const double dx = x - e.center_x, dy = y - e.center_y;
    const double u = dx * std::cos(phi) + dy * std::sin(phi);
    const double w = -dx * std::sin(phi) + dy * std::cos(phi);
    if ((u * u) / (e.semi_x * e.semi_x) + (w * w) / (e.semi_y * e.semi_y) <= 1.0)
      v += e.intensity;
  }
  return v;
}

/// n x n phantom sampled at pixel centers; row 0 is the top of the image.
/// Values are raw ellipse sums (no clamping).
inline Image shepp_logan(Index n) {
  if (n < 1) throw ConfigError("phantom size must be positive");
  Image img(n, n);
  const double half = 0.5 * double(n);
  for (Index c = 0; c < n; ++c)
    for (Index r = 0; r < n; ++r) {
      const double x = (double(c) + 0.5 - half) / half;
      const double y = (half - double(r) - 0.5) / half;
      img(r, c) = shepp_logan_value(x, y);
    }
  return img;
}

// ---------------------------------------------------------------------------
// Coded-aperture compressive temporal imaging.

/// b binary frames; mask i+1 is mask i shifted one pixel right, wrapping
/// around at the border.
struct MaskStack {
  Index rows = 0, cols = 0;
  std::vector<Image> masks;

  std::size_t frames() const noexcept { return masks.size(); }
  static constexpr const char* kShiftPolicy = "circular";
};

inline Image shift_right_circular(const Image& m) {
  Image out(m.rows(), m.cols());
  for (Index c = 0; c < m.cols(); ++c) out.col(c) = m.col((c + m.cols() - 1) % m.cols());
  return out;
}

inline MaskStack make_mask_stack(Image first, std::size_t frames) {
  if (frames < 1) throw ConfigError("frame count must be at least 1");
  for (Index k = 0; k < first.size(); ++k)
    if (first.data()[k] != 0.0 && first.data()[k] != 1.0)
      throw ConfigError("masks must be binary");
  MaskStack stack{first.rows(), first.cols(), {}};
  stack.masks.push_back(std::move(first));
  while (stack.masks.size() < frames) stack.masks.push_back(shift_right_circular(stack.masks.back()));
  return stack;
}

inline MaskOperator make_mask_operator(const MaskStack& stack) {
  std::vector<Vector> flat;
  for (const auto& m : stack.masks) flat.push_back(stack_columns(m));
  return MaskOperator(std::move(flat));
}

struct CactiProblem {
  MaskOperator op;
  MaskStack masks;
};

/// First mask i.i.d. Bernoulli(1/2) from `seed`; the rest are shifts.
inline CactiProblem make_cacti(std::size_t frames, Index rows, Index cols, std::uint64_t seed) {
  if (rows < 1 || cols < 1) throw ConfigError("frame dims must be positive");
  Rng rng(seed);
  Image first(rows, cols);
  for (Index c = 0; c < cols; ++c)
    for (Index r = 0; r < rows; ++r) first(r, c) = rng.bernoulli_half() ? 1.0 : 0.0;
  MaskStack stack = make_mask_stack(std::move(first), frames);
  return {make_mask_operator(stack), std::move(stack)};
}

// ---------------------------------------------------------------------------
// Noise.

struct NoisyData {
  DataVector y_delta;
  double delta = 0.0;
  double delta_rel = 0.0;
};

/// y + delta_rel * ||y|| * xi with xi a unit-norm Gaussian direction.
inline NoisyData add_noise(const DataVector& y, double delta_rel, std::uint64_t seed) {
  if (!(delta_rel >= 0.0)) throw ConfigError("relative noise level must be nonnegative");
  if (!y.allFinite()) throw ConfigError("exact data contains non-finite entries");
  if (delta_rel == 0.0) return {y, 0.0, 0.0};
  const double ynorm = y.norm();
  if (ynorm == 0.0) throw ConfigError("noise level undefined for zero data");

  Rng rng(seed);
  Vector xi(y.size());
  for (Index k = 0; k < y.size(); ++k) xi[k] = rng.normal();
  xi /= xi.norm();
  const double delta = delta_rel * ynorm;
  return {y + delta * xi, delta, delta_rel};
}

// ---------------------------------------------------------------------------
// Synthetic videos.

struct MovingRectangle {
  double background = 0.1;
  double foreground = 0.9;
  Index top = 0, left = 0, height = 0, width = 0;
};

/// Default rectangle placement for a rows x cols frame.
inline MovingRectangle default_rectangle(Index rows, Index cols) {
  return {0.1, 0.9, rows / 4, cols / 8, rows / 2, cols / 4};
}

/// Piecewise-constant frames; the rectangle moves one pixel right per frame
/// and wraps around horizontally.
inline BlockVector synthetic_video(std::size_t frames, Index rows, Index cols,
                                   std::optional<MovingRectangle> shape = std::nullopt) {
  if (rows < 8 || cols < 8) throw ConfigError("synthetic video frames must be at least 8x8");
  if (frames < 1) throw ConfigError("frame count must be at least 1");
  const MovingRectangle rect = shape.value_or(default_rectangle(rows, cols));
  std::vector<Vector> out;
  for (std::size_t f = 0; f < frames; ++f) {
    Image img = Image::Constant(rows, cols, rect.background);
    for (Index dc = 0; dc < rect.width; ++dc)
      for (Index dr = 0; dr < rect.height; ++dr) {
        const Index r = rect.top + dr;
        const Index c = (rect.left + Index(f) + dc) % cols;
        if (r < rows) img(r, c) = rect.foreground;
      }
    out.push_back(stack_columns(img));
  }
  return BlockVector(std::move(out));
}

}  // namespace rbcd
