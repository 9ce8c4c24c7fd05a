#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/SparseCore>

#include "rbcd/core.hpp"
#include "rbcd/operators.hpp"

namespace rbcd {

/// Parallel-beam acquisition over an n x n grid of unit pixels covering
/// [-n/2, n/2]^2.
///
/// For an angle theta the rays run along (-sin theta, cos theta) and sit at
/// signed offsets s_j = (j - (p-1)/2) * ray_spacing along (cos theta, sin theta).
/// Measurement row index is angle_index * p + j.
///
/// Pixels are addressed (row, col) with row 0 at the top (largest y) and
/// stacked column-major, so pixel (r, c) is unknown c * n + r.
struct RadonGeometry {
  Index n = 64;
  std::vector<double> angles_deg;
  Index rays_per_angle = 0;  // 0 selects round(sqrt(2) * n)
  double ray_spacing = 1.0;

  Index effective_rays() const {
    return rays_per_angle > 0 ? rays_per_angle
                              : static_cast<Index>(std::lround(std::numbers::sqrt2 * double(n)));
  }
  Index measurement_count() const { return effective_rays() * Index(angles_deg.size()); }

  /// `count` angles spaced evenly over [first, last], endpoints included.
  static std::vector<double> even_angles(double first, double last, Index count) {
    std::vector<double> a;
    if (count == 1) return {first};
    for (Index j = 0; j < count; ++j)
      a.push_back(first + (last - first) * double(j) / double(count - 1));
    return a;
  }
};

struct RaySegment {
  Index pixel;  // column-major unknown index
  double length;
};

namespace detail {

inline double snap_to_zero(double v) { return std::abs(v) < 1e-15 ? 0.0 : v; }

}  // namespace detail

/// Siddon traversal: exact intersection lengths of one ray with the grid.
inline std::vector<RaySegment> trace_ray(Index n, double angle_deg, double offset) {
  const double theta = angle_deg * std::numbers::pi / 180.0;
  const double c = detail::snap_to_zero(std::cos(theta));
  const double s = detail::snap_to_zero(std::sin(theta));
  const double x0 = offset * c, y0 = offset * s;
  const double dx = -s, dy = c;
  const double half = 0.5 * double(n);

  double t_lo = -std::numeric_limits<double>::infinity();
  double t_hi = std::numeric_limits<double>::infinity();
  auto clip_axis = [&](double origin, double dir) {
    if (dir == 0.0) {
      if (origin < -half || origin > half) t_lo = t_hi = 0.0;  // misses the grid
      return;
    }
    double a = (-half - origin) / dir, b = (half - origin) / dir;
    if (a > b) std::swap(a, b);
    t_lo = std::max(t_lo, a);
    t_hi = std::min(t_hi, b);
  };
  clip_axis(x0, dx);
  clip_axis(y0, dy);
  if (!(t_hi > t_lo)) return {};

  std::vector<double> ts{t_lo, t_hi};
  auto add_crossings = [&](double origin, double dir) {
    if (dir == 0.0) return;
    for (Index k = 0; k <= n; ++k) {
      const double t = (double(k) - half - origin) / dir;
      if (t > t_lo && t < t_hi) ts.push_back(t);
    }
  };
  add_crossings(x0, dx);
  add_crossings(y0, dy);
  std::sort(ts.begin(), ts.end());

  std::vector<RaySegment> segments;
  for (std::size_t k = 0; k + 1 < ts.size(); ++k) {
    const double len = ts[k + 1] - ts[k];
    if (len <= 1e-14) continue;
    const double tm = 0.5 * (ts[k] + ts[k + 1]);
    const auto col = static_cast<Index>(std::floor(x0 + tm * dx + half));
    const Index row = n - 1 - static_cast<Index>(std::floor(y0 + tm * dy + half));
    if (col < 0 || col >= n || row < 0 || row >= n) continue;
    segments.push_back({col * n + row, len});
  }
  return segments;
}

/// The full measurement matrix, one row per ray.
inline SparseRowMatrix radon_matrix(const RadonGeometry& g) {
  if (g.n < 1) throw ConfigError("grid side must be positive");
  if (g.angles_deg.empty()) throw ConfigError("at least one projection angle is required");
  if (!(g.ray_spacing > 0.0)) throw ConfigError("ray spacing must be positive");
  const Index p = g.effective_rays();
  if (p < 1) throw ConfigError("rays per angle must be positive");

  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(std::size_t(g.measurement_count() * 2 * g.n));
  for (std::size_t a = 0; a < g.angles_deg.size(); ++a) {
    for (Index j = 0; j < p; ++j) {
      const double offset = (double(j) - 0.5 * double(p - 1)) * g.ray_spacing;
      const Index row = Index(a) * p + j;
      for (const auto& seg : trace_ray(g.n, g.angles_deg[a], offset))
        triplets.emplace_back(row, seg.pixel, seg.length);
    }
  }
  SparseRowMatrix full(g.measurement_count(), g.n * g.n);
  full.setFromTriplets(triplets.begin(), triplets.end());
  return full;
}

class RadonOperator final : public SparseBlockOperator {
 public:
  RadonOperator(const RadonGeometry& geometry, std::size_t blocks)
      : SparseBlockOperator(split(geometry, blocks)), geometry_(geometry) {}

  std::string_view kind() const override { return "radon"; }
  const RadonGeometry& geometry() const noexcept { return geometry_; }

 private:
  static std::vector<SparseRowMatrix> split(const RadonGeometry& g, std::size_t blocks) {
    const Index pixels = g.n * g.n;
    if (blocks < 1 || pixels % Index(blocks) != 0)
      throw ConfigError("block count " + std::to_string(blocks) + " does not divide " +
                        std::to_string(pixels) + " pixels");
    const SparseRowMatrix full = radon_matrix(g);
    const Index width = pixels / Index(blocks);
    std::vector<SparseRowMatrix> out;
    for (std::size_t i = 0; i < blocks; ++i)
      out.emplace_back(full.middleCols(Index(i) * width, width));
    return out;
  }

  RadonGeometry geometry_;
};

/// Column-partitions the parallel-beam matrix into `blocks` equal blocks.
inline RadonOperator make_parallel_radon(const RadonGeometry& geometry, std::size_t blocks) {
  return RadonOperator(geometry, blocks);
}

}  // namespace rbcd
