#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "rbcd/core.hpp"
#include "rbcd/problems.hpp"

namespace rbcd {

/// 10 log10(peak^2 / MSE); +infinity for identical images.
inline double psnr(const Image& reference, const Image& test, double peak) {
  if (reference.rows() != test.rows() || reference.cols() != test.cols())
    throw ShapeError("psnr: image dims differ");
  if (!(peak > 0.0)) throw ConfigError("psnr: peak must be positive");
  const double mse = (reference - test).squaredNorm() / double(reference.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

struct SsimOptions {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
};

/// Normalized separable Gaussian taps.
inline std::vector<double> gaussian_taps(int size, double sigma) {
  std::vector<double> w(static_cast<std::size_t>(size));
  const double c = 0.5 * double(size - 1);
  double sum = 0.0;
  for (int k = 0; k < size; ++k) {
    const double d = double(k) - c;
    w[std::size_t(k)] = std::exp(-d * d / (2.0 * sigma * sigma));
    sum += w[std::size_t(k)];
  }
  for (double& v : w) v /= sum;
  return w;
}

namespace detail {

/// 'valid' correlation with the separable window.
inline Image filter_valid(const Image& img, const std::vector<double>& taps) {
  const Index n = Index(taps.size());
  const Index rows = img.rows() - n + 1, cols = img.cols() - n + 1;
  Image tmp(rows, img.cols());
  for (Index c = 0; c < img.cols(); ++c)
    for (Index r = 0; r < rows; ++r) {
      double s = 0.0;
      for (Index k = 0; k < n; ++k) s += taps[std::size_t(k)] * img(r + k, c);
      tmp(r, c) = s;
    }
  Image out(rows, cols);
  for (Index c = 0; c < cols; ++c)
    for (Index r = 0; r < rows; ++r) {
      double s = 0.0;
      for (Index k = 0; k < n; ++k) s += taps[std::size_t(k)] * tmp(r, c + k);
      out(r, c) = s;
    }
  return out;
}

}  // namespace detail

/// Mean structural similarity over all fully-contained Gaussian windows
/// (11x11, sigma 1.5, K1 = 0.01, K2 = 0.03, dynamic range `peak`).
inline double ssim(const Image& reference, const Image& test, double peak,
                   const SsimOptions& opt = {}) {
  if (reference.rows() != test.rows() || reference.cols() != test.cols())
    throw ShapeError("ssim: image dims differ");
  if (reference.rows() < opt.window || reference.cols() < opt.window)
    throw ShapeError("ssim: image smaller than the window");
  if (!(peak > 0.0)) throw ConfigError("ssim: peak must be positive");

  const auto taps = gaussian_taps(opt.window, opt.sigma);
  const double c1 = (opt.k1 * peak) * (opt.k1 * peak);
  const double c2 = (opt.k2 * peak) * (opt.k2 * peak);

  const Image mu_x = detail::filter_valid(reference, taps);
  const Image mu_y = detail::filter_valid(test, taps);
  const Image xx = detail::filter_valid(reference.cwiseProduct(reference), taps);
  const Image yy = detail::filter_valid(test.cwiseProduct(test), taps);
  const Image xy = detail::filter_valid(reference.cwiseProduct(test), taps);

  double total = 0.0;
  for (Index k = 0; k < mu_x.size(); ++k) {
    const double mx = mu_x.data()[k], my = mu_y.data()[k];
    const double sx = xx.data()[k] - mx * mx;
    const double sy = yy.data()[k] - my * my;
    const double sxy = xy.data()[k] - mx * my;
    total += ((2.0 * mx * my + c1) * (2.0 * sxy + c2)) /
             ((mx * mx + my * my + c1) * (sx + sy + c2));
  }
  return total / double(mu_x.size());
}

/// Per-frame mean of a metric over a video stored as one block per frame.
template <class Metric>
double mean_over_frames(const BlockVector& reference, const BlockVector& test, Index rows,
                        Index cols, Metric&& metric) {
  if (reference.block_count() != test.block_count())
    throw ShapeError("videos have different frame counts");
  double sum = 0.0;
  for (std::size_t f = 0; f < reference.block_count(); ++f)
    sum += metric(unstack_columns(reference[f], rows, cols), unstack_columns(test[f], rows, cols));
  return sum / double(reference.block_count());
}

}  // namespace rbcd
