#include <cmath>
#include <numbers>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "rbcd/rbcd.hpp"

using namespace rbcd;

namespace {

/// Independent oracle: Liang-Barsky clipping of the ray against every pixel.
Matrix radon_oracle(Index n, const std::vector<double>& angles, Index p, double spacing) {
  Matrix A = Matrix::Zero(Index(angles.size()) * p, n * n);
  const double half = 0.5 * double(n);
  for (std::size_t a = 0; a < angles.size(); ++a) {
    const double th = angles[a] * std::numbers::pi / 180.0;
    for (Index j = 0; j < p; ++j) {
      const double s = (double(j) - 0.5 * double(p - 1)) * spacing;
      const double px = s * std::cos(th), py = s * std::sin(th);
      const double dx = -std::sin(th), dy = std::cos(th);
      for (Index r = 0; r < n; ++r)
        for (Index c = 0; c < n; ++c) {
          const double x0 = double(c) - half, x1 = x0 + 1.0;
          const double y1 = half - double(r), y0 = y1 - 1.0;
          const double P[4] = {-dx, dx, -dy, dy};
          const double Q[4] = {px - x0, x1 - px, py - y0, y1 - py};
          double t0 = -1e300, t1 = 1e300;
          bool hit = true;
          for (int e = 0; e < 4; ++e) {
            if (P[e] == 0.0) {
              if (Q[e] < 0.0) hit = false;
              continue;
            }
            const double t = Q[e] / P[e];
            if (P[e] < 0.0) t0 = std::max(t0, t);
            else t1 = std::min(t1, t);
          }
          if (hit && t1 > t0) A(Index(a) * p + j, c * n + r) = t1 - t0;
        }
    }
  }
  return A;
}

/// Independent evaluation of the modified phantom at one point.
double phantom_oracle(double x, double y) {
  struct E { double A, a, b, x0, y0, deg; };
  const E table[10] = {{1.0, .69, .92, 0, 0, 0},          {-.8, .6624, .874, 0, -.0184, 0},
                       {-.2, .11, .31, .22, 0, -18},       {-.2, .16, .41, -.22, 0, 18},
                       {.1, .21, .25, 0, .35, 0},          {.1, .046, .046, 0, .1, 0},
                       {.1, .046, .046, 0, -.1, 0},        {.1, .046, .023, -.08, -.605, 0},
                       {.1, .023, .023, 0, -.606, 0},      {.1, .023, .046, .06, -.605, 0}};
  double v = 0.0;
  for (const E& e : table) {
    const double ph = e.deg * std::numbers::pi / 180.0;
    const double X = (x - e.x0) * std::cos(ph) + (y - e.y0) * std::sin(ph);
    const double Y = -(x - e.x0) * std::sin(ph) + (y - e.y0) * std::cos(ph);
    if (X * X / (e.a * e.a) + Y * Y / (e.b * e.b) <= 1.0) v += e.A;
  }
  return v;
}

double discrete_tv(const Image& img) {
  double tv = 0.0;
  for (Index c = 0; c < img.cols(); ++c)
    for (Index r = 0; r < img.rows(); ++r) {
      const double h = c + 1 < img.cols() ? img(r, c + 1) - img(r, c) : 0.0;
      const double v = r + 1 < img.rows() ? img(r + 1, c) - img(r, c) : 0.0;
      tv += std::sqrt(h * h + v * v);
    }
  return tv;
}

}  // namespace

TEST(TensorProduct, ScalarKernel) {
  const TensorProductOperator op = make_tensor_product(Matrix::Ones(1, 1), Matrix::Constant(1, 1, 2.0));
  EXPECT_EQ(op.block_count(), 1u);
  EXPECT_EQ(op.apply(BlockVector({Vector::Constant(1, 3.5)}))[0], 7.0);
  EXPECT_EQ(op.v_star(), 1.0);
}

TEST(TensorProduct, IdentityFactors) {
  const TensorProductOperator op = make_tensor_product(Matrix::Identity(3, 3), Matrix::Identity(2, 2));
  EXPECT_EQ(op.block_count(), 3u);
  EXPECT_EQ(op.data_dim(), 6);
  EXPECT_NEAR(operator_norm(op).value, 1.0, 1e-6);
  EXPECT_TRUE(op.v_full_column_rank());
}

TEST(TensorProduct, RankFlagAndShapes) {
  Matrix V(3, 2);
  V << 1, 2, 2, 4, 3, 6;
  EXPECT_FALSE(make_tensor_product(V, Matrix::Identity(2, 2)).v_full_column_rank());
  EXPECT_THROW(make_tensor_product(Matrix(0, 0), Matrix::Identity(2, 2)), ConfigError);
  EXPECT_THROW(make_tensor_product(Matrix::Identity(2, 2), Matrix(0, 3)), ConfigError);
}

TEST(TensorProduct, MatchesStackedKronecker) {
  Rng rng(12);
  const Matrix V = gaussian_matrix(5, 3, rng), K = gaussian_matrix(8, 6, rng);
  const TensorProductOperator op = make_tensor_product(V, K);
  Matrix kron(5 * 8, 3 * 6);
  for (Index l = 0; l < 5; ++l)
    for (Index i = 0; i < 3; ++i) kron.block(l * 8, i * 6, 8, 6) = V(l, i) * K;
  const BlockVector x({gaussian_vector(6, rng), gaussian_vector(6, rng), gaussian_vector(6, rng)});
  const Vector expect = kron * x.flatten();
  EXPECT_LE((op.apply(x) - expect).norm(), 1e-12 * expect.norm());
  EXPECT_TRUE(op.v_full_column_rank());
}

TEST(Radon, SinglePixelHorizontalRay) {
  const RadonGeometry g{1, {90.0}, 1, 1.0};
  const Matrix A = Matrix(radon_matrix(g));
  ASSERT_EQ(A.rows(), 1);
  ASSERT_EQ(A.cols(), 1);
  EXPECT_NEAR(A(0, 0), 1.0, 1e-15);
}

TEST(Radon, RayOutsideGridIsEmpty) {
  EXPECT_TRUE(trace_ray(2, 0.0, 5.0).empty());
  EXPECT_TRUE(trace_ray(4, 37.0, -3.1).empty());
  const RadonGeometry g{2, {0.0}, 3, 4.0};  // outer rays at +-4 miss the grid
  const Matrix A = Matrix(radon_matrix(g));
  EXPECT_EQ(A.row(0).norm(), 0.0);
  EXPECT_EQ(A.row(2).norm(), 0.0);
  EXPECT_NEAR(A.row(1).sum(), 2.0, 1e-14);
}

TEST(Radon, DiagonalThroughTwoByTwo) {
  // At 45 degrees the central ray runs along y = -x through the top-left and
  // bottom-right pixels, sqrt(2) in each.
  const auto segs = trace_ray(2, 45.0, 0.0);
  double total = 0.0;
  std::set<Index> pixels;
  for (const auto& s : segs) {
    total += s.length;
    pixels.insert(s.pixel);
    EXPECT_NEAR(s.length, std::numbers::sqrt2, 1e-12);
  }
  EXPECT_EQ(pixels, (std::set<Index>{0, 3}));
  EXPECT_NEAR(total, 2.0 * std::numbers::sqrt2, 1e-12);
}

TEST(Radon, MatchesClippingOracle) {
  for (Index n = 1; n <= 4; ++n) {
    const std::vector<std::vector<double>> angle_sets{
        {0.0, 45.0, 90.0, 135.0}, {30.0, 61.3, 133.7}, {1.0, 90.5, 179.0, 180.0}};
    for (const auto& angles : angle_sets) {
      const Index p = 2 * n;
      const double spacing = 0.37;
      const Matrix A = Matrix(radon_matrix(RadonGeometry{n, angles, p, spacing}));
      const Matrix oracle = radon_oracle(n, angles, p, spacing);
      EXPECT_LE((A - oracle).cwiseAbs().maxCoeff(), 1e-10) << "n=" << n;
    }
  }
}

TEST(Radon, RowsAreNonnegativeAndBounded) {
  const RadonGeometry g{16, RadonGeometry::even_angles(1, 180, 12), 0, 1.0};
  const SparseRowMatrix A = radon_matrix(g);
  EXPECT_EQ(A.rows(), g.measurement_count());
  EXPECT_EQ(g.effective_rays(), 23);
  for (Index r = 0; r < A.rows(); ++r) {
    double sum = 0.0;
    for (SparseRowMatrix::InnerIterator it(A, r); it; ++it) {
      EXPECT_GT(it.value(), 0.0);
      sum += it.value();
    }
    EXPECT_LE(sum, 16.0 * std::numbers::sqrt2 + 1e-12);
  }
}

TEST(Radon, BlockPartitionAndConfigErrors) {
  const RadonGeometry g{4, {10.0, 70.0}, 0, 1.0};
  const RadonOperator op = make_parallel_radon(g, 4);
  EXPECT_EQ(op.block_count(), 4u);
  for (Index d : op.block_dims()) EXPECT_EQ(d, 4);
  const Matrix full = Matrix(radon_matrix(g));
  EXPECT_EQ((dense_matrix(op) - full).norm(), 0.0);
  EXPECT_THROW(make_parallel_radon(g, 3), ConfigError);
  EXPECT_THROW(make_parallel_radon(RadonGeometry{4, {}, 0, 1.0}, 1), ConfigError);
}

TEST(Radon, EvenAnglesIncludeEndpoints) {
  const auto a = RadonGeometry::even_angles(1.0, 180.0, 60);
  ASSERT_EQ(a.size(), 60u);
  EXPECT_EQ(a.front(), 1.0);
  EXPECT_EQ(a.back(), 180.0);
}

TEST(SheppLogan, CornersZeroAndValuesFinite) {
  const Image img = shepp_logan(64);
  EXPECT_EQ(img(0, 0), 0.0);
  EXPECT_EQ(img(0, 63), 0.0);
  EXPECT_EQ(img(63, 0), 0.0);
  EXPECT_EQ(img(63, 63), 0.0);
  EXPECT_TRUE(img.allFinite());
  EXPECT_GE(img.minCoeff(), -1e-12);
  EXPECT_LE(img.maxCoeff(), 1.0 + 1e-12);
}

TEST(SheppLogan, CenterPixelMatchesDirectEvaluation) {
  const Image img = shepp_logan(256);
  const double oracle = phantom_oracle(0.0, 0.0);
  EXPECT_NEAR(oracle, 0.2, 1e-15);
  EXPECT_NEAR(img(128, 128), oracle, 1e-15);
  EXPECT_NEAR(img(127, 127), oracle, 1e-15);
  EXPECT_THROW(shepp_logan(0), ConfigError);
}

TEST(Cacti, ShiftRelationHolds) {
  const CactiProblem cp = make_cacti(6, 7, 9, 3);
  EXPECT_EQ(cp.masks.frames(), 6u);
  for (std::size_t i = 0; i + 1 < 6; ++i)
    for (Index r = 0; r < 7; ++r)
      for (Index c = 0; c < 9; ++c)
        EXPECT_EQ(cp.masks.masks[i + 1](r, c), cp.masks.masks[i](r, (c + 9 - 1) % 9));
}

TEST(Cacti, MaskMeanNearHalf) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const CactiProblem cp = make_cacti(1, 32, 32, seed);
    const double mean = cp.masks.masks[0].mean();
    EXPECT_NEAR(mean, 0.5, 3.0 / 32.0) << seed;
    for (Index k = 0; k < cp.masks.masks[0].size(); ++k) {
      const double v = cp.masks.masks[0].data()[k];
      EXPECT_TRUE(v == 0.0 || v == 1.0);
    }
  }
}

TEST(Cacti, AllOnesMaskIsIdentity) {
  const MaskOperator op = make_mask_operator(make_mask_stack(Image::Ones(4, 5), 1));
  Rng rng(4);
  const Vector x = gaussian_vector(20, rng);
  EXPECT_EQ(op.apply(BlockVector({x})), x);
}

TEST(Cacti, AllOnesVideoGivesCoverage) {
  const CactiProblem cp = make_cacti(5, 6, 8, 21);
  BlockVector ones = cp.op.zeros();
  for (auto& b : ones) b.setOnes();
  Vector coverage = Vector::Zero(48);
  for (const auto& m : cp.masks.masks) coverage += stack_columns(m);
  EXPECT_EQ(cp.op.apply(ones), coverage);
  EXPECT_EQ(cp.op.coverage(), coverage);
}

TEST(Cacti, RejectsNonBinaryMasks) {
  Image m = Image::Ones(3, 3);
  m(1, 1) = 0.5;
  EXPECT_THROW(make_mask_stack(m, 2), ConfigError);
  EXPECT_THROW(make_mask_stack(Image::Ones(3, 3), 0), ConfigError);
}

TEST(Noise, ZeroLevelIsIdentity) {
  const Vector y = Vector::LinSpaced(10, -1, 2);
  const NoisyData d = add_noise(y, 0.0, 3);
  EXPECT_EQ(d.y_delta, y);
  EXPECT_EQ(d.delta, 0.0);
}

TEST(Noise, ExactRelativeLevel) {
  Rng rng(5);
  const Vector y = gaussian_vector(300, rng);
  for (std::uint64_t seed : {1ull, 2ull, 99ull}) {
    const NoisyData d = add_noise(y, 0.01, seed);
    EXPECT_NEAR((d.y_delta - y).norm() / y.norm(), 0.01, 1e-14);
    EXPECT_NEAR(d.delta, 0.01 * y.norm(), 1e-14 * y.norm());
    EXPECT_EQ(d.delta_rel, 0.01);
  }
}

TEST(Noise, DeterministicPerSeed) {
  const Vector y = Vector::LinSpaced(50, 0, 1);
  EXPECT_EQ(add_noise(y, 0.05, 8).y_delta, add_noise(y, 0.05, 8).y_delta);
  EXPECT_NE(add_noise(y, 0.05, 8).y_delta, add_noise(y, 0.05, 9).y_delta);
}

TEST(Noise, Errors) {
  EXPECT_THROW(add_noise(Vector::Zero(4), 0.01, 1), ConfigError);
  EXPECT_THROW(add_noise(Vector::Ones(4), -0.1, 1), ConfigError);
  EXPECT_NO_THROW(add_noise(Vector::Zero(4), 0.0, 1));
}

TEST(SyntheticVideo, RectangleMovesOnePixelPerFrame) {
  const Index rows = 32, cols = 32;
  const MovingRectangle rect = default_rectangle(rows, cols);
  const BlockVector v = synthetic_video(8, rows, cols);
  ASSERT_EQ(v.block_count(), 8u);
  for (std::size_t f = 0; f < 8; ++f) {
    const Image img = unstack_columns(v[f], rows, cols);
    const Index left = rect.left + Index(f);
    EXPECT_EQ(img(rect.top, left), rect.foreground);
    EXPECT_EQ(img(rect.top, left - 1), rect.background);
    EXPECT_EQ(img(rect.top + rect.height - 1, left + rect.width - 1), rect.foreground);
    EXPECT_EQ(img(rect.top, left + rect.width), rect.background);
    std::set<double> values(v[f].data(), v[f].data() + v[f].size());
    EXPECT_LE(values.size(), 2u);
    EXPECT_GE(v[f].minCoeff(), 0.0);
    EXPECT_LE(v[f].maxCoeff(), 1.0);
  }
}

TEST(SyntheticVideo, TvMatchesPerimeterFormula) {
  // Forward differences with replicate boundary: an interior H x W rectangle
  // of contrast C has TV (2H + 2W - 2 + sqrt(2)) C.
  const Index rows = 24, cols = 40;
  const MovingRectangle rect = default_rectangle(rows, cols);
  const BlockVector v = synthetic_video(5, rows, cols);
  const double contrast = rect.foreground - rect.background;
  const double expect =
      (2.0 * double(rect.height) + 2.0 * double(rect.width) - 2.0 + std::numbers::sqrt2) * contrast;
  for (const auto& f : v) {
    EXPECT_NEAR(tv_value(f, rows, cols), expect, 1e-12);
    EXPECT_NEAR(discrete_tv(unstack_columns(f, rows, cols)), expect, 1e-12);
  }
}

TEST(SyntheticVideo, RejectsSmallFrames) {
  EXPECT_THROW(synthetic_video(2, 7, 16), ConfigError);
  EXPECT_THROW(synthetic_video(0, 8, 8), ConfigError);
}

TEST(Images, StackColumnsIsColumnMajor) {
  Image img(2, 3);
  img << 1, 2, 3, 4, 5, 6;
  Vector expect(6);
  expect << 1, 4, 2, 5, 3, 6;
  EXPECT_EQ(stack_columns(img), expect);
  EXPECT_EQ(unstack_columns(expect, 2, 3), img);
}
