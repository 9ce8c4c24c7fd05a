#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "rbcd/core.hpp"
#include "rbcd/random.hpp"

namespace rbcd {

using SparseRowMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

struct NormEstimate {
  double value = 0.0;
  bool converged = false;
  int iterations = 0;
};

/// A bounded linear map A x = sum_i A_i x_i from a product space into the
/// data space, exposed block by block.
///
/// Block indices are zero-based. Implementations are immutable after
/// construction except for the norm cache, which must be filled before the
/// operator is shared between threads.
class BlockOperator {
 public:
  virtual ~BlockOperator() = default;

  BlockOperator(const BlockOperator&) = default;
  BlockOperator& operator=(const BlockOperator&) = default;
  BlockOperator(BlockOperator&&) = default;
  BlockOperator& operator=(BlockOperator&&) = default;

  virtual std::string_view kind() const = 0;

  std::size_t block_count() const noexcept { return block_dims_.size(); }
  std::span<const Index> block_dims() const noexcept { return block_dims_; }
  Index block_dim(std::size_t i) const { return block_dims_.at(i); }
  Index data_dim() const noexcept { return data_dim_; }

  /// A_i x_i.
  DataVector apply_block(std::size_t i, const Vector& xi) const {
    check_block(i, xi);
    DataVector out = DataVector::Zero(data_dim_);
    add_apply_block(i, xi, out);
    return out;
  }

  /// out += A_i x_i, without allocating the intermediate.
  void accumulate_block(std::size_t i, const Vector& xi, DataVector& out) const {
    check_block(i, xi);
    if (out.size() != data_dim_) throw ShapeError("accumulator has wrong data dimension");
    add_apply_block(i, xi, out);
  }

  /// A_i^* r.
  Vector adjoint_block(std::size_t i, const DataVector& r) const {
    if (i >= block_count())
      throw ShapeError("block index " + std::to_string(i) + " out of range [0, " +
                       std::to_string(block_count()) + ")");
    if (r.size() != data_dim_)
      throw ShapeError("data vector has length " + std::to_string(r.size()) + ", expected " +
                       std::to_string(data_dim_));
    return do_adjoint_block(i, r);
  }

  /// sum_i A_i x_i, accumulated in ascending block order.
  DataVector apply(const BlockVector& x) const {
    check_conforming(x);
    DataVector out = DataVector::Zero(data_dim_);
    for (std::size_t i = 0; i < block_count(); ++i) add_apply_block(i, x[i], out);
    return out;
  }

  /// (A_1^* r, ..., A_b^* r).
  BlockVector adjoint(const DataVector& r) const {
    std::vector<Vector> blocks;
    blocks.reserve(block_count());
    for (std::size_t i = 0; i < block_count(); ++i) blocks.push_back(adjoint_block(i, r));
    return BlockVector(std::move(blocks));
  }

  void check_conforming(const BlockVector& x) const {
    if (x.block_count() != block_count())
      throw ShapeError("expected " + std::to_string(block_count()) + " blocks, got " +
                       std::to_string(x.block_count()));
    for (std::size_t i = 0; i < block_count(); ++i)
      if (x[i].size() != block_dims_[i])
        throw ShapeError("block " + std::to_string(i) + " has length " +
                         std::to_string(x[i].size()) + ", expected " +
                         std::to_string(block_dims_[i]));
  }

  BlockVector zeros() const { return BlockVector::zeros(block_dims_); }

  const std::optional<NormEstimate>& cached_norm() const noexcept { return norm_cache_; }
  void set_cached_norm(NormEstimate estimate) const { norm_cache_ = estimate; }

 protected:
  BlockOperator(std::vector<Index> block_dims, Index data_dim)
      : block_dims_(std::move(block_dims)), data_dim_(data_dim) {
    if (block_dims_.empty()) throw ConfigError("operator needs at least one block");
    for (Index n : block_dims_)
      if (n < 1) throw ConfigError("block dimensions must be positive");
    if (data_dim_ < 1) throw ConfigError("data dimension must be positive");
  }

  virtual void add_apply_block(std::size_t i, const Vector& xi, DataVector& out) const = 0;
  virtual Vector do_adjoint_block(std::size_t i, const DataVector& r) const = 0;

 private:
  void check_block(std::size_t i, const Vector& xi) const {
    if (i >= block_count())
      throw ShapeError("block index " + std::to_string(i) + " out of range [0, " +
                       std::to_string(block_count()) + ")");
    if (xi.size() != block_dims_[i])
      throw ShapeError("block " + std::to_string(i) + " has length " + std::to_string(xi.size()) +
                       ", expected " + std::to_string(block_dims_[i]));
  }

  std::vector<Index> block_dims_;
  Index data_dim_;
  mutable std::optional<NormEstimate> norm_cache_;
};

/// Blocks stored as dense m x n_i matrices.
class DenseBlockOperator final : public BlockOperator {
 public:
  explicit DenseBlockOperator(std::vector<Matrix> blocks)
      : BlockOperator(dims_of(blocks), blocks.empty() ? 0 : blocks.front().rows()),
        blocks_(std::move(blocks)) {
    for (const auto& b : blocks_)
      if (b.rows() != data_dim()) throw ShapeError("dense blocks must share the row count");
  }

  /// Splits the columns of `full` into consecutive blocks.
  static DenseBlockOperator from_columns(const Matrix& full, std::span<const Index> dims) {
    std::vector<Matrix> blocks;
    Index offset = 0;
    for (Index n : dims) {
      if (offset + n > full.cols()) throw ShapeError("block dimensions exceed matrix columns");
      blocks.emplace_back(full.middleCols(offset, n));
      offset += n;
    }
    if (offset != full.cols()) throw ShapeError("block dimensions do not cover all columns");
    return DenseBlockOperator(std::move(blocks));
  }

  std::string_view kind() const override { return "dense"; }
  const Matrix& block(std::size_t i) const { return blocks_.at(i); }

 protected:
  void add_apply_block(std::size_t i, const Vector& xi, DataVector& out) const override {
    out.noalias() += blocks_[i] * xi;
  }
  Vector do_adjoint_block(std::size_t i, const DataVector& r) const override {
    return blocks_[i].transpose() * r;
  }

 private:
  static std::vector<Index> dims_of(const std::vector<Matrix>& blocks) {
    std::vector<Index> d;
    for (const auto& b : blocks) d.push_back(b.cols());
    return d;
  }

  std::vector<Matrix> blocks_;
};

/// Blocks stored in compressed-row layout.
class SparseBlockOperator : public BlockOperator {
 public:
  explicit SparseBlockOperator(std::vector<SparseRowMatrix> blocks)
      : BlockOperator(dims_of(blocks), blocks.empty() ? 0 : blocks.front().rows()),
        blocks_(std::move(blocks)) {
    for (auto& b : blocks_) {
      if (b.rows() != data_dim()) throw ShapeError("sparse blocks must share the row count");
      b.makeCompressed();
    }
  }

  /// Splits the columns of `full` into consecutive blocks.
  static SparseBlockOperator from_columns(const SparseRowMatrix& full,
                                          std::span<const Index> dims) {
    std::vector<SparseRowMatrix> blocks;
    Index offset = 0;
    for (Index n : dims) {
      if (offset + n > full.cols()) throw ShapeError("block dimensions exceed matrix columns");
      blocks.emplace_back(full.middleCols(offset, n));
      offset += n;
    }
    if (offset != full.cols()) throw ShapeError("block dimensions do not cover all columns");
    return SparseBlockOperator(std::move(blocks));
  }

  std::string_view kind() const override { return "sparse"; }
  const SparseRowMatrix& block(std::size_t i) const { return blocks_.at(i); }

 protected:
  void add_apply_block(std::size_t i, const Vector& xi, DataVector& out) const override {
    out.noalias() += blocks_[i] * xi;
  }
  Vector do_adjoint_block(std::size_t i, const DataVector& r) const override {
    return blocks_[i].transpose() * r;
  }

 private:
  static std::vector<Index> dims_of(const std::vector<SparseRowMatrix>& blocks) {
    std::vector<Index> d;
    for (const auto& b : blocks) d.push_back(b.cols());
    return d;
  }

  std::vector<SparseRowMatrix> blocks_;
};

/// A_i z = (v_{1i} K z, ..., v_{di} K z), data laid out as d stacked copies
/// of the range of K.
class TensorProductOperator final : public BlockOperator {
 public:
  TensorProductOperator(Matrix V, Matrix K)
      : BlockOperator(std::vector<Index>(static_cast<std::size_t>(V.cols()), K.cols()),
                      V.rows() * K.rows()),
        V_(std::move(V)),
        K_(std::move(K)) {
    v_star_ = V_.colwise().squaredNorm().maxCoeff();
    // Pivots below 1e-10 of the leading pivot count as zero.
    Eigen::ColPivHouseholderQR<Matrix> qr(V_);
    qr.setThreshold(1e-10);
    full_column_rank_ = qr.rank() == V_.cols();
  }

  std::string_view kind() const override { return "tensor-product"; }

  const Matrix& V() const noexcept { return V_; }
  const Matrix& K() const noexcept { return K_; }
  /// max_i ||v_i||^2 over the columns of V.
  double v_star() const noexcept { return v_star_; }
  bool v_full_column_rank() const noexcept { return full_column_rank_; }

 protected:
  void add_apply_block(std::size_t i, const Vector& xi, DataVector& out) const override {
    const Vector kz = K_ * xi;
    const Index p = K_.rows();
    const auto col = static_cast<Index>(i);
    for (Index l = 0; l < V_.rows(); ++l) out.segment(l * p, p) += V_(l, col) * kz;
  }

  Vector do_adjoint_block(std::size_t i, const DataVector& r) const override {
    const Index p = K_.rows();
    const auto col = static_cast<Index>(i);
    Vector combined = Vector::Zero(p);
    for (Index l = 0; l < V_.rows(); ++l) combined += V_(l, col) * r.segment(l * p, p);
    return K_.transpose() * combined;
  }

 private:
  Matrix V_;
  Matrix K_;
  double v_star_ = 0.0;
  bool full_column_rank_ = false;
};

/// Diagonal mask actions: A_i x_i = M_i .* x_i. Each mask is a flat 0/1
/// vector with the same length as the data space.
class MaskOperator final : public BlockOperator {
 public:
  explicit MaskOperator(std::vector<Vector> masks)
      : BlockOperator(std::vector<Index>(masks.size(), masks.empty() ? 0 : masks.front().size()),
                      masks.empty() ? 0 : masks.front().size()),
        masks_(std::move(masks)) {}

  std::string_view kind() const override { return "mask"; }
  const Vector& mask(std::size_t i) const { return masks_.at(i); }

  /// Number of masks covering each pixel; A A^* is diag(coverage).
  Vector coverage() const {
    Vector c = Vector::Zero(data_dim());
    for (const auto& m : masks_) c += m.cwiseProduct(m);
    return c;
  }

 protected:
  void add_apply_block(std::size_t i, const Vector& xi, DataVector& out) const override {
    out.array() += masks_[i].array() * xi.array();
  }
  Vector do_adjoint_block(std::size_t i, const DataVector& r) const override {
    return masks_[i].cwiseProduct(r);
  }

 private:
  std::vector<Vector> masks_;
};

/// Materializes A_i column by column. Intended for tests and small problems.
inline Matrix dense_block(const BlockOperator& op, std::size_t i) {
  const Index n = op.block_dim(i);
  Matrix out(op.data_dim(), n);
  Vector e = Vector::Zero(n);
  for (Index j = 0; j < n; ++j) {
    e[j] = 1.0;
    out.col(j) = op.apply_block(i, e);
    e[j] = 0.0;
  }
  return out;
}

/// The full matrix [A_1, ..., A_b].
inline Matrix dense_matrix(const BlockOperator& op) {
  Index total = 0;
  for (Index n : op.block_dims()) total += n;
  Matrix out(op.data_dim(), total);
  Index offset = 0;
  for (std::size_t i = 0; i < op.block_count(); ++i) {
    out.middleCols(offset, op.block_dim(i)) = dense_block(op, i);
    offset += op.block_dim(i);
  }
  return out;
}

struct NormOptions {
  double tol = 1e-6;
  int max_iter = 1000;
  std::uint64_t seed = 0x5eed;
};

/// Estimates ||A|| by power iteration on A^*A from a seeded random start and
/// stores the estimate in the operator's cache.
///
/// The estimate approaches ||A|| from below; callers that need an upper
/// bound should scale it by (1 + tol).
inline NormEstimate operator_norm(const BlockOperator& op, const NormOptions& options = {}) {
  if (!(options.tol > 0.0)) throw ConfigError("norm tolerance must be positive");
  if (options.max_iter < 1) throw ConfigError("norm max_iter must be at least 1");

  Rng rng(options.seed);
  std::vector<Vector> blocks;
  for (Index n : op.block_dims()) {
    Vector v(n);
    for (Index j = 0; j < n; ++j) v[j] = rng.normal();
    blocks.push_back(std::move(v));
  }
  BlockVector v(std::move(blocks));
  v *= 1.0 / v.norm();

  NormEstimate est;
  double lambda = 0.0;
  for (int it = 1; it <= options.max_iter; ++it) {
    BlockVector w = op.adjoint(op.apply(v));
    const double next = w.norm();
    est.iterations = it;
    if (next == 0.0) {
      // v lies in the null space; ||A|| may still be positive but a zero
      // operator is the common case here.
      lambda = 0.0;
      est.converged = true;
      break;
    }
    const bool done = std::abs(next - lambda) <= options.tol * next;
    lambda = next;
    w *= 1.0 / next;
    v = std::move(w);
    if (done) {
      est.converged = true;
      break;
    }
  }
  est.value = std::sqrt(lambda);
  op.set_cached_norm(est);
  return est;
}

/// Cached ||A||, computing it with default options on first use.
inline double cached_operator_norm(const BlockOperator& op) {
  if (!op.cached_norm()) operator_norm(op);
  return op.cached_norm()->value;
}

}  // namespace rbcd
