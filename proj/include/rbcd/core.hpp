#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace rbcd {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Element of the data space. Plain vector; finiteness is checked where it
/// enters solver state.
using DataVector = Vector;

/// Thrown when a vector does not conform to an operator's block layout.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Invalid user configuration (step size, stopping rule, geometry, ...).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Non-finite values appeared in an iterate or residual.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(std::size_t step, std::size_t block)
      : std::runtime_error("iteration diverged at step " + std::to_string(step) +
                           " (block " + std::to_string(block) + ")"),
        step_(step),
        block_(block) {}

  std::size_t step() const noexcept { return step_; }
  std::size_t block() const noexcept { return block_; }

 private:
  std::size_t step_;
  std::size_t block_;
};

inline bool all_finite(const Vector& v) { return v.allFinite(); }

/// An element x = (x_1, ..., x_b) of the product space X_1 x ... x X_b.
///
/// Blocks may have different lengths. Inner products and norms are those of
/// the product space, i.e. sums of the per-block quantities taken in
/// ascending block order.
class BlockVector {
 public:
  BlockVector() = default;
  explicit BlockVector(std::vector<Vector> blocks) : blocks_(std::move(blocks)) {}

  static BlockVector zeros(std::span<const Index> dims) {
    std::vector<Vector> blocks;
    blocks.reserve(dims.size());
    for (Index n : dims) blocks.emplace_back(Vector::Zero(n));
    return BlockVector(std::move(blocks));
  }

  /// Cuts a flat vector into consecutive blocks of the given lengths.
  static BlockVector split(const Vector& flat, std::span<const Index> dims) {
    Index total = 0;
    for (Index n : dims) total += n;
    if (total != flat.size())
      throw ShapeError("cannot split vector of length " + std::to_string(flat.size()) +
                       " into blocks totalling " + std::to_string(total));
    std::vector<Vector> blocks;
    blocks.reserve(dims.size());
    Index offset = 0;
    for (Index n : dims) {
      blocks.emplace_back(flat.segment(offset, n));
      offset += n;
    }
    return BlockVector(std::move(blocks));
  }

  std::size_t block_count() const noexcept { return blocks_.size(); }
  bool empty() const noexcept { return blocks_.empty(); }

  Vector& operator[](std::size_t i) { return blocks_[i]; }
  const Vector& operator[](std::size_t i) const { return blocks_[i]; }

  auto begin() { return blocks_.begin(); }
  auto end() { return blocks_.end(); }
  auto begin() const { return blocks_.begin(); }
  auto end() const { return blocks_.end(); }

  std::vector<Index> dims() const {
    std::vector<Index> d;
    d.reserve(blocks_.size());
    for (const auto& b : blocks_) d.push_back(b.size());
    return d;
  }

  Index total_size() const {
    Index n = 0;
    for (const auto& b : blocks_) n += b.size();
    return n;
  }

  Vector flatten() const {
    Vector flat(total_size());
    Index offset = 0;
    for (const auto& b : blocks_) {
      flat.segment(offset, b.size()) = b;
      offset += b.size();
    }
    return flat;
  }

  double dot(const BlockVector& other) const {
    check_same_shape(other);
    double s = 0.0;
    for (std::size_t i = 0; i < blocks_.size(); ++i) s += blocks_[i].dot(other.blocks_[i]);
    return s;
  }

  double squared_norm() const {
    double s = 0.0;
    for (const auto& b : blocks_) s += b.squaredNorm();
    return s;
  }

  double norm() const { return std::sqrt(squared_norm()); }

  bool all_finite() const {
    for (const auto& b : blocks_)
      if (!b.allFinite()) return false;
    return true;
  }

  BlockVector& operator+=(const BlockVector& other) {
    check_same_shape(other);
    for (std::size_t i = 0; i < blocks_.size(); ++i) blocks_[i] += other.blocks_[i];
    return *this;
  }

  BlockVector& operator-=(const BlockVector& other) {
    check_same_shape(other);
    for (std::size_t i = 0; i < blocks_.size(); ++i) blocks_[i] -= other.blocks_[i];
    return *this;
  }

  BlockVector& operator*=(double s) {
    for (auto& b : blocks_) b *= s;
    return *this;
  }

  friend BlockVector operator+(BlockVector a, const BlockVector& b) { return a += b; }
  friend BlockVector operator-(BlockVector a, const BlockVector& b) { return a -= b; }
  friend BlockVector operator*(double s, BlockVector a) { return a *= s; }

  friend bool operator==(const BlockVector& a, const BlockVector& b) {
    if (a.blocks_.size() != b.blocks_.size()) return false;
    for (std::size_t i = 0; i < a.blocks_.size(); ++i) {
      if (a.blocks_[i].size() != b.blocks_[i].size()) return false;
      if (a.blocks_[i] != b.blocks_[i]) return false;
    }
    return true;
  }

 private:
  void check_same_shape(const BlockVector& other) const {
    if (other.blocks_.size() != blocks_.size())
      throw ShapeError("block count mismatch: " + std::to_string(blocks_.size()) + " vs " +
                       std::to_string(other.blocks_.size()));
    for (std::size_t i = 0; i < blocks_.size(); ++i)
      if (blocks_[i].size() != other.blocks_[i].size())
        throw ShapeError("block " + std::to_string(i) + " length mismatch");
  }

  std::vector<Vector> blocks_;
};

}  // namespace rbcd
