#pragma once

#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "rbcd/core.hpp"
#include "rbcd/tv.hpp"

namespace rbcd {

enum class PenaltyKind { quadratic, quadratic_nonneg, quadratic_tv };

inline std::string_view to_string(PenaltyKind k) {
  switch (k) {
    case PenaltyKind::quadratic: return "quadratic";
    case PenaltyKind::quadratic_nonneg: return "quadratic-nonneg";
    case PenaltyKind::quadratic_tv: return "quadratic-tv";
  }
  return "unknown";
}

inline PenaltyKind penalty_kind_from_string(std::string_view s) {
  if (s == "quadratic") return PenaltyKind::quadratic;
  if (s == "quadratic-nonneg") return PenaltyKind::quadratic_nonneg;
  if (s == "quadratic-tv") return PenaltyKind::quadratic_tv;
  throw ConfigError("unknown penalty kind '" + std::string(s) + "'");
}

/// R_i for one block: 1/2 ||z||^2, optionally plus the indicator of z >= 0 or
/// lambda * TV(z) on a rows x cols frame.
struct BlockPenalty {
  PenaltyKind kind = PenaltyKind::quadratic;
  double lambda = 0.0;
  Index rows = 0;
  Index cols = 0;
};

/// Value of R that may be +infinity outside its domain. The flag is used
/// instead of a floating-point infinity.
struct PenaltyValue {
  double value = 0.0;
  bool infinite = false;
};

struct MinimizerResult {
  Vector z;
  bool converged = true;
  double gap = 0.0;
  TvDual dual;  // populated for the TV kind
};

/// Separable strongly convex penalty R(x) = sum_i R_i(x_i).
class Penalty {
 public:
  /// Strong convexity modulus shared by every built-in kind.
  static constexpr double kappa = 0.5;
  static constexpr double kNonnegSlack = 1e-12;

  explicit Penalty(std::vector<BlockPenalty> blocks, TvOptions tv = {})
      : blocks_(std::move(blocks)), tv_(tv) {
    for (const auto& b : blocks_) {
      if (!(b.lambda >= 0.0)) throw ConfigError("penalty weight must be nonnegative");
      if (b.kind == PenaltyKind::quadratic_tv && (b.rows < 1 || b.cols < 1))
        throw ConfigError("TV penalty needs positive frame dims");
    }
  }

  static Penalty quadratic(std::size_t blocks) {
    return Penalty(std::vector<BlockPenalty>(blocks, BlockPenalty{}));
  }
  static Penalty nonneg(std::size_t blocks) {
    return Penalty(std::vector<BlockPenalty>(blocks, {PenaltyKind::quadratic_nonneg, 0.0, 0, 0}));
  }
  static Penalty total_variation(std::size_t blocks, double lambda, Index rows, Index cols,
                                 TvOptions tv = {}) {
    return Penalty(
        std::vector<BlockPenalty>(blocks, {PenaltyKind::quadratic_tv, lambda, rows, cols}), tv);
  }

  std::size_t block_count() const noexcept { return blocks_.size(); }
  const BlockPenalty& block(std::size_t i) const { return blocks_.at(i); }
  const TvOptions& tv_options() const noexcept { return tv_; }
  void set_tv_options(TvOptions tv) { tv_ = tv; }

  /// True when every block is the plain quadratic.
  bool is_quadratic() const {
    for (const auto& b : blocks_)
      if (b.kind != PenaltyKind::quadratic) return false;
    return true;
  }

  /// argmin_z R_i(z) - <xi, z>.
  MinimizerResult block_minimizer(std::size_t i, const Vector& xi,
                                  const TvDual* warm_start = nullptr) const {
    const BlockPenalty& p = block(i);
    check_block(p, xi);
    switch (p.kind) {
      case PenaltyKind::quadratic: return {xi, true, 0.0, {}};
      case PenaltyKind::quadratic_nonneg: return {xi.cwiseMax(0.0), true, 0.0, {}};
      case PenaltyKind::quadratic_tv: {
        // R_i(z) - <xi, z> = 1/2 ||z - xi||^2 + lambda TV(z) - 1/2 ||xi||^2.
        TvResult r = tv_denoise(xi, p.rows, p.cols, p.lambda, tv_, warm_start);
        return {std::move(r.z), r.converged, r.gap, std::move(r.dual)};
      }
    }
    throw ConfigError("unknown penalty kind");
  }

  PenaltyValue block_value(std::size_t i, const Vector& z) const {
    const BlockPenalty& p = block(i);
    check_block(p, z);
    const double quad = 0.5 * z.squaredNorm();
    switch (p.kind) {
      case PenaltyKind::quadratic: return {quad, false};
      case PenaltyKind::quadratic_nonneg:
        if ((z.array() < -kNonnegSlack).any()) return {0.0, true};
        return {quad, false};
      case PenaltyKind::quadratic_tv:
        return {quad + p.lambda * tv_value(z, p.rows, p.cols), false};
    }
    return {0.0, true};
  }

  PenaltyValue value(const BlockVector& x) const {
    check_blocks(x);
    PenaltyValue total;
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      const PenaltyValue v = block_value(i, x[i]);
      if (v.infinite) return {0.0, true};
      total.value += v.value;
    }
    return total;
  }

  /// x = (block_minimizer(xi_1), ..., block_minimizer(xi_b)).
  BlockVector minimizer(const BlockVector& xi) const {
    check_blocks(xi);
    std::vector<Vector> out;
    for (std::size_t i = 0; i < blocks_.size(); ++i) out.push_back(block_minimizer(i, xi[i]).z);
    return BlockVector(std::move(out));
  }

 private:
  static void check_block(const BlockPenalty& p, const Vector& z) {
    if (p.kind == PenaltyKind::quadratic_tv && z.size() != p.rows * p.cols)
      throw ShapeError("TV block length " + std::to_string(z.size()) + " does not match frame " +
                       std::to_string(p.rows) + "x" + std::to_string(p.cols));
  }

  void check_blocks(const BlockVector& x) const {
    if (x.block_count() != blocks_.size())
      throw ShapeError("penalty has " + std::to_string(blocks_.size()) + " blocks, vector has " +
                       std::to_string(x.block_count()));
  }

  std::vector<BlockPenalty> blocks_;
  TvOptions tv_;
};

inline PenaltyValue penalty_value(const Penalty& penalty, const BlockVector& x) {
  return penalty.value(x);
}

/// A primal point together with a subgradient xi in dR(x).
struct BregmanPair {
  BlockVector x;
  BlockVector xi;
};

/// D_R^xi(x_bar, x) = R(x_bar) - R(x) - <xi, x_bar - x>.
///
/// Returns +infinity when x_bar lies outside the domain of R.
inline double bregman_distance(const Penalty& penalty, const BlockVector& x_bar,
                               const BregmanPair& pair) {
  const PenaltyValue r_bar = penalty.value(x_bar);
  if (r_bar.infinite) return std::numeric_limits<double>::infinity();
  const PenaltyValue r = penalty.value(pair.x);
  if (r.infinite) throw ConfigError("Bregman pair lies outside the penalty domain");
  return r_bar.value - r.value - pair.xi.dot(x_bar - pair.x);
}

}  // namespace rbcd
