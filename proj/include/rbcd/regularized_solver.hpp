#pragma once

#include <algorithm>
#include <vector>

#include "rbcd/core.hpp"
#include "rbcd/operators.hpp"
#include "rbcd/penalties.hpp"
#include "rbcd/solver.hpp"

namespace rbcd {

/// Iterate of the penalized scheme: the primal x lives in `base.x`, the dual
/// xi with xi in dR(x) alongside it.
struct RegIterationState {
  IterationState base;
  BlockVector xi;
  /// Per-block TV dual fields reused as warm starts by the next sub-solve.
  std::vector<TvDual> tv_duals;
  std::size_t tv_warnings = 0;
  /// Largest absolute TV duality gap returned by a sub-solve so far.
  double max_tv_gap = 0.0;

  BregmanPair pair() const { return {base.x, xi}; }
};

/// xi_0 = 0 and x_0 = argmin R, residual computed once from scratch.
inline RegIterationState reg_init(const BlockOperator& op, const DataVector& y_delta,
                                  const Penalty& penalty) {
  if (penalty.block_count() != op.block_count())
    throw ShapeError("penalty and operator disagree on the block count");
  RegIterationState s;
  s.xi = op.zeros();
  std::vector<Vector> x0;
  for (std::size_t i = 0; i < op.block_count(); ++i) {
    MinimizerResult m = penalty.block_minimizer(i, s.xi[i]);
    x0.push_back(std::move(m.z));
    s.tv_duals.push_back(std::move(m.dual));
  }
  s.base = make_state(op, y_delta, BlockVector(std::move(x0)));
  return s;
}

/// xi_{k+1,i} = xi_{k,i} - gamma_k A_i^* r_k, x_{k+1,i} = argmin_z R_i(z) - <xi_{k+1,i}, z>,
/// r_{k+1} = r_k + A_i (x_{k+1,i} - x_{k,i}).
inline void reg_rbcd_step(RegIterationState& state, const BlockOperator& op,
                          const Penalty& penalty, double gamma_k, std::size_t i) {
  IterationState& s = state.base;
  s.gamma_k = gamma_k;
  s.last_index = i;
  if (gamma_k != 0.0) {
    const Vector grad = op.adjoint_block(i, s.r);
    Vector xi_next = state.xi[i] - gamma_k * grad;
    if (!xi_next.allFinite()) throw DivergenceError(s.k, i);
    const TvDual* warm = i < state.tv_duals.size() ? &state.tv_duals[i] : nullptr;
    MinimizerResult m = penalty.block_minimizer(i, xi_next, warm);
    if (!m.converged) ++state.tv_warnings;
    state.max_tv_gap = std::max(state.max_tv_gap, m.gap);
    if (!m.z.allFinite()) throw DivergenceError(s.k, i);
    const Vector change = m.z - s.x[i];
    op.accumulate_block(i, change, s.r);
    if (!s.r.allFinite()) throw DivergenceError(s.k, i);
    s.x[i] = std::move(m.z);
    state.xi[i] = std::move(xi_next);
    if (i < state.tv_duals.size()) state.tv_duals[i] = std::move(m.dual);
  }
  ++s.k;
}

/// gamma = 2 kappa mu / ||A||^2 unless overridden, so mu < 2 keeps
/// gamma < 4 kappa / ||A||^2.
inline double resolve_reg_step_size(const BlockOperator& op, const SolverConfig& config) {
  if (config.gamma) return *config.gamma;
  const double norm = cached_operator_norm(op);
  if (!(norm > 0.0)) throw ConfigError("operator norm is zero");
  return 2.0 * Penalty::kappa * config.mu / (norm * norm);
}

/// Penalized block coordinate descent started from (xi, x) = (0, argmin R).
inline RunResult run_reg(const BlockOperator& op, const DataVector& y_delta, double delta,
                         const Penalty& penalty, const SolverConfig& config,
                         const BlockVector* reference = nullptr) {
  config.validate();
  if (!(delta >= 0.0)) throw ConfigError("noise level must be nonnegative");
  const double gamma = resolve_reg_step_size(op, config);
  RegIterationState state = reg_init(op, y_delta, penalty);
  RunResult result = detail::drive(
      op, state.base, delta, config, gamma, reference,
      [&](IterationState&, double g, std::size_t i) { reg_rbcd_step(state, op, penalty, g, i); });
  result.tv_warnings = state.tv_warnings;
  return result;
}

}  // namespace rbcd
