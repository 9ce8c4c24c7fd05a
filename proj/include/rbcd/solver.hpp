#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <variant>
#include <vector>

#include "rbcd/core.hpp"
#include "rbcd/operators.hpp"
#include "rbcd/random.hpp"

namespace rbcd {

enum class IndexRule { uniform, cyclic };

inline std::string_view to_string(IndexRule r) {
  return r == IndexRule::uniform ? "uniform" : "cyclic";
}

/// Run exactly k_max steps.
struct AprioriStop {
  std::size_t k_max = 1000;
};

/// Stop at the first k with ||A x_k - y^delta|| <= tau * delta.
struct DiscrepancyStop {
  double tau = 1.1;
  std::size_t k_cap = 1'000'000;
};

/// Stop at the first k whose squared relative error against the reference
/// drops below `threshold`. Used for iteration-count studies with known truth.
struct TargetErrorStop {
  double threshold = 0.05;
  std::size_t k_cap = 1'000'000;
};

using StopRule = std::variant<AprioriStop, DiscrepancyStop, TargetErrorStop>;

enum class StopReason { k_max, discrepancy, cap, target };

inline std::string_view to_string(StopReason r) {
  switch (r) {
    case StopReason::k_max: return "k_max";
    case StopReason::discrepancy: return "discrepancy";
    case StopReason::cap: return "cap";
    case StopReason::target: return "target";
  }
  return "unknown";
}

struct SolverConfig {
  /// Step-size factor; gamma = mu / ||A||^2 unless `gamma` is set.
  double mu = 1.0;
  std::optional<double> gamma;
  StopRule stop = AprioriStop{};
  IndexRule index_rule = IndexRule::uniform;
  std::uint64_t seed = 0;
  /// History sampling stride; 0 records every step up to k = 1000 and every
  /// tenth step after that.
  std::size_t record_every = 0;

  void validate() const {
    if (gamma) {
      if (!(*gamma > 0.0) || !std::isfinite(*gamma)) throw ConfigError("gamma must be positive");
    } else if (!(mu > 0.0 && mu < 2.0)) {
      throw ConfigError("mu must lie in (0, 2)");
    }
    if (const auto* dp = std::get_if<DiscrepancyStop>(&stop)) {
      if (!(dp->tau > 1.0)) throw ConfigError("discrepancy factor tau must exceed 1");
      if (dp->k_cap < 1) throw ConfigError("discrepancy rule needs a positive step cap");
    }
    if (const auto* t = std::get_if<TargetErrorStop>(&stop)) {
      if (!(t->threshold > 0.0)) throw ConfigError("target error must be positive");
      if (t->k_cap < 1) throw ConfigError("target rule needs a positive step cap");
    }
  }

  bool records(std::size_t k) const {
    if (record_every > 0) return k % record_every == 0;
    return k <= 1000 || k % 10 == 0;
  }
};

struct IterationState {
  std::size_t k = 0;
  BlockVector x;
  /// Running residual A x - y^delta, maintained by the block recursion.
  DataVector r;
  std::optional<std::size_t> last_index;
  double gamma_k = 0.0;
};

inline IterationState make_state(const BlockOperator& op, const DataVector& y_delta,
                                 BlockVector x0) {
  op.check_conforming(x0);
  if (y_delta.size() != op.data_dim())
    throw ShapeError("data has length " + std::to_string(y_delta.size()) + ", operator expects " +
                     std::to_string(op.data_dim()));
  if (!y_delta.allFinite()) throw ConfigError("data contains non-finite entries");
  IterationState s;
  s.r = op.apply(x0) - y_delta;
  s.x = std::move(x0);
  return s;
}

struct HistoryPoint {
  std::size_t k = 0;
  double residual = 0.0;
  std::optional<double> rel_sq_error;
};

struct RunResult {
  std::size_t stop_index = 0;
  StopReason stop_reason = StopReason::k_max;
  BlockVector x_final;
  DataVector residual;
  std::vector<HistoryPoint> history;
  double gamma = 0.0;
  double operator_norm = 0.0;
  std::uint64_t seed = 0;
  std::string rng_algorithm{kRngAlgorithm};
  double wall_seconds = 0.0;
  std::size_t tv_warnings = 0;

  double final_residual_norm() const { return residual.norm(); }
};

/// Squared (or plain) relative error ||x - ref|| / ||ref||.
inline double relative_error(const BlockVector& reference, const BlockVector& x,
                             bool squared = true) {
  const double ref_sq = reference.squared_norm();
  if (ref_sq == 0.0) throw ConfigError("relative error against a zero reference");
  const double e = (x - reference).squared_norm() / ref_sq;
  return squared ? e : std::sqrt(e);
}

/// Zero-based block index for step k.
inline std::size_t select_index(IndexRule rule, std::size_t k, std::size_t blocks, Rng& rng) {
  if (blocks == 1) return 0;
  if (rule == IndexRule::cyclic) return k % blocks;
  return static_cast<std::size_t>(rng.uniform_index(blocks));
}

/// gamma while the discrepancy is above tau * delta, zero afterwards.
inline double discrepancy_step_size(double residual_norm, double tau, double delta,
                                    double gamma) {
  return residual_norm > tau * delta ? gamma : 0.0;
}

/// x_{k+1,i} = x_{k,i} - gamma_k A_i^* r_k and
/// r_{k+1} = r_k + A_i (x_{k+1,i} - x_{k,i}); other blocks unchanged.
inline void rbcd_step(IterationState& state, const BlockOperator& op, double gamma_k,
                      std::size_t i) {
  state.gamma_k = gamma_k;
  state.last_index = i;
  if (gamma_k != 0.0) {
    const Vector grad = op.adjoint_block(i, state.r);
    Vector updated = state.x[i] - gamma_k * grad;
    const Vector change = updated - state.x[i];
    if (!updated.allFinite()) throw DivergenceError(state.k, i);
    op.accumulate_block(i, change, state.r);
    if (!state.r.allFinite()) throw DivergenceError(state.k, i);
    state.x[i] = std::move(updated);
  }
  ++state.k;
}

/// Step size used by `run`: the override if present, else mu / ||A||^2.
inline double resolve_step_size(const BlockOperator& op, const SolverConfig& config) {
  if (config.gamma) return *config.gamma;
  const double norm = cached_operator_norm(op);
  if (!(norm > 0.0)) throw ConfigError("operator norm is zero");
  return config.mu / (norm * norm);
}

namespace detail {

/// Shared driver for the plain and regularized iterations. `step` performs
/// one block update on the state.
template <class Step>
RunResult drive(const BlockOperator& op, IterationState& state, double delta,
                const SolverConfig& config, double gamma, const BlockVector* reference,
                Step&& step) {
  const auto started = std::chrono::steady_clock::now();
  RunResult result;
  result.gamma = gamma;
  result.seed = config.seed;
  result.operator_norm = op.cached_norm() ? op.cached_norm()->value : 0.0;

  const auto* dp = std::get_if<DiscrepancyStop>(&config.stop);
  const auto* apriori = std::get_if<AprioriStop>(&config.stop);
  const auto* target = std::get_if<TargetErrorStop>(&config.stop);
  if (target && !reference) throw ConfigError("target-error stopping needs a reference solution");
  if (reference) op.check_conforming(*reference);

  Rng rng(config.seed);
  const std::size_t blocks = op.block_count();
  std::optional<std::size_t> last_recorded;

  for (;;) {
    const double rnorm = state.r.norm();
    std::optional<double> err;
    const bool record = config.records(state.k);
    if (reference && (record || target)) err = relative_error(*reference, state.x);
    if (record) {
      result.history.push_back({state.k, rnorm, err});
      last_recorded = state.k;
    }

    if (dp) {
      if (rnorm <= dp->tau * delta) {
        result.stop_reason = StopReason::discrepancy;
        break;
      }
      if (state.k >= dp->k_cap) {
        result.stop_reason = StopReason::cap;
        break;
      }
    } else if (apriori) {
      if (state.k >= apriori->k_max) {
        result.stop_reason = StopReason::k_max;
        break;
      }
    } else if (target) {
      if (*err < target->threshold) {
        result.stop_reason = StopReason::target;
        break;
      }
      if (state.k >= target->k_cap) {
        result.stop_reason = StopReason::cap;
        break;
      }
    }

    const std::size_t i = select_index(config.index_rule, state.k, blocks, rng);
    step(state, gamma, i);
  }

  if (last_recorded != state.k) {
    std::optional<double> err;
    if (reference) err = relative_error(*reference, state.x);
    result.history.push_back({state.k, state.r.norm(), err});
  }
  result.stop_index = state.k;
  result.x_final = state.x;
  result.residual = state.r;
  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

}  // namespace detail

/// Randomized (or cyclic) block coordinate descent from x0, with a priori,
/// discrepancy-principle or target-error stopping.
inline RunResult run(const BlockOperator& op, const DataVector& y_delta, double delta,
                     const BlockVector& x0, const SolverConfig& config,
                     const BlockVector* reference = nullptr) {
  config.validate();
  if (!(delta >= 0.0)) throw ConfigError("noise level must be nonnegative");
  const double gamma = resolve_step_size(op, config);
  IterationState state = make_state(op, y_delta, x0);
  return detail::drive(op, state, delta, config, gamma, reference,
                       [&op](IterationState& s, double g, std::size_t i) { rbcd_step(s, op, g, i); });
}

// ---------------------------------------------------------------------------
// Monte Carlo.

struct MonteCarloResult {
  std::vector<std::size_t> k;
  std::vector<double> mean;
  std::vector<double> stddev;
  std::vector<std::size_t> count;  // runs contributing at each k
  std::size_t runs_ok = 0;
  std::vector<std::size_t> failed_runs;
  std::vector<std::uint64_t> seeds;
};

/// Runs `run_with_seed(derive_seed(master_seed, r))` for r = 0..runs-1 and
/// aggregates the squared relative error trajectories per recorded step.
///
/// Child runs may execute on `threads` workers; aggregation always follows
/// ascending run index. Runs that throw DivergenceError are reported in
/// `failed_runs` and excluded.
inline MonteCarloResult monte_carlo(const std::function<RunResult(std::uint64_t)>& run_with_seed,
                                    std::size_t runs, std::uint64_t master_seed,
                                    unsigned threads = 1) {
  if (runs < 1) throw ConfigError("monte carlo needs at least one run");
  MonteCarloResult out;
  for (std::size_t r = 0; r < runs; ++r) out.seeds.push_back(derive_seed(master_seed, r));

  std::vector<std::optional<RunResult>> results(runs);
  auto work = [&](std::size_t r) {
    try {
      results[r] = run_with_seed(out.seeds[r]);
    } catch (const DivergenceError&) {
      results[r].reset();
    }
  };
  if (threads <= 1) {
    for (std::size_t r = 0; r < runs; ++r) work(r);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t)
      pool.emplace_back([&] {
        for (std::size_t r = next++; r < runs; r = next++) work(r);
      });
    for (auto& th : pool) th.join();
  }

  std::map<std::size_t, std::vector<double>> samples;
  for (std::size_t r = 0; r < runs; ++r) {
    if (!results[r]) {
      out.failed_runs.push_back(r);
      continue;
    }
    ++out.runs_ok;
    for (const auto& h : results[r]->history)
      if (h.rel_sq_error) samples[h.k].push_back(*h.rel_sq_error);
  }
  for (const auto& [k, v] : samples) {
    double sum = 0.0;
    for (double e : v) sum += e;
    const double mean = sum / double(v.size());
    double ss = 0.0;
    for (double e : v) ss += (e - mean) * (e - mean);
    out.k.push_back(k);
    out.mean.push_back(mean);
    out.stddev.push_back(v.size() > 1 ? std::sqrt(ss / double(v.size() - 1)) : 0.0);
    out.count.push_back(v.size());
  }
  return out;
}

}  // namespace rbcd
