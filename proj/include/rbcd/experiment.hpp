#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rbcd/core.hpp"
#include "rbcd/io.hpp"
#include "rbcd/metrics.hpp"
#include "rbcd/operators.hpp"
#include "rbcd/penalties.hpp"
#include "rbcd/problems.hpp"
#include "rbcd/radon.hpp"
#include "rbcd/regularized_solver.hpp"
#include "rbcd/solver.hpp"
#include "rbcd/tv.hpp"

namespace rbcd {

using json = nlohmann::json;

enum class ProblemKind { synthetic_dense, tensor_product, ct, cacti };

inline std::string_view to_string(ProblemKind k) {
  switch (k) {
    case ProblemKind::synthetic_dense: return "synthetic-dense";
    case ProblemKind::tensor_product: return "tensor-product";
    case ProblemKind::ct: return "ct";
    case ProblemKind::cacti: return "cacti";
  }
  return "unknown";
}

inline ProblemKind problem_kind_from_string(std::string_view s) {
  if (s == "synthetic-dense") return ProblemKind::synthetic_dense;
  if (s == "tensor-product") return ProblemKind::tensor_product;
  if (s == "ct") return ProblemKind::ct;
  if (s == "cacti") return ProblemKind::cacti;
  throw ConfigError("unknown problem kind '" + std::string(s) + "'");
}

/// Problem parameters. Only the fields relevant to `kind` are serialized.
struct ProblemSpec {
  ProblemKind kind = ProblemKind::ct;
  std::size_t blocks = 4;  // block count b (frames for cacti, columns of V for tensor-product)
  std::uint64_t seed = 1;  // masks, random matrices and random truths

  // ct
  Index n = 64;
  Index angles = 60;
  double angle_first = 1.0;
  double angle_last = 180.0;
  Index rays_per_angle = 0;

  // cacti
  Index rows = 32;
  Index cols = 32;

  // synthetic-dense: m x (blocks * block_size) Gaussian matrix
  Index m = 40;
  Index block_size = 10;

  // tensor-product: V is d x blocks, K is p x q
  Index d = 5;
  Index p = 8;
  Index q = 6;
};

struct NoiseSpec {
  double delta_rel = 0.0;
  std::uint64_t seed = 1;
};

struct PenaltySpec {
  PenaltyKind kind = PenaltyKind::quadratic;
  double lambda = 0.0;
  TvOptions tv{};
};

/// Everything needed to reproduce one run.
struct ExperimentSpec {
  ProblemSpec problem;
  NoiseSpec noise;
  SolverConfig solver;
  /// Absent: plain iteration. Present: penalized iteration with this R.
  std::optional<PenaltySpec> penalty;
  std::string output_dir = "out";
};

// ---------------------------------------------------------------------------
// JSON.

inline json stop_to_json(const StopRule& stop) {
  if (const auto* a = std::get_if<AprioriStop>(&stop)) return {{"rule", "apriori"}, {"k_max", a->k_max}};
  if (const auto* d = std::get_if<DiscrepancyStop>(&stop))
    return {{"rule", "dp"}, {"tau", d->tau}, {"k_cap", d->k_cap}};
  const auto& t = std::get<TargetErrorStop>(stop);
  return {{"rule", "target"}, {"threshold", t.threshold}, {"k_cap", t.k_cap}};
}

inline StopRule stop_from_json(const json& j) {
  const std::string rule = j.at("rule").get<std::string>();
  if (rule == "apriori") return AprioriStop{j.at("k_max").get<std::size_t>()};
  if (rule == "dp")
    return DiscrepancyStop{j.at("tau").get<double>(), j.value("k_cap", std::size_t{1'000'000})};
  if (rule == "target")
    return TargetErrorStop{j.at("threshold").get<double>(),
                           j.value("k_cap", std::size_t{1'000'000})};
  throw ConfigError("unknown stop rule '" + rule + "'");
}

inline json to_json(const ExperimentSpec& s) {
  const ProblemSpec& p = s.problem;
  json problem = {{"kind", std::string(to_string(p.kind))}, {"blocks", p.blocks}, {"seed", p.seed}};
  switch (p.kind) {
    case ProblemKind::ct:
      problem["n"] = p.n;
      problem["angles"] = p.angles;
      problem["angle_first"] = p.angle_first;
      problem["angle_last"] = p.angle_last;
      problem["rays_per_angle"] = p.rays_per_angle;
      break;
    case ProblemKind::cacti:
      problem["rows"] = p.rows;
      problem["cols"] = p.cols;
      break;
    case ProblemKind::synthetic_dense:
      problem["m"] = p.m;
      problem["block_size"] = p.block_size;
      break;
    case ProblemKind::tensor_product:
      problem["d"] = p.d;
      problem["p"] = p.p;
      problem["q"] = p.q;
      break;
  }
  json solver = {{"mu", s.solver.mu},
                 {"gamma", s.solver.gamma ? json(*s.solver.gamma) : json(nullptr)},
                 {"stop", stop_to_json(s.solver.stop)},
                 {"index_rule", std::string(to_string(s.solver.index_rule))},
                 {"seed", s.solver.seed},
                 {"record_every", s.solver.record_every}};
  json penalty = nullptr;
  if (s.penalty)
    penalty = {{"kind", std::string(to_string(s.penalty->kind))},
               {"lambda", s.penalty->lambda},
               {"tv", {{"tol", s.penalty->tv.tol}, {"max_iter", s.penalty->tv.max_iter}}}};
  return {{"problem", problem},
          {"noise", {{"delta_rel", s.noise.delta_rel}, {"seed", s.noise.seed}}},
          {"solver", solver},
          {"penalty", penalty},
          {"output_dir", s.output_dir}};
}

/// Parses a spec; missing fields keep their defaults. A meta.json written by
/// `run_experiment` is accepted as well (its "spec" member is used).
inline ExperimentSpec spec_from_json(const json& in) {
  const json& j = in.contains("spec") && in.at("spec").is_object() ? in.at("spec") : in;
  ExperimentSpec s;
  try {
    if (j.contains("problem")) {
      const json& p = j.at("problem");
      ProblemSpec& ps = s.problem;
      if (p.contains("kind")) ps.kind = problem_kind_from_string(p.at("kind").get<std::string>());
      ps.blocks = p.value("blocks", ps.blocks);
      ps.seed = p.value("seed", ps.seed);
      ps.n = p.value("n", ps.n);
      ps.angles = p.value("angles", ps.angles);
      ps.angle_first = p.value("angle_first", ps.angle_first);
      ps.angle_last = p.value("angle_last", ps.angle_last);
      ps.rays_per_angle = p.value("rays_per_angle", ps.rays_per_angle);
      ps.rows = p.value("rows", ps.rows);
      ps.cols = p.value("cols", ps.cols);
      ps.m = p.value("m", ps.m);
      ps.block_size = p.value("block_size", ps.block_size);
      ps.d = p.value("d", ps.d);
      ps.p = p.value("p", ps.p);
      ps.q = p.value("q", ps.q);
    }
    if (j.contains("noise")) {
      s.noise.delta_rel = j.at("noise").value("delta_rel", s.noise.delta_rel);
      s.noise.seed = j.at("noise").value("seed", s.noise.seed);
    }
    if (j.contains("solver")) {
      const json& v = j.at("solver");
      s.solver.mu = v.value("mu", s.solver.mu);
      if (v.contains("gamma") && !v.at("gamma").is_null()) s.solver.gamma = v.at("gamma").get<double>();
      if (v.contains("stop")) s.solver.stop = stop_from_json(v.at("stop"));
      if (v.contains("index_rule")) {
        const std::string r = v.at("index_rule").get<std::string>();
        if (r == "uniform") s.solver.index_rule = IndexRule::uniform;
        else if (r == "cyclic") s.solver.index_rule = IndexRule::cyclic;
        else throw ConfigError("unknown index rule '" + r + "'");
      }
      s.solver.seed = v.value("seed", s.solver.seed);
      s.solver.record_every = v.value("record_every", s.solver.record_every);
    }
    if (j.contains("penalty") && !j.at("penalty").is_null()) {
      const json& p = j.at("penalty");
      PenaltySpec ps;
      ps.kind = penalty_kind_from_string(p.at("kind").get<std::string>());
      ps.lambda = p.value("lambda", 0.0);
      if (p.contains("tv")) {
        ps.tv.tol = p.at("tv").value("tol", ps.tv.tol);
        ps.tv.max_iter = p.at("tv").value("max_iter", ps.tv.max_iter);
      }
      s.penalty = ps;
    }
    s.output_dir = j.value("output_dir", s.output_dir);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed experiment spec: ") + e.what());
  }
  return s;
}

inline std::string normalized_spec_text(const ExperimentSpec& s) { return to_json(s).dump(2) + "\n"; }

// ---------------------------------------------------------------------------
// Problem construction.

/// A concrete instance: operator, ground truth, exact and noisy data.
struct ProblemInstance {
  std::unique_ptr<BlockOperator> op;
  BlockVector truth;
  DataVector y_exact;
  NoisyData data;
  /// Image geometry of the unknown: a video stores one rows x cols frame per
  /// block; otherwise the flattened unknown is one rows x cols image.
  Index image_rows = 0;
  Index image_cols = 0;
  bool video = false;
  json info = json::object();

  std::vector<Image> images(const BlockVector& x) const {
    if (image_rows == 0) return {};
    if (video) {
      std::vector<Image> out;
      for (const auto& f : x) out.push_back(unstack_columns(f, image_rows, image_cols));
      return out;
    }
    return {unstack_columns(x.flatten(), image_rows, image_cols)};
  }
};

inline Matrix gaussian_matrix(Index rows, Index cols, Rng& rng) {
  Matrix m(rows, cols);
  for (Index c = 0; c < cols; ++c)
    for (Index r = 0; r < rows; ++r) m(r, c) = rng.normal();
  return m;
}

inline Vector gaussian_vector(Index n, Rng& rng) {
  Vector v(n);
  for (Index k = 0; k < n; ++k) v[k] = rng.normal();
  return v;
}

inline ProblemInstance build_problem(const ProblemSpec& p, const NoiseSpec& noise) {
  if (p.blocks < 1) throw ConfigError("block count must be at least 1");
  ProblemInstance inst;
  Rng rng(p.seed);
  switch (p.kind) {
    case ProblemKind::synthetic_dense: {
      if (p.m < 1 || p.block_size < 1) throw ConfigError("dense problem dims must be positive");
      std::vector<Matrix> blocks;
      std::vector<Vector> truth;
      for (std::size_t i = 0; i < p.blocks; ++i) blocks.push_back(gaussian_matrix(p.m, p.block_size, rng));
      for (std::size_t i = 0; i < p.blocks; ++i) truth.push_back(gaussian_vector(p.block_size, rng));
      inst.op = std::make_unique<DenseBlockOperator>(std::move(blocks));
      inst.truth = BlockVector(std::move(truth));
      break;
    }
    case ProblemKind::tensor_product: {
      if (p.d < 1 || p.p < 1 || p.q < 1) throw ConfigError("tensor-product dims must be positive");
      Matrix V = gaussian_matrix(p.d, Index(p.blocks), rng);
      Matrix K = gaussian_matrix(p.p, p.q, rng);
      auto op = std::make_unique<TensorProductOperator>(make_tensor_product(std::move(V), std::move(K)));
      inst.info["v_star"] = op->v_star();
      inst.info["v_full_column_rank"] = op->v_full_column_rank();
      std::vector<Vector> truth;
      for (std::size_t i = 0; i < p.blocks; ++i) truth.push_back(gaussian_vector(p.q, rng));
      inst.op = std::move(op);
      inst.truth = BlockVector(std::move(truth));
      break;
    }
    case ProblemKind::ct: {
      if (p.angles < 1) throw ConfigError("CT needs at least one angle");
      RadonGeometry g{p.n, RadonGeometry::even_angles(p.angle_first, p.angle_last, p.angles),
                      p.rays_per_angle, 1.0};
      auto op = std::make_unique<RadonOperator>(make_parallel_radon(g, p.blocks));
      inst.info["rays_per_angle"] = g.effective_rays();
      inst.info["measurements"] = g.measurement_count();
      inst.truth = BlockVector::split(stack_columns(shepp_logan(p.n)), op->block_dims());
      inst.op = std::move(op);
      inst.image_rows = inst.image_cols = p.n;
      break;
    }
    case ProblemKind::cacti: {
      CactiProblem cp = make_cacti(p.blocks, p.rows, p.cols, p.seed);
      inst.info["mask_shift"] = MaskStack::kShiftPolicy;
      inst.info["mask_density"] = [&] {
        double s = 0.0;
        for (const auto& m : cp.masks.masks) s += m.sum();
        return s / double(p.rows * p.cols * Index(p.blocks));
      }();
      inst.op = std::make_unique<MaskOperator>(std::move(cp.op));
      inst.truth = synthetic_video(p.blocks, p.rows, p.cols);
      inst.image_rows = p.rows;
      inst.image_cols = p.cols;
      inst.video = true;
      break;
    }
  }
  inst.y_exact = inst.op->apply(inst.truth);
  inst.data = add_noise(inst.y_exact, noise.delta_rel, noise.seed);
  return inst;
}

inline Penalty make_penalty(const PenaltySpec& spec, const ProblemInstance& inst) {
  const std::size_t b = inst.op->block_count();
  switch (spec.kind) {
    case PenaltyKind::quadratic: return Penalty::quadratic(b);
    case PenaltyKind::quadratic_nonneg: return Penalty::nonneg(b);
    case PenaltyKind::quadratic_tv:
      if (!inst.video)
        throw ConfigError("the TV penalty needs a problem whose blocks are image frames (cacti)");
      return Penalty::total_variation(b, spec.lambda, inst.image_rows, inst.image_cols, spec.tv);
  }
  throw ConfigError("unknown penalty kind");
}

/// Runs the solver selected by the spec on a prepared instance.
inline RunResult solve(const ExperimentSpec& spec, const ProblemInstance& inst) {
  if (spec.penalty) {
    const Penalty penalty = make_penalty(*spec.penalty, inst);
    return run_reg(*inst.op, inst.data.y_delta, inst.data.delta, penalty, spec.solver, &inst.truth);
  }
  return run(*inst.op, inst.data.y_delta, inst.data.delta, inst.op->zeros(), spec.solver, &inst.truth);
}

// ---------------------------------------------------------------------------
// Outputs.

inline json number_or_inf(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

struct QualityMetrics {
  double rel_error = 0.0;
  double rel_sq_error = 0.0;
  std::optional<double> psnr;
  std::optional<double> ssim;
};

/// Relative errors, plus PSNR/SSIM (peak 1, mean over frames for videos)
/// when the unknown is an image.
inline QualityMetrics quality(const ProblemInstance& inst, const BlockVector& x) {
  QualityMetrics q;
  q.rel_sq_error = relative_error(inst.truth, x, true);
  q.rel_error = relative_error(inst.truth, x, false);
  const auto ref = inst.images(inst.truth);
  const auto rec = inst.images(x);
  if (!ref.empty()) {
    double ps = 0.0, ss = 0.0;
    const bool ssim_ok = inst.image_rows >= 11 && inst.image_cols >= 11;
    for (std::size_t f = 0; f < ref.size(); ++f) {
      ps += psnr(ref[f], rec[f], 1.0);
      if (ssim_ok) ss += ssim(ref[f], rec[f], 1.0);
    }
    q.psnr = ps / double(ref.size());
    if (ssim_ok) q.ssim = ss / double(ref.size());
  }
  return q;
}

inline std::string format_double(double v) {
  if (std::isnan(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_errors_csv(const fs::path& path, const RunResult& r) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out << "k,residual,rel_sq_error\n";
  for (const auto& h : r.history)
    out << h.k << ',' << format_double(h.residual) << ','
        << (h.rel_sq_error ? format_double(*h.rel_sq_error) : std::string()) << '\n';
}

struct ExperimentOutcome {
  RunResult result;
  QualityMetrics metrics;
  json meta;
};

inline json build_meta(const ExperimentSpec& spec, const ProblemInstance& inst,
                       const RunResult& r, const QualityMetrics& q) {
  json metrics = {{"rel_error", q.rel_error}, {"rel_sq_error", q.rel_sq_error}};
  if (q.psnr) metrics["psnr"] = number_or_inf(*q.psnr);
  if (q.ssim) metrics["ssim"] = *q.ssim;
  json meta = {{"spec", to_json(spec)},
               {"rng_algorithm", r.rng_algorithm},
               {"seeds",
                {{"problem", spec.problem.seed}, {"noise", spec.noise.seed}, {"solver", r.seed}}},
               {"stop_index", r.stop_index},
               {"stop_reason", std::string(to_string(r.stop_reason))},
               {"gamma", r.gamma},
               {"operator_norm", r.operator_norm},
               {"delta", inst.data.delta},
               {"delta_rel", inst.data.delta_rel},
               {"final_residual", r.final_residual_norm()},
               {"wall_seconds", r.wall_seconds},
               {"operator_kind", std::string(inst.op->kind())},
               {"block_count", inst.op->block_count()},
               {"problem_info", inst.info},
               {"metrics", metrics}};
  if (spec.penalty)
    meta["penalty"] = {{"kind", std::string(to_string(spec.penalty->kind))},
                       {"lambda", spec.penalty->lambda},
                       {"tv_method", std::string(kTvMethod)},
                       {"tv_tol", spec.penalty->tv.tol},
                       {"tv_max_iter", spec.penalty->tv.max_iter},
                       {"tv_warnings", r.tv_warnings}};
  return meta;
}

inline void write_reconstruction(const fs::path& dir, const ProblemInstance& inst,
                                 const BlockVector& x) {
  const auto frames = inst.images(x);
  if (frames.empty()) {
    write_raw(dir / "recon.raw", BlockVector({x.flatten()}), x.total_size(), 1);
    return;
  }
  json scaling = json::array();
  std::vector<Vector> flat;
  for (std::size_t f = 0; f < frames.size(); ++f) {
    std::string name = frames.size() == 1 ? "recon.pgm" : "recon_frame_" + std::to_string(f) + ".pgm";
    const PgmScaling s = write_pgm(dir / name, frames[f]);
    scaling.push_back({{"file", name}, {"min", s.min}, {"max", s.max}});
    flat.push_back(stack_columns(frames[f]));
  }
  write_raw(dir / "recon.raw", BlockVector(std::move(flat)), inst.image_rows, inst.image_cols,
            {{"pgm_scaling", scaling}});
}

/// Builds the instance, solves, and (if `write`) writes errors.csv,
/// meta.json and the reconstruction into spec.output_dir.
inline ExperimentOutcome run_experiment(const ExperimentSpec& spec, bool write = true) {
  const ProblemInstance inst = build_problem(spec.problem, spec.noise);
  ExperimentOutcome out;
  out.result = solve(spec, inst);
  out.metrics = quality(inst, out.result.x_final);
  out.meta = build_meta(spec, inst, out.result, out.metrics);
  if (write) {
    const fs::path dir(spec.output_dir);
    fs::create_directories(dir);
    write_errors_csv(dir / "errors.csv", out.result);
    std::ofstream(dir / "meta.json") << out.meta.dump(2) << '\n';
    write_reconstruction(dir, inst, out.result.x_final);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Studies.

struct SweepRow {
  std::size_t blocks = 0;
  double mean_iters = 0.0;
  double mean_seconds = 0.0;
  std::size_t runs = 0;
  std::size_t capped = 0;  // runs that hit k_cap before the target
};

/// Repeats `base` for each block count, stopping every run at the first
/// squared relative error below `target`. Run r uses solver seed
/// derive_seed(master_seed, r); the problem and noise seeds stay fixed.
inline std::vector<SweepRow> sweep_blocks(ExperimentSpec base, const std::vector<std::size_t>& block_counts,
                                          std::size_t runs, double target, std::uint64_t master_seed,
                                          std::size_t k_cap = 1'000'000) {
  if (runs < 1) throw ConfigError("sweep needs at least one run");
  base.solver.stop = TargetErrorStop{target, k_cap};
  base.penalty.reset();
  std::vector<SweepRow> rows;
  for (std::size_t b : block_counts) {
    ExperimentSpec spec = base;
    spec.problem.blocks = b;
    const ProblemInstance inst = build_problem(spec.problem, spec.noise);
    SweepRow row{b, 0.0, 0.0, runs, 0};
    for (std::size_t r = 0; r < runs; ++r) {
      spec.solver.seed = derive_seed(master_seed, r);
      const RunResult res = solve(spec, inst);
      row.mean_iters += double(res.stop_index);
      row.mean_seconds += res.wall_seconds;
      if (res.stop_reason == StopReason::cap) ++row.capped;
    }
    row.mean_iters /= double(runs);
    row.mean_seconds /= double(runs);
    rows.push_back(row);
  }
  return rows;
}

inline void write_sweep_csv(const fs::path& path, const std::vector<SweepRow>& rows) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out << "b,mean_iters,mean_seconds\n";
  for (const auto& r : rows)
    out << r.blocks << ',' << format_double(r.mean_iters) << ',' << format_double(r.mean_seconds) << '\n';
}

/// Monte Carlo over solver seeds on one fixed instance.
inline MonteCarloResult monte_carlo_experiment(const ExperimentSpec& base, std::size_t runs,
                                               std::uint64_t master_seed, unsigned threads = 1) {
  const ProblemInstance inst = build_problem(base.problem, base.noise);
  cached_operator_norm(*inst.op);  // fill the cache before any worker reads it
  return monte_carlo(
      [&](std::uint64_t seed) {
        ExperimentSpec spec = base;
        spec.solver.seed = seed;
        return solve(spec, inst);
      },
      runs, master_seed, threads);
}

inline void write_monte_carlo_csv(const fs::path& path, const MonteCarloResult& mc) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out << "k,mean_rel_sq_error,std_rel_sq_error,count\n";
  for (std::size_t j = 0; j < mc.k.size(); ++j)
    out << mc.k[j] << ',' << format_double(mc.mean[j]) << ',' << format_double(mc.stddev[j]) << ','
        << mc.count[j] << '\n';
}

}  // namespace rbcd
