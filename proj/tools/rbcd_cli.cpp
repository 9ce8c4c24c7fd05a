// Command-line front end: run, sweep-blocks, mc, make-phantom, make-video,
// metrics. Exit codes: 0 success (including cap stops), 2 configuration
// errors, 3 divergence.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rbcd/rbcd.hpp"

namespace {

using rbcd::json;
namespace fs = std::filesystem;

constexpr int kConfigError = 2;
constexpr int kDivergence = 3;

/// Flags that override fields of an ExperimentSpec when given.
struct SpecFlags {
  std::optional<std::string> spec_file;
  std::optional<std::string> problem;
  std::optional<std::size_t> blocks;
  std::optional<std::uint64_t> problem_seed;
  std::optional<long> n, angles, rays, rows, cols, m, block_size;
  std::optional<double> angle_first, angle_last;
  std::optional<double> noise;
  std::optional<std::uint64_t> noise_seed;
  std::optional<double> mu, gamma, tau;
  std::optional<std::string> stop;
  std::optional<std::size_t> k_max, k_cap;
  std::optional<double> target;
  std::optional<std::string> index_rule;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> record_every;
  std::optional<std::string> penalty;
  std::optional<double> lambda, tv_tol;
  std::optional<int> tv_max_iter;
  std::optional<std::string> out;

  void attach(CLI::App& app, bool solver_stop = true) {
    app.add_option("--spec", spec_file, "JSON experiment spec (or a meta.json) to start from");
    app.add_option("--problem", problem, "synthetic-dense | tensor-product | ct | cacti");
    app.add_option("--blocks", blocks, "block count b (frames for cacti)");
    app.add_option("--problem-seed", problem_seed, "seed for masks and random matrices");
    app.add_option("--n", n, "CT grid side");
    app.add_option("--angles", angles, "number of projection angles");
    app.add_option("--angle-first", angle_first, "first angle in degrees");
    app.add_option("--angle-last", angle_last, "last angle in degrees");
    app.add_option("--rays", rays, "rays per angle (0: round(sqrt(2) n))");
    app.add_option("--rows", rows, "frame rows (cacti)");
    app.add_option("--cols", cols, "frame cols (cacti)");
    app.add_option("--m", m, "rows of the synthetic dense matrix");
    app.add_option("--block-size", block_size, "columns per block (synthetic-dense)");
    app.add_option("--noise", noise, "relative noise level");
    app.add_option("--noise-seed", noise_seed, "noise seed");
    app.add_option("--mu", mu, "step-size factor in (0, 2)");
    app.add_option("--gamma", gamma, "explicit step size (overrides --mu)");
    if (solver_stop) {
      app.add_option("--stop", stop, "apriori | dp | target");
      app.add_option("--tau", tau, "discrepancy factor (> 1)");
      app.add_option("--k-max", k_max, "a priori step count");
      app.add_option("--k-cap", k_cap, "hard cap for dp/target rules");
      app.add_option("--target", target, "squared relative error target");
    } else {
      app.add_option("--k-cap", k_cap, "hard step cap per run");
    }
    app.add_option("--index-rule", index_rule, "uniform | cyclic");
    app.add_option("--seed", seed, "solver seed");
    app.add_option("--record-every", record_every, "history stride (0: default schedule)");
    app.add_option("--penalty", penalty, "quadratic | quadratic-nonneg | quadratic-tv");
    app.add_option("--lambda", lambda, "TV weight");
    app.add_option("--tv-tol", tv_tol, "TV sub-solver relative duality-gap tolerance");
    app.add_option("--tv-max-iter", tv_max_iter, "TV sub-solver iteration limit");
    app.add_option("--out", out, "output directory");
  }

  rbcd::ExperimentSpec build() const {
    rbcd::ExperimentSpec s;
    if (spec_file) {
      std::ifstream in(*spec_file);
      if (!in) throw rbcd::ConfigError("cannot open spec file " + *spec_file);
      json j;
      try {
        in >> j;
      } catch (const json::exception& e) {
        throw rbcd::ConfigError(std::string("spec file is not valid JSON: ") + e.what());
      }
      s = rbcd::spec_from_json(j);
    }
    auto& p = s.problem;
    if (problem) p.kind = rbcd::problem_kind_from_string(*problem);
    if (blocks) p.blocks = *blocks;
    if (problem_seed) p.seed = *problem_seed;
    if (n) p.n = *n;
    if (angles) p.angles = *angles;
    if (angle_first) p.angle_first = *angle_first;
    if (angle_last) p.angle_last = *angle_last;
    if (rays) p.rays_per_angle = *rays;
    if (rows) p.rows = *rows;
    if (cols) p.cols = *cols;
    if (m) p.m = *m;
    if (block_size) p.block_size = *block_size;
    if (noise) s.noise.delta_rel = *noise;
    if (noise_seed) s.noise.seed = *noise_seed;
    else if (seed && !spec_file) s.noise.seed = *seed;

    auto& c = s.solver;
    if (mu) c.mu = *mu;
    if (gamma) c.gamma = *gamma;
    if (stop) {
      if (*stop == "apriori") c.stop = rbcd::AprioriStop{k_max.value_or(1000)};
      else if (*stop == "dp") c.stop = rbcd::DiscrepancyStop{tau.value_or(1.1), k_cap.value_or(1'000'000)};
      else if (*stop == "target") c.stop = rbcd::TargetErrorStop{target.value_or(0.05), k_cap.value_or(1'000'000)};
      else throw rbcd::ConfigError("unknown stop rule '" + *stop + "'");
    } else {
      if (auto* a = std::get_if<rbcd::AprioriStop>(&c.stop); a && k_max) a->k_max = *k_max;
      if (auto* d = std::get_if<rbcd::DiscrepancyStop>(&c.stop)) {
        if (tau) d->tau = *tau;
        if (k_cap) d->k_cap = *k_cap;
      }
      if (auto* t = std::get_if<rbcd::TargetErrorStop>(&c.stop)) {
        if (target) t->threshold = *target;
        if (k_cap) t->k_cap = *k_cap;
      }
    }
    if (index_rule) {
      if (*index_rule == "uniform") c.index_rule = rbcd::IndexRule::uniform;
      else if (*index_rule == "cyclic") c.index_rule = rbcd::IndexRule::cyclic;
      else throw rbcd::ConfigError("unknown index rule '" + *index_rule + "'");
    }
    if (seed) c.seed = *seed;
    if (record_every) c.record_every = *record_every;

    if (penalty) {
      rbcd::PenaltySpec ps = s.penalty.value_or(rbcd::PenaltySpec{});
      ps.kind = rbcd::penalty_kind_from_string(*penalty);
      s.penalty = ps;
    }
    if ((lambda || tv_tol || tv_max_iter) && !s.penalty)
      throw rbcd::ConfigError("--lambda/--tv-* need --penalty");
    if (s.penalty) {
      if (lambda) s.penalty->lambda = *lambda;
      if (tv_tol) s.penalty->tv.tol = *tv_tol;
      if (tv_max_iter) s.penalty->tv.max_iter = *tv_max_iter;
    }
    if (out) s.output_dir = *out;
    return s;
  }
};

int cmd_run(const SpecFlags& flags, const std::optional<std::string>& write_spec) {
  const rbcd::ExperimentSpec spec = flags.build();
  if (write_spec) std::ofstream(*write_spec) << rbcd::normalized_spec_text(spec);
  const auto outcome = rbcd::run_experiment(spec);
  std::cout << "stop_index=" << outcome.result.stop_index
            << " stop_reason=" << rbcd::to_string(outcome.result.stop_reason)
            << " residual=" << outcome.result.final_residual_norm()
            << " rel_error=" << outcome.metrics.rel_error;
  if (outcome.metrics.psnr) std::cout << " psnr=" << *outcome.metrics.psnr;
  if (outcome.metrics.ssim) std::cout << " ssim=" << *outcome.metrics.ssim;
  std::cout << "\nwrote " << spec.output_dir << "\n";
  return 0;
}

int cmd_sweep(SpecFlags flags, const std::vector<std::size_t>& block_list, std::size_t runs,
              std::uint64_t master_seed) {
  // Full-angle data unless told otherwise.
  if (!flags.angles && !flags.spec_file) flags.angles = 90;
  rbcd::ExperimentSpec spec = flags.build();
  const double target = flags.target.value_or(0.05);
  const auto rows = rbcd::sweep_blocks(spec, block_list, runs, target, master_seed,
                                       flags.k_cap.value_or(1'000'000));
  fs::create_directories(spec.output_dir);
  rbcd::write_sweep_csv(fs::path(spec.output_dir) / "summary.csv", rows);
  json meta = {{"spec", rbcd::to_json(spec)}, {"target", target}, {"runs", runs},
               {"master_seed", master_seed}, {"rng_algorithm", std::string(rbcd::kRngAlgorithm)},
               {"rows", json::array()}};
  std::cout << "b,mean_iters,mean_seconds\n";
  for (const auto& r : rows) {
    std::cout << r.blocks << ',' << r.mean_iters << ',' << r.mean_seconds << '\n';
    meta["rows"].push_back({{"b", r.blocks}, {"mean_iters", r.mean_iters},
                            {"mean_seconds", r.mean_seconds}, {"capped", r.capped}});
  }
  std::ofstream(fs::path(spec.output_dir) / "meta.json") << meta.dump(2) << '\n';
  return 0;
}

int cmd_mc(const SpecFlags& flags, std::size_t runs, std::uint64_t master_seed, unsigned threads) {
  const rbcd::ExperimentSpec spec = flags.build();
  const auto mc = rbcd::monte_carlo_experiment(spec, runs, master_seed, threads);
  fs::create_directories(spec.output_dir);
  rbcd::write_monte_carlo_csv(fs::path(spec.output_dir) / "mc.csv", mc);
  json meta = {{"spec", rbcd::to_json(spec)}, {"runs", runs}, {"runs_ok", mc.runs_ok},
               {"failed_runs", mc.failed_runs}, {"master_seed", master_seed},
               {"seeds", mc.seeds}, {"rng_algorithm", std::string(rbcd::kRngAlgorithm)}};
  std::ofstream(fs::path(spec.output_dir) / "meta.json") << meta.dump(2) << '\n';
  std::cout << "runs_ok=" << mc.runs_ok << " failed=" << mc.failed_runs.size();
  if (!mc.mean.empty()) std::cout << " final_mean_rel_sq_error=" << mc.mean.back();
  std::cout << "\n";
  return 0;
}

int cmd_make_phantom(long n, const std::string& out) {
  const rbcd::Image img = rbcd::shepp_logan(n);
  const rbcd::PgmScaling s = rbcd::write_pgm(out + ".pgm", img);
  rbcd::write_raw(out + ".raw", rbcd::BlockVector({rbcd::stack_columns(img)}), n, n,
                  {{"pgm_scaling", {{"min", s.min}, {"max", s.max}}}});
  std::cout << "wrote " << out << ".pgm and " << out << ".raw\n";
  return 0;
}

int cmd_make_video(std::size_t frames, long rows, long cols, const std::string& out) {
  const rbcd::BlockVector video = rbcd::synthetic_video(frames, rows, cols);
  rbcd::write_raw(out + ".raw", video, rows, cols);
  for (std::size_t f = 0; f < frames; ++f)
    rbcd::write_pgm(out + "_frame_" + std::to_string(f) + ".pgm",
                    rbcd::unstack_columns(video[f], rows, cols));
  std::cout << "wrote " << out << ".raw and " << frames << " PGM frames\n";
  return 0;
}

/// Loads frames from a .pgm (one frame) or .raw (with sidecar header).
std::vector<rbcd::Image> load_frames(const std::string& path, bool& is_pgm) {
  is_pgm = fs::path(path).extension() == ".pgm";
  if (is_pgm) return {rbcd::read_pgm(path)};
  rbcd::RawHeader h;
  const rbcd::BlockVector v = rbcd::read_raw(path, &h);
  std::vector<rbcd::Image> frames;
  for (const auto& f : v) frames.push_back(rbcd::unstack_columns(f, h.rows, h.cols));
  return frames;
}

int cmd_metrics(const std::string& ref_path, const std::string& test_path,
                std::optional<double> peak) {
  bool ref_pgm = false, test_pgm = false;
  const auto ref = load_frames(ref_path, ref_pgm);
  const auto test = load_frames(test_path, test_pgm);
  if (ref.size() != test.size()) throw rbcd::ShapeError("inputs have different frame counts");
  const double pk = peak.value_or(ref_pgm ? 255.0 : 1.0);
  double ps = 0.0, ss = 0.0, num = 0.0, den = 0.0;
  bool ssim_ok = true;
  for (std::size_t f = 0; f < ref.size(); ++f) {
    ps += rbcd::psnr(ref[f], test[f], pk);
    if (ref[f].rows() < 11 || ref[f].cols() < 11) ssim_ok = false;
    else ss += rbcd::ssim(ref[f], test[f], pk);
    num += (ref[f] - test[f]).squaredNorm();
    den += ref[f].squaredNorm();
  }
  if (den == 0.0) throw rbcd::ConfigError("relative error against a zero reference");
  json j = {{"psnr", rbcd::number_or_inf(ps / double(ref.size()))},
            {"rel_err", std::sqrt(num / den)},
            {"frames", ref.size()},
            {"peak", pk}};
  j["ssim"] = ssim_ok ? json(ss / double(ref.size())) : json(nullptr);
  std::cout << j.dump() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Randomized block coordinate descent for linear ill-posed problems"};
  app.require_subcommand(1);

  SpecFlags run_flags;
  std::optional<std::string> write_spec;
  auto* run = app.add_subcommand("run", "run one experiment and write errors.csv, meta.json, reconstruction");
  run_flags.attach(*run);
  run->add_option("--write-spec", write_spec, "also write the normalized spec JSON here");

  SpecFlags sweep_flags;
  std::vector<std::size_t> block_list{1, 2, 4, 8, 16};
  std::size_t sweep_runs = 20;
  std::uint64_t sweep_master = 2024;
  auto* sweep = app.add_subcommand("sweep-blocks", "iterations to reach a target error versus block count");
  sweep_flags.attach(*sweep, false);
  sweep->add_option("--target", sweep_flags.target, "squared relative error target (default 0.05)");
  sweep->add_option("--block-list", block_list, "block counts to sweep")->delimiter(',');
  sweep->add_option("--runs", sweep_runs, "runs per block count");
  sweep->add_option("--master-seed", sweep_master, "master seed for derived run seeds");

  SpecFlags mc_flags;
  std::size_t mc_runs = 100;
  std::uint64_t mc_master = 2024;
  unsigned mc_threads = 1;
  auto* mc = app.add_subcommand("mc", "Monte Carlo mean/std of the squared relative error");
  mc_flags.attach(*mc);
  mc->add_option("--runs", mc_runs, "number of runs");
  mc->add_option("--master-seed", mc_master, "master seed");
  mc->add_option("--threads", mc_threads, "worker threads");

  long phantom_n = 64;
  std::string phantom_out = "phantom";
  auto* phantom = app.add_subcommand("make-phantom", "write a modified Shepp-Logan phantom");
  phantom->add_option("--n", phantom_n, "grid side");
  phantom->add_option("--out", phantom_out, "output path prefix");

  std::size_t video_frames = 8;
  long video_rows = 32, video_cols = 32;
  std::string video_out = "video";
  auto* video = app.add_subcommand("make-video", "write a synthetic moving-rectangle video");
  video->add_option("--frames", video_frames, "frame count");
  video->add_option("--rows", video_rows, "frame rows");
  video->add_option("--cols", video_cols, "frame cols");
  video->add_option("--out", video_out, "output path prefix");

  std::string ref_path, test_path;
  std::optional<double> peak;
  auto* metrics = app.add_subcommand("metrics", "PSNR, SSIM and relative error between two images");
  metrics->add_option("--ref", ref_path, "reference image (.pgm or .raw)")->required();
  metrics->add_option("--test", test_path, "test image (.pgm or .raw)")->required();
  metrics->add_option("--peak", peak, "peak value (default 255 for PGM, 1 for raw)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigError;
  }

  try {
    if (*run) return cmd_run(run_flags, write_spec);
    if (*sweep) return cmd_sweep(sweep_flags, block_list, sweep_runs, sweep_master);
    if (*mc) return cmd_mc(mc_flags, mc_runs, mc_master, mc_threads);
    if (*phantom) return cmd_make_phantom(phantom_n, phantom_out);
    if (*video) return cmd_make_video(video_frames, video_rows, video_cols, video_out);
    if (*metrics) return cmd_metrics(ref_path, test_path, peak);
  } catch (const rbcd::DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDivergence;
  } catch (const std::invalid_argument& e) {  // ConfigError, ShapeError
    std::cerr << "error: " << e.what() << "\n";
    return kConfigError;
  } catch (const rbcd::FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
