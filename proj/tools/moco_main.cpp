// moco: simulate, reconstruct and correct motion-corrupted radial MRI.
//
// Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 numerical
// failure.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>

#include "cg_sense.hpp"
#include "gradients.hpp"
#include "pipeline.hpp"
#include "png_io.hpp"
#include "tv.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumeric = 4;

using namespace moco;

ExperimentConfig load_cfg(const std::string& config_path, int threads_override,
                          const std::string& sampling_override) {
  ExperimentConfig cfg = parse_config_file(config_path);
  if (threads_override > 0) cfg.threads = threads_override;
  if (!sampling_override.empty()) {
    cfg.sampling = sampling_override;
    validate(cfg);
  }
  return cfg;
}

int cmd_simulate(const std::string& config_path, int threads, const std::string& sampling) {
  const ExperimentConfig cfg = load_cfg(config_path, threads, sampling);
  const Dataset ds = simulate(cfg);
  save_dataset(ds, cfg.out_dir());
  std::cout << "dataset written to " << cfg.out_dir().string() << "\n";
  return kExitOk;
}

int cmd_pipeline(const std::string& config_path, int threads, const std::string& sampling) {
  const ExperimentConfig cfg = load_cfg(config_path, threads, sampling);
  const Dataset ds = simulate(cfg);
  const std::filesystem::path dir = cfg.out_dir();
  save_dataset(ds, dir);
  const PipelineResult res = run_pipeline(ds, &dir);
  std::cout << read_text(dir / "report.txt");
  return kExitOk;
}

int cmd_estimate(const std::string& run_dir, int threads) {
  Dataset ds = load_dataset(run_dir);
  if (threads > 0) ds.cfg.threads = threads;
  const MotionProblem problem = problem_from_dataset(ds, true);

  ReconConfig sub_cfg;
  sub_cfg.n_cg = ds.cfg.sub_cg_iters;
  sub_cfg.positivity = ds.cfg.positivity;
  std::vector<Image> s_i;
  for (int i = 0; i < ds.cfg.n_exc; ++i) s_i.push_back(per_excitation_recon(problem, i, sub_cfg));

  EstimateConfig est_cfg;
  est_cfg.n_iter = ds.cfg.est_iters;
  est_cfg.pyramid_levels = ds.cfg.est_pyramid;
  est_cfg.steps_per_level = ds.cfg.est_steps;
  est_cfg.smoothness = ds.cfg.est_smoothness;
  est_cfg.temporal_window = ds.cfg.est_window;
  est_cfg.threads = ds.cfg.threads;
  std::vector<double> log;
  const ClassicalRefiner refiner(est_cfg);
  const DeformationSequence u_est = estimate_motion(s_i, est_cfg, refiner, &log);

  snfl::RealTensor si;
  si.dims = {static_cast<uint64_t>(ds.cfg.n_exc), static_cast<uint64_t>(ds.cfg.n),
             static_cast<uint64_t>(ds.cfg.n)};
  for (const auto& im : s_i) si.v.insert(si.v.end(), im.v.begin(), im.v.end());
  snfl::save(std::filesystem::path(run_dir) / "s_i.snfl", si);

  snfl::RealTensor ut;
  ut.dims = {static_cast<uint64_t>(u_est.size()), 2, static_cast<uint64_t>(ds.cfg.n),
             static_cast<uint64_t>(ds.cfg.n)};
  for (const auto& f : u_est.fields) {
    ut.v.insert(ut.v.end(), f.px.begin(), f.px.end());
    ut.v.insert(ut.v.end(), f.py.begin(), f.py.end());
  }
  snfl::save(std::filesystem::path(run_dir) / "u_est.snfl", ut);

  std::ostringstream text;
  text << "estimate iterations: " << log.size() << "\n";
  for (size_t i = 0; i < log.size(); ++i) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "iter %zu mean |update| px: %.6g\n", i + 1, log[i]);
    text << buf;
  }
  write_text(std::filesystem::path(run_dir) / "estimate_log.txt", text.str());
  std::cout << "estimate written to " << run_dir << "/u_est.snfl\n";
  return kExitOk;
}

DeformationSequence load_sequence(const std::filesystem::path& path) {
  const snfl::RealTensor t = snfl::load_real(path);
  if (t.dims.size() != 4 || t.dims[1] != 2 || t.dims[2] != t.dims[3]) {
    throw snfl::Error(snfl::Status::dtype_mismatch, "expected [n_exc, 2, n, n]: " + path.string());
  }
  const Grid grid = make_grid(static_cast<int>(t.dims[2]));
  DeformationSequence u;
  const size_t plane = grid.pixels();
  for (uint64_t i = 0; i < t.dims[0]; ++i) {
    DeformationField f(grid);
    const double* base = t.v.data() + static_cast<size_t>(i) * 2 * plane;
    f.px.assign(base, base + plane);
    f.py.assign(base + plane, base + 2 * plane);
    u.fields.push_back(std::move(f));
  }
  return u;
}

int cmd_correct(const std::string& run_dir, int threads, int levels_override, int iters_override,
                const std::string& projector_override, bool baseline_rigid) {
  Dataset ds = load_dataset(run_dir);
  if (threads > 0) ds.cfg.threads = threads;
  if (levels_override >= 0) ds.cfg.levels = levels_override;
  if (iters_override > 0) ds.cfg.cor_iters = iters_override;
  if (!projector_override.empty()) ds.cfg.projector = projector_override;
  validate(ds.cfg);
  const MotionProblem problem = problem_from_dataset(ds, true);
  const DeformationSequence u_est = load_sequence(std::filesystem::path(run_dir) / "u_est.snfl");

  if (baseline_rigid) {
    std::vector<RigidParams> p0;
    for (int i = 0; i < ds.cfg.n_exc; ++i) p0.push_back(fit_rigid(u_est.fields[i]));
    RigidRefineConfig rr_cfg;
    rr_cfg.n_cg = ds.cfg.cor_cg_iters;
    rr_cfg.positivity = ds.cfg.positivity;
    rr_cfg.threads = ds.cfg.threads;
    const RigidRefineResult rr = rigid_refine(problem, p0, rr_cfg);
    std::ostringstream o;
    o << "exc,theta_rad,shift_x_px,shift_y_px,converged,singular\n";
    for (int i = 0; i < ds.cfg.n_exc; ++i) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%d,%d\n", i, rr.params[i].theta,
                    rr.params[i].shift_x, rr.params[i].shift_y, rr.converged[i] ? 1 : 0,
                    rr.singular[i] ? 1 : 0);
      o << buf;
    }
    write_text(std::filesystem::path(run_dir) / "rigid_params.csv", o.str());
    snfl::save(std::filesystem::path(run_dir) / "s_rigid.snfl", rr.s);
    std::cout << "rigid baseline written to " << run_dir << "/rigid_params.csv\n";
    return kExitOk;
  }

  CorrectionConfig cor_cfg;
  cor_cfg.levels = ds.cfg.levels;
  cor_cfg.n_iter = ds.cfg.cor_iters;
  cor_cfg.n_cg = ds.cfg.cor_cg_iters;
  cor_cfg.backtrack = ds.cfg.backtrack;
  cor_cfg.positivity = ds.cfg.positivity;
  cor_cfg.threads = ds.cfg.threads;
  const IdentityProjector idp;
  const SplineProjector sp(ds.cfg.projector_spacing);
  const Projector& projector = ds.cfg.projector == "spline"
                                   ? static_cast<const Projector&>(sp)
                                   : static_cast<const Projector&>(idp);
  const CorrectionResult cor = correct_motion(problem, u_est, cor_cfg, projector);

  snfl::RealTensor ut;
  ut.dims = {static_cast<uint64_t>(cor.u.size()), 2, static_cast<uint64_t>(ds.cfg.n),
             static_cast<uint64_t>(ds.cfg.n)};
  for (const auto& f : cor.u.fields) {
    ut.v.insert(ut.v.end(), f.px.begin(), f.px.end());
    ut.v.insert(ut.v.end(), f.py.begin(), f.py.end());
  }
  snfl::save(std::filesystem::path(run_dir) / "u_cor.snfl", ut);
  snfl::save(std::filesystem::path(run_dir) / "s_cor_loop.snfl", cor.s);
  std::cout << "correction written to " << run_dir << "/u_cor.snfl\n";
  return kExitOk;
}

int cmd_reconstruct(const std::string& run_dir, int threads, const std::string& motion,
                    int cg_iters, double tv_lambda, const std::string& positivity) {
  Dataset ds = load_dataset(run_dir);
  if (threads > 0) ds.cfg.threads = threads;
  const MotionProblem problem = problem_from_dataset(ds, true);

  DeformationSequence u = DeformationSequence::identity(problem.grid, ds.cfg.n_exc);
  if (motion == "ref") {
    u = ds.u_ref;
  } else if (motion == "est") {
    u = load_sequence(std::filesystem::path(run_dir) / "u_est.snfl");
  } else if (motion == "cor") {
    u = load_sequence(std::filesystem::path(run_dir) / "u_cor.snfl");
  } else if (motion != "identity") {
    throw ConfigError("unknown --motion value: " + motion);
  }

  ReconConfig cfg;
  cfg.n_cg = cg_iters > 0 ? cg_iters : ds.cfg.cg_iters;
  cfg.positivity = positivity.empty() ? ds.cfg.positivity : positivity == "on";
  const ReconResult rec = cg_sense_motion(problem, u, Image(problem.grid), cfg);
  Image s = rec.s;
  const double lambda = tv_lambda >= 0 ? tv_lambda : ds.cfg.tv_lambda;
  if (lambda > 0) s = tv_denoise(s, lambda, ds.cfg.tv_iters);

  const std::string tag = "recon_" + motion;
  snfl::save(std::filesystem::path(run_dir) / (tag + ".snfl"), s);
  export_image_png(std::filesystem::path(run_dir) / (tag + ".png"), s,
                   std::max(1e-12, max_abs(ds.s_ref)));
  char buf[80];
  std::snprintf(buf, sizeof buf, "final residual: %.6g\n", rec.final_residual);
  std::cout << tag << ".snfl written; " << buf;
  return kExitOk;
}

int cmd_evaluate(const std::string& run_dir, int threads) {
  Dataset ds = load_dataset(run_dir);
  if (threads > 0) ds.cfg.threads = threads;
  const std::filesystem::path dir(run_dir);
  const PipelineResult res = run_pipeline(ds, &dir);
  std::cout << read_text(dir / "report.txt");
  return kExitOk;
}

int cmd_report(const std::vector<std::string>& dirs) {
  if (dirs.empty()) throw ConfigError("report needs at least one run directory");
  struct Entry {
    std::string csv;
    std::string timings;
  };
  std::map<std::string, Entry> by_name;
  for (const auto& d : dirs) {
    const std::filesystem::path p(d);
    Entry e;
    e.csv = read_text(p / "report.csv");
    if (std::filesystem::exists(p / "timings.csv")) e.timings = read_text(p / "timings.csv");
    by_name[p.filename().string().empty() ? d : p.filename().string()] = e;
  }
  std::ostringstream merged;
  bool first = true;
  for (const auto& [name, e] : by_name) {
    std::istringstream in(e.csv);
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
      if (header) {
        if (first) merged << line << "\n";
        header = false;
        continue;
      }
      if (!line.empty()) merged << line << "\n";
    }
    first = false;
  }
  std::cout << merged.str();
  std::cout << "\nstage timings (seconds):\n";
  for (const auto& [name, e] : by_name) {
    std::istringstream in(e.timings);
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
      if (header) {
        header = false;
        continue;
      }
      if (!line.empty()) std::cout << line << "\n";
    }
  }
  return kExitOk;
}

int cmd_gradcheck(uint64_t seed, int n, int n_exc, int samples) {
  const Grid grid = make_grid(n);
  const Rng rng(seed);
  Image s = make_phantom(PhantomKind::disks, grid);
  s = gaussian_blur(s, 1.0);
  const CoilMaps coils = synth_coils(2, grid, rng.substream(1));
  MotionProblem problem = make_problem(grid, SamplingPath::dfft, n_exc * 4, n, n_exc, coils);

  MotionConfig mc;
  mc.kind = MotionClass::rigid;
  mc.n_exc = n_exc;
  mc.max_rot_rad = 0.05;
  mc.max_shift_px = 1.5;
  const DeformationSequence u_true = synth_sequence(mc, grid, rng.substream(2));
  problem.y = forward(u_true, s, problem);

  // Perturbed state so the gradient is nonzero.
  DeformationSequence u = u_true;
  Rng pert = rng.substream(3);
  for (int i = 1; i < n_exc; ++i) {
    for (auto& v : u.fields[i].px) v += 0.3 * pert.uniform(-1.0, 1.0);
    for (auto& v : u.fields[i].py) v += 0.3 * pert.uniform(-1.0, 1.0);
  }

  std::printf("%-6s %-6s %-6s %-4s %-12s %s\n", "exc", "row", "col", "axis", "rel_err", "status");
  int failures = 0;
  int done = 0;
  Rng pick = rng.substream(4);
  while (done < samples) {
    const int i = 1 + static_cast<int>(pick.uniform() * (n_exc - 1));
    const int j = 2 + static_cast<int>(pick.uniform() * (n - 4));
    const int k = 2 + static_cast<int>(pick.uniform() * (n - 4));
    const Axis axis = pick.uniform() < 0.5 ? Axis::x : Axis::y;
    // Keep clear of interpolation cell boundaries.
    const size_t p = static_cast<size_t>(j) * n + k;
    const double cx = u.fields[i].px[p] - std::floor(u.fields[i].px[p]);
    const double cy = u.fields[i].py[p] - std::floor(u.fields[i].py[p]);
    if (cx < 0.1 || cx > 0.9 || cy < 0.1 || cy > 0.9) continue;
    const double err = fd_check(problem, u, s, i, j, k, axis, 1e-3);
    const bool ok = err <= 1e-4;
    failures += ok ? 0 : 1;
    std::printf("%-6d %-6d %-6d %-4s %-12.3e %s\n", i, j, k, axis == Axis::x ? "x" : "y", err,
                ok ? "pass" : "FAIL");
    ++done;
  }
  std::printf("%d/%d checks passed\n", samples - failures, samples);
  return failures == 0 ? kExitOk : kExitNumeric;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"motion-compensated radial MRI simulation and reconstruction"};
  app.require_subcommand(1);

  int threads = 0;
  app.add_option("--threads", threads, "worker thread cap (default from config)");

  std::string config_path, sampling, run_dir;
  auto* sim = app.add_subcommand("simulate", "synthesize a dataset from a config");
  sim->add_option("--config", config_path, "experiment config file")->required();
  sim->add_option("--sampling", sampling, "override operator path (dfft|nufft)");

  auto* pipe = app.add_subcommand("pipeline", "simulate and run the full pipeline");
  pipe->add_option("--config", config_path, "experiment config file")->required();
  pipe->add_option("--sampling", sampling, "override operator path (dfft|nufft)");

  auto* est = app.add_subcommand("estimate", "per-excitation recons + motion estimate");
  est->add_option("--run", run_dir, "dataset/run directory")->required();

  int levels_override = -1, iters_override = 0;
  std::string projector_override;
  bool baseline_rigid = false;
  auto* cor = app.add_subcommand("correct", "multilevel motion correction");
  cor->add_option("--run", run_dir, "dataset/run directory")->required();
  cor->add_option("--levels", levels_override, "coarsest level L");
  cor->add_option("--iters", iters_override, "rounds per level");
  cor->add_option("--projector", projector_override, "spline|identity");
  cor->add_flag("--baseline", baseline_rigid, "run the rigid baseline instead");

  std::string motion = "identity", positivity;
  int cg_iters = 0;
  double tv_lambda = -1.0;
  auto* rec = app.add_subcommand("reconstruct", "CG-SENSE(+motion) reconstruction");
  rec->add_option("--run", run_dir, "dataset/run directory")->required();
  rec->add_option("--motion", motion, "identity|est|cor|ref");
  rec->add_option("--cg-iters", cg_iters, "CG iteration count");
  rec->add_option("--tv-lambda", tv_lambda, "TV weight (0 disables)");
  rec->add_option("--positivity", positivity, "on|off");

  auto* eval = app.add_subcommand("evaluate", "run all stages and emit the report");
  eval->add_option("--run", run_dir, "dataset/run directory")->required();

  std::vector<std::string> report_dirs;
  auto* rep = app.add_subcommand("report", "merge reports from several runs");
  rep->add_option("dirs", report_dirs, "run directories")->required();

  uint64_t gc_seed = 7;
  int gc_n = 16, gc_exc = 2, gc_samples = 25;
  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of the gradient");
  gc->add_option("--seed", gc_seed, "random seed");
  gc->add_option("--n", gc_n, "grid size");
  gc->add_option("--n-exc", gc_exc, "excitation count");
  gc->add_option("--samples", gc_samples, "number of sampled pixels");

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed()) return cmd_simulate(config_path, threads, sampling);
    if (pipe->parsed()) return cmd_pipeline(config_path, threads, sampling);
    if (est->parsed()) return cmd_estimate(run_dir, threads);
    if (cor->parsed()) {
      return cmd_correct(run_dir, threads, levels_override, iters_override, projector_override,
                         baseline_rigid);
    }
    if (rec->parsed()) return cmd_reconstruct(run_dir, threads, motion, cg_iters, tv_lambda,
                                              positivity);
    if (eval->parsed()) return cmd_evaluate(run_dir, threads);
    if (rep->parsed()) return cmd_report(report_dirs);
    if (gc->parsed()) return cmd_gradcheck(gc_seed, gc_n, gc_exc, gc_samples);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const snfl::Error& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumeric;
  }
  return kExitOk;
}
