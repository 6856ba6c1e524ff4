#include "pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "cg_sense.hpp"
#include "png_io.hpp"
#include "tv.hpp"

namespace moco {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt4(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

MotionConfig motion_config(const ExperimentConfig& cfg) {
  MotionConfig m;
  m.kind = cfg.motion_class();
  m.n_exc = cfg.n_exc;
  m.max_rot_rad = cfg.max_rot_rad();
  m.max_shift_px = cfg.max_shift_px();
  m.max_shear = cfg.max_shear;
  m.ffd_amp_px = cfg.ffd_amp_px();
  m.ffd_nodes = cfg.ffd_nodes;
  m.spline_order = cfg.spline_order;
  return m;
}

snfl::RealTensor sequence_tensor(const DeformationSequence& u) {
  const int n_exc = u.size();
  const int n = u.fields[0].grid.n;
  snfl::RealTensor t;
  t.dims = {static_cast<uint64_t>(n_exc), 2, static_cast<uint64_t>(n), static_cast<uint64_t>(n)};
  t.v.reserve(static_cast<size_t>(n_exc) * 2 * n * n);
  for (const auto& f : u.fields) {
    t.v.insert(t.v.end(), f.px.begin(), f.px.end());
    t.v.insert(t.v.end(), f.py.begin(), f.py.end());
  }
  return t;
}

DeformationSequence sequence_from_tensor(const snfl::RealTensor& t) {
  if (t.dims.size() != 4 || t.dims[1] != 2 || t.dims[2] != t.dims[3]) {
    throw snfl::Error(snfl::Status::dtype_mismatch, "expected [n_exc, 2, n, n] field tensor");
  }
  const int n_exc = static_cast<int>(t.dims[0]);
  const Grid grid = make_grid(static_cast<int>(t.dims[2]));
  DeformationSequence u;
  const size_t plane = grid.pixels();
  for (int i = 0; i < n_exc; ++i) {
    DeformationField f(grid);
    const double* base = t.v.data() + static_cast<size_t>(i) * 2 * plane;
    f.px.assign(base, base + plane);
    f.py.assign(base + plane, base + 2 * plane);
    u.fields.push_back(std::move(f));
  }
  return u;
}

// Signed map preview: [-max|v|, +max|v|] onto [0, 255] around mid-gray.
void export_signed_png(const std::filesystem::path& path, const std::vector<double>& v, int n) {
  double peak = 0;
  for (double x : v) peak = std::max(peak, std::fabs(x));
  if (peak <= 0) peak = 1.0;
  std::vector<uint8_t> pix(v.size());
  for (size_t p = 0; p < v.size(); ++p) {
    const double t = 0.5 + 0.5 * v[p] / peak;
    pix[p] = static_cast<uint8_t>(std::lround(std::clamp(t, 0.0, 1.0) * 255.0));
  }
  write_png_gray(path, pix, n, n);
}

int panel_excitation(int n_exc) { return std::min(n_exc - 1, (13 * n_exc) / 16); }

}  // namespace

Dataset simulate(const ExperimentConfig& cfg) {
  validate(cfg);
  const Grid grid = make_grid(cfg.n);
  const Rng rng(cfg.seed);

  Dataset ds;
  ds.cfg = cfg;
  ds.s_ref = make_phantom(cfg.phantom_kind(), grid);
  if (cfg.phantom_blur > 0) ds.s_ref = gaussian_blur(ds.s_ref, cfg.phantom_blur);
  ds.u_ref = synth_sequence(motion_config(cfg), grid, rng.substream(1));
  ds.coils = synth_coils(cfg.n_coils, grid, rng.substream(2));

  MotionProblem problem = make_problem(grid, cfg.sampling_path(), cfg.spokes, cfg.readout,
                                       cfg.n_exc, ds.coils, cfg.dcf_iters, cfg.nufft_width);
  problem.threads = cfg.threads;
  ds.y_clean = simulate_samples(ds.u_ref, ds.s_ref, problem);
  ds.y_noisy = add_noise(ds.y_clean, cfg.noise, rng.substream(3));
  return ds;
}

MotionProblem problem_from_dataset(const Dataset& ds, bool use_noisy) {
  const Grid grid = make_grid(ds.cfg.n);
  MotionProblem problem =
      make_problem(grid, ds.cfg.sampling_path(), ds.cfg.spokes, ds.cfg.readout, ds.cfg.n_exc,
                   ds.coils, ds.cfg.dcf_iters, ds.cfg.nufft_width);
  problem.threads = ds.cfg.threads;
  const KSpaceData& raw = (use_noisy && ds.cfg.noise > 0) ? ds.y_noisy : ds.y_clean;
  problem.y = apply_dcf_weights(problem, raw);
  problem.y.noise_level = raw.noise_level;
  return problem;
}

snfl::ComplexTensor flatten_kspace(const KSpaceData& y) {
  snfl::ComplexTensor t;
  size_t total = 0;
  for (const auto& exc : y.y) {
    for (const auto& coil : exc) total += coil.size();
  }
  t.dims = {total};
  t.v.reserve(total);
  for (const auto& exc : y.y) {
    for (const auto& coil : exc) t.v.insert(t.v.end(), coil.begin(), coil.end());
  }
  return t;
}

KSpaceData unflatten_kspace(const snfl::ComplexTensor& t, const std::vector<size_t>& block_sizes,
                            int n_coils, double noise_level) {
  KSpaceData y;
  y.noise_level = noise_level;
  size_t pos = 0;
  for (size_t m : block_sizes) {
    std::vector<std::vector<Complex>> exc;
    for (int c = 0; c < n_coils; ++c) {
      if (pos + m > t.v.size()) {
        throw snfl::Error(snfl::Status::truncated, "k-space payload shorter than expected");
      }
      exc.emplace_back(t.v.begin() + pos, t.v.begin() + pos + m);
      pos += m;
    }
    y.y.push_back(std::move(exc));
  }
  if (pos != t.v.size()) {
    throw snfl::Error(snfl::Status::dtype_mismatch, "k-space payload longer than expected");
  }
  return y;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_text(dir / "manifest.cfg", serialize_config(ds.cfg));
  snfl::save(dir / "s_ref.snfl", ds.s_ref);
  snfl::save(dir / "u_ref.snfl", sequence_tensor(ds.u_ref));

  snfl::ComplexTensor coils;
  const int n = ds.cfg.n;
  coils.dims = {static_cast<uint64_t>(ds.coils.n_coils), static_cast<uint64_t>(n),
                static_cast<uint64_t>(n)};
  for (const auto& m : ds.coils.maps) coils.v.insert(coils.v.end(), m.v.begin(), m.v.end());
  snfl::save(dir / "coils.snfl", coils);

  const Trajectory traj = radial_trajectory(ds.cfg.spokes, ds.cfg.readout, make_grid(n));
  snfl::RealTensor tt;
  tt.dims = {static_cast<uint64_t>(traj.n_spokes), static_cast<uint64_t>(traj.n_readout), 2};
  for (int q = 0; q < traj.samples(); ++q) {
    tt.v.push_back(traj.kx[q]);
    tt.v.push_back(traj.ky[q]);
  }
  snfl::save(dir / "traj.snfl", tt);
  snfl::RealTensor ord;
  ord.dims = {static_cast<uint64_t>(traj.n_spokes)};
  for (int s : traj.order) ord.v.push_back(s);
  snfl::save(dir / "order.snfl", ord);

  snfl::save(dir / "y_clean.snfl", flatten_kspace(ds.y_clean));
  snfl::save(dir / "y_noisy.snfl", flatten_kspace(ds.y_noisy));

  export_image_png(dir / "s_ref.png", ds.s_ref, std::max(1e-12, max_abs(ds.s_ref)));
  const int pe = panel_excitation(ds.cfg.n_exc);
  export_deformation_png(dir / "u_ref_panel.png", ds.u_ref.fields[pe]);
}

Dataset load_dataset(const std::filesystem::path& dir) {
  Dataset ds;
  ds.cfg = parse_config_file(dir / "manifest.cfg");
  ds.s_ref = snfl::load_image(dir / "s_ref.snfl");
  ds.u_ref = sequence_from_tensor(snfl::load_real(dir / "u_ref.snfl"));

  const snfl::ComplexTensor coils = snfl::load_complex(dir / "coils.snfl");
  if (coils.dims.size() != 3 || coils.dims[1] != coils.dims[2]) {
    throw snfl::Error(snfl::Status::dtype_mismatch, "expected [n_coils, n, n] coil tensor");
  }
  const Grid grid = make_grid(static_cast<int>(coils.dims[1]));
  ds.coils.grid = grid;
  ds.coils.n_coils = static_cast<int>(coils.dims[0]);
  for (int c = 0; c < ds.coils.n_coils; ++c) {
    ComplexField m(grid);
    const Complex* base = coils.v.data() + static_cast<size_t>(c) * grid.pixels();
    m.v.assign(base, base + grid.pixels());
    ds.coils.maps.push_back(std::move(m));
  }

  // Block sizes are implied by the (deterministic) sampling structure.
  const Trajectory traj = radial_trajectory(ds.cfg.spokes, ds.cfg.readout, grid);
  const ExcitationMasks masks = partition_excitations(traj, ds.cfg.n_exc, grid);
  std::vector<size_t> blocks(ds.cfg.n_exc);
  for (int i = 0; i < ds.cfg.n_exc; ++i) {
    blocks[i] = ds.cfg.sampling_path() == SamplingPath::dfft ? masks.grid_points[i].size()
                                                             : masks.sample_ids[i].size();
  }
  ds.y_clean = unflatten_kspace(snfl::load_complex(dir / "y_clean.snfl"), blocks,
                                ds.cfg.n_coils, 0.0);
  ds.y_noisy = unflatten_kspace(snfl::load_complex(dir / "y_noisy.snfl"), blocks,
                                ds.cfg.n_coils, ds.cfg.noise);
  return ds;
}

Image support_mask(const Image& s_ref) {
  Image mask(s_ref.grid);
  const double thresh = 1e-6 * std::max(1e-300, max_abs(s_ref));
  for (size_t p = 0; p < s_ref.v.size(); ++p) mask.v[p] = s_ref.v[p] > thresh ? 1.0 : 0.0;
  return mask;
}

PipelineResult run_pipeline(const Dataset& ds, const std::filesystem::path* out_dir) {
  const ExperimentConfig& cfg = ds.cfg;
  PipelineResult out;
  MotionProblem problem = problem_from_dataset(ds, true);
  const Image mask = support_mask(ds.s_ref);
  const double range = std::max(1e-12, max_abs(ds.s_ref));
  const DeformationSequence identity = DeformationSequence::identity(problem.grid, cfg.n_exc);

  ReconConfig main_cfg;
  main_cfg.n_cg = cfg.cg_iters;
  main_cfg.tol = cfg.tol;
  main_cfg.positivity = cfg.positivity;

  // Static reconstruction.
  auto t0 = std::chrono::steady_clock::now();
  out.s_static = cg_sense_motion(problem, identity, Image(problem.grid), main_cfg).s;
  out.stage_seconds["static_recon"] = seconds_since(t0);

  // Per-excitation undersampled reconstructions.
  t0 = std::chrono::steady_clock::now();
  ReconConfig sub_cfg = main_cfg;
  sub_cfg.n_cg = cfg.sub_cg_iters;
  for (int i = 0; i < cfg.n_exc; ++i) {
    out.s_i.push_back(per_excitation_recon(problem, i, sub_cfg));
  }
  out.stage_seconds["s_i"] = seconds_since(t0);

  // Motion estimation.
  t0 = std::chrono::steady_clock::now();
  EstimateConfig est_cfg;
  est_cfg.n_iter = cfg.est_iters;
  est_cfg.pyramid_levels = cfg.est_pyramid;
  est_cfg.steps_per_level = cfg.est_steps;
  est_cfg.smoothness = cfg.est_smoothness;
  est_cfg.temporal_window = cfg.est_window;
  est_cfg.threads = cfg.threads;
  const ClassicalRefiner refiner(est_cfg);
  std::vector<double> est_log;
  out.u_est = estimate_motion(out.s_i, est_cfg, refiner, &est_log);
  out.stage_seconds["estimate"] = seconds_since(t0);
  out.s_est = cg_sense_motion(problem, out.u_est, Image(problem.grid), main_cfg).s;

  // Motion correction.
  t0 = std::chrono::steady_clock::now();
  CorrectionConfig cor_cfg;
  cor_cfg.levels = cfg.levels;
  cor_cfg.n_iter = cfg.cor_iters;
  cor_cfg.n_cg = cfg.cor_cg_iters;
  cor_cfg.backtrack = cfg.backtrack;
  cor_cfg.positivity = cfg.positivity;
  cor_cfg.threads = cfg.threads;
  const IdentityProjector identity_projector;
  const SplineProjector spline_projector(cfg.projector_spacing);
  const Projector& projector =
      cfg.projector == "spline" ? static_cast<const Projector&>(spline_projector)
                                : static_cast<const Projector&>(identity_projector);
  const CorrectionResult cor = correct_motion(problem, out.u_est, cor_cfg, projector);
  out.u_cor = cor.u;
  out.stage_seconds["correct"] = seconds_since(t0);

  // Final reconstruction (+ optional TV).
  t0 = std::chrono::steady_clock::now();
  out.s_cor = cg_sense_motion(problem, out.u_cor, Image(problem.grid), main_cfg).s;
  out.s_tv = cfg.tv_lambda > 0 ? tv_denoise(out.s_cor, cfg.tv_lambda, cfg.tv_iters) : out.s_cor;
  out.stage_seconds["reconstruct"] = seconds_since(t0);

  // Rigid baseline.
  if (cfg.baseline_rigid) {
    t0 = std::chrono::steady_clock::now();
    std::vector<RigidParams> p0;
    for (int i = 0; i < cfg.n_exc; ++i) p0.push_back(fit_rigid(out.u_est.fields[i]));
    RigidRefineConfig rr_cfg;
    rr_cfg.n_cg = cfg.cor_cg_iters;
    rr_cfg.positivity = cfg.positivity;
    rr_cfg.threads = cfg.threads;
    const RigidRefineResult rr = rigid_refine(problem, p0, rr_cfg);
    out.rigid_params = rr.params;
    DeformationSequence u_rigid;
    for (int i = 0; i < cfg.n_exc; ++i) {
      u_rigid.fields.push_back(rigid_field(rr.params[i], problem.grid));
    }
    MetricRow row;
    row.method = "rigid";
    row.res = residuum(u_rigid, rr.s, problem).j;
    row.im = image_metrics(rr.s, ds.s_ref, range);
    row.def_rmse = deformation_rmse(u_rigid, ds.u_ref, mask);
    out.rows.push_back(row);
    out.stage_seconds["rigid"] = seconds_since(t0);
  }

  // Evaluation.
  t0 = std::chrono::steady_clock::now();
  std::optional<double> incompat;
  if (cfg.noise > 0) incompat = static_incompatibility(problem);

  auto add_row = [&](const std::string& method, const DeformationSequence& u, const Image& s,
                     std::optional<double> def_rmse) {
    MetricRow row;
    row.method = method;
    row.res = residuum(u, s, problem).j;
    row.im = image_metrics(s, ds.s_ref, range);
    row.def_rmse = def_rmse;
    row.static_incompat = incompat;
    out.rows.push_back(row);
  };
  add_row("static", identity, out.s_static, std::nullopt);
  add_row("estimate", out.u_est, out.s_est, deformation_rmse(out.u_est, ds.u_ref, mask));
  add_row("estimate+correct", out.u_cor, out.s_cor, deformation_rmse(out.u_cor, ds.u_ref, mask));
  if (cfg.tv_lambda > 0) {
    add_row("estimate+correct+tv", out.u_cor, out.s_tv,
            deformation_rmse(out.u_cor, ds.u_ref, mask));
  }
  // Keep the method order stable: rigid (when present) sorts after static.
  std::stable_sort(out.rows.begin(), out.rows.end(),
                   [](const MetricRow& a, const MetricRow& b) {
                     auto rank = [](const std::string& m) {
                       if (m == "static") return 0;
                       if (m == "rigid") return 1;
                       if (m == "estimate") return 2;
                       if (m == "estimate+correct") return 3;
                       return 4;
                     };
                     return rank(a.method) < rank(b.method);
                   });
  out.stage_seconds["evaluate"] = seconds_since(t0);

  if (out_dir) {
    const std::filesystem::path dir = *out_dir;
    std::filesystem::create_directories(dir);
    snfl::RealTensor si;
    si.dims = {static_cast<uint64_t>(cfg.n_exc), static_cast<uint64_t>(cfg.n),
               static_cast<uint64_t>(cfg.n)};
    for (const auto& im : out.s_i) si.v.insert(si.v.end(), im.v.begin(), im.v.end());
    snfl::save(dir / "s_i.snfl", si);
    snfl::save(dir / "u_est.snfl", sequence_tensor(out.u_est));
    snfl::save(dir / "u_cor.snfl", sequence_tensor(out.u_cor));
    snfl::save(dir / "s_static.snfl", out.s_static);
    snfl::save(dir / "s_est.snfl", out.s_est);
    snfl::save(dir / "s_cor.snfl", out.s_cor);
    if (cfg.tv_lambda > 0) snfl::save(dir / "s_tv.snfl", out.s_tv);

    export_image_png(dir / "s_static.png", out.s_static, range);
    export_image_png(dir / "s_est.png", out.s_est, range);
    export_image_png(dir / "s_cor.png", out.s_cor, range);
    if (cfg.tv_lambda > 0) export_image_png(dir / "s_tv.png", out.s_tv, range);
    const int pe = panel_excitation(cfg.n_exc);
    export_image_png(dir / "s_i_panel.png", out.s_i[pe], range);
    export_deformation_png(dir / "u_est_panel.png", out.u_est.fields[pe]);
    export_deformation_png(dir / "u_cor_panel.png", out.u_cor.fields[pe]);

    // Preconditioned gradient maps at the estimate and corrected states.
    for (const bool corrected : {false, true}) {
      const DeformationSequence& u = corrected ? out.u_cor : out.u_est;
      const Image& s = corrected ? out.s_cor : out.s_est;
      const GradientField g = grad_u(problem, u, s);
      const HessianInfo h = hessian_diag(problem, u, s);
      const GradientField step = precondition(g, h);
      export_signed_png(dir / (corrected ? "gradmap_cor.png" : "gradmap_est.png"), step.gy[pe],
                        cfg.n);
    }

    std::ostringstream log;
    log << "estimate iterations: " << est_log.size() << "\n";
    for (size_t i = 0; i < est_log.size(); ++i) {
      log << "iter " << (i + 1) << " mean |update| px: " << fmt(est_log[i]) << "\n";
    }
    write_text(dir / "estimate_log.txt", log.str());

    write_text(dir / "report.csv", format_report_csv(cfg.name, out.rows));
    write_text(dir / "report.txt", format_report_text(cfg.name, out.rows));
    write_text(dir / "timings.csv", format_timings_csv(cfg.name, out.stage_seconds));
  }
  return out;
}

std::string format_report_csv(const std::string& run_name, const std::vector<MetricRow>& rows) {
  std::ostringstream o;
  o << "run,method,res,psnr_db,ssim,mse,def_rmse_px,static_incompat\n";
  for (const auto& r : rows) {
    o << run_name << ',' << r.method << ',' << fmt(r.res) << ','
      << (r.im.psnr_infinite ? "inf" : fmt(r.im.psnr)) << ',' << fmt(r.im.ssim) << ','
      << fmt(r.im.mse) << ',' << (r.def_rmse ? fmt(*r.def_rmse) : "") << ','
      << (r.static_incompat ? fmt(*r.static_incompat) : "") << "\n";
  }
  return o.str();
}

std::string format_report_text(const std::string& run_name, const std::vector<MetricRow>& rows) {
  std::ostringstream o;
  o << "run: " << run_name << "\n";
  char head[128];
  std::snprintf(head, sizeof head, "%-22s %12s %9s %8s %9s %12s\n", "method", "Res", "PSNR",
                "SSIM", "MSE", "defRMSE[px]");
  o << head;
  for (const auto& r : rows) {
    char line[160];
    std::snprintf(line, sizeof line, "%-22s %12.4g %9s %8.4f %9.4f %12s\n", r.method.c_str(),
                  r.res, r.im.psnr_infinite ? "inf" : fmt4(r.im.psnr).c_str(), r.im.ssim,
                  r.im.mse, r.def_rmse ? fmt4(*r.def_rmse).c_str() : "-");
    o << line;
  }
  for (const auto& r : rows) {
    if (r.static_incompat) {
      o << "static incompatibility: " << fmt4(*r.static_incompat) << "\n";
      break;
    }
  }
  return o.str();
}

std::string format_timings_csv(const std::string& run_name,
                               const std::map<std::string, double>& seconds) {
  std::ostringstream o;
  o << "run,stage,seconds\n";
  for (const auto& [stage, sec] : seconds) {
    o << run_name << ',' << stage << ',' << fmt(sec) << "\n";
  }
  return o.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write: " + path.string());
  f << text;
  if (!f) throw std::runtime_error("short write: " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read: " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace moco
