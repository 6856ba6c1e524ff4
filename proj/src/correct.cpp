#include "correct.hpp"

#include <cmath>
#include <stdexcept>

#include "parallel.hpp"

namespace moco {

namespace {

ComplexField block_average(const ComplexField& in, int factor) {
  const int n = in.grid.n / factor;
  ComplexField out(Grid{n});
  const double inv = 1.0 / (factor * factor);
  for (int j = 0; j < n; ++j) {
    for (int k = 0; k < n; ++k) {
      Complex acc(0, 0);
      for (int a = 0; a < factor; ++a) {
        for (int b = 0; b < factor; ++b) {
          acc += in.at(j * factor + a, k * factor + b);
        }
      }
      out.at(j, k) = acc * inv;
    }
  }
  return out;
}

}  // namespace

MotionProblem crop_kspace(const MotionProblem& problem, int level) {
  if (level < 0) throw std::invalid_argument("crop level must be >= 0");
  if (level == 0) return problem;
  const int factor = 1 << level;
  if (problem.grid.n % factor != 0) {
    throw std::invalid_argument("grid size not divisible by 2^level");
  }
  const int nh = problem.grid.n / factor;
  const Grid grid_h = make_grid(nh);
  const double scale = 1.0 / factor;

  MotionProblem out;
  out.grid = grid_h;
  out.path = problem.path;
  out.n_exc = problem.n_exc;
  out.n_coils = problem.n_coils;
  out.threads = problem.threads;
  out.traj = problem.traj;
  out.coils.grid = grid_h;
  out.coils.n_coils = problem.n_coils;
  out.coils.center_x = problem.coils.center_x;
  out.coils.center_y = problem.coils.center_y;
  out.coils.width = problem.coils.width;
  for (const auto& m : problem.coils.maps) out.coils.maps.push_back(block_average(m, factor));

  out.masks.n_exc = problem.n_exc;
  out.masks.spokes = problem.masks.spokes;
  out.masks.sample_ids.resize(problem.n_exc);
  out.masks.grid_points.resize(problem.n_exc);
  out.masks.m.resize(problem.n_exc);
  out.y.noise_level = problem.y.noise_level;
  if (!problem.y.y.empty()) out.y.y.resize(problem.n_exc);

  const int n = problem.grid.n;
  const int half = n / 2;
  const int half_h = nh / 2;

  if (problem.path == SamplingPath::dfft) {
    for (int i = 0; i < problem.n_exc; ++i) {
      const auto& pts = problem.masks.grid_points[i];
      std::vector<int> kept_pos;
      for (size_t q = 0; q < pts.size(); ++q) {
        const int v = pts[q] / n - half;
        const int u = pts[q] % n - half;
        if (u >= -half_h && u < half_h && v >= -half_h && v < half_h) {
          kept_pos.push_back(static_cast<int>(q));
          out.masks.grid_points[i].push_back((v + half_h) * nh + (u + half_h));
        }
      }
      out.masks.m[i] = static_cast<int>(out.masks.grid_points[i].size());
      out.masks.sample_ids[i] = problem.masks.sample_ids[i];
      if (!problem.y.y.empty()) {
        out.y.y[i].resize(problem.n_coils);
        for (int c = 0; c < problem.n_coils; ++c) {
          out.y.y[i][c].reserve(kept_pos.size());
          for (int q : kept_pos) {
            out.y.y[i][c].push_back(problem.y.y[i][c][q] * scale);
          }
        }
      }
    }
    return out;
  }

  // NUFFT path: keep trajectory samples inside the reduced k-space disc,
  // undo the full-grid density weighting and reweight per level.
  out.dcf.resize(problem.n_exc);
  out.nufft_ops.resize(problem.n_exc);
  const int width = problem.nufft_ops.empty() ? kNufftDefaultWidth : problem.nufft_ops[0]->width();
  for (int i = 0; i < problem.n_exc; ++i) {
    const auto& ids = problem.masks.sample_ids[i];
    std::vector<int> kept_pos;
    std::vector<int> kept_ids;
    for (size_t q = 0; q < ids.size(); ++q) {
      const double kx = problem.traj.kx[ids[q]];
      const double ky = problem.traj.ky[ids[q]];
      if (std::hypot(kx, ky) <= 0.5 * nh + 1e-12) {
        kept_pos.push_back(static_cast<int>(q));
        kept_ids.push_back(ids[q]);
      }
    }
    out.masks.sample_ids[i] = kept_ids;
    out.masks.m[i] = static_cast<int>(kept_ids.size());
    out.dcf[i] = pipe_dcf_samples(problem.traj, kept_ids, 10, grid_h);
    std::vector<double> kx, ky;
    for (int sid : kept_ids) {
      kx.push_back(problem.traj.kx[sid]);
      ky.push_back(problem.traj.ky[sid]);
    }
    out.nufft_ops[i] = std::make_shared<Nufft>(grid_h, std::move(kx), std::move(ky), width);
    if (!problem.y.y.empty()) {
      out.y.y[i].resize(problem.n_coils);
      for (int c = 0; c < problem.n_coils; ++c) {
        out.y.y[i][c].reserve(kept_pos.size());
        for (size_t t = 0; t < kept_pos.size(); ++t) {
          const int q = kept_pos[t];
          const double w_full = std::sqrt(problem.dcf[i][q]);
          const double w_level = std::sqrt(out.dcf[i][t]);
          const Complex raw = w_full > 0 ? problem.y.y[i][c][q] / w_full : Complex(0, 0);
          out.y.y[i][c].push_back(raw * w_level * scale);
        }
      }
    }
  }
  return out;
}

namespace {

// Bilinear resampling between pixel-center lattices; edge cells extrapolate.
std::vector<double> resample_plane(const std::vector<double>& in, int n_from, int n_to) {
  std::vector<double> out(static_cast<size_t>(n_to) * n_to);
  const double ratio = static_cast<double>(n_from) / n_to;
  for (int j = 0; j < n_to; ++j) {
    const double r = (j + 0.5) * ratio - 0.5;
    const int j0 = std::max(0, std::min(static_cast<int>(std::floor(r)), n_from - 2));
    const double fr = r - j0;
    for (int k = 0; k < n_to; ++k) {
      const double c = (k + 0.5) * ratio - 0.5;
      const int k0 = std::max(0, std::min(static_cast<int>(std::floor(c)), n_from - 2));
      const double fc = c - k0;
      auto at = [&](int jj, int kk) { return in[static_cast<size_t>(jj) * n_from + kk]; };
      out[static_cast<size_t>(j) * n_to + k] =
          (1 - fr) * ((1 - fc) * at(j0, k0) + fc * at(j0, k0 + 1)) +
          fr * ((1 - fc) * at(j0 + 1, k0) + fc * at(j0 + 1, k0 + 1));
    }
  }
  return out;
}

}  // namespace

Image resample_image(const Image& in, int n_to) {
  Image out(make_grid(n_to));
  out.v = resample_plane(in.v, in.grid.n, n_to);
  for (double& v : out.v) v = std::max(0.0, v);
  return out;
}

DeformationField resample_field(const DeformationField& in, int n_to) {
  DeformationField out(make_grid(n_to));
  out.px = resample_plane(in.px, in.grid.n, n_to);
  out.py = resample_plane(in.py, in.grid.n, n_to);
  const double scale = static_cast<double>(n_to) / in.grid.n;
  for (double& v : out.px) v *= scale;
  for (double& v : out.py) v *= scale;
  return out;
}

DeformationSequence resample_sequence(const DeformationSequence& in, int n_to) {
  DeformationSequence out;
  out.fields.reserve(in.fields.size());
  for (const auto& f : in.fields) out.fields.push_back(resample_field(f, n_to));
  return out;
}

namespace {

// Dense SPD Cholesky solve (control grids are small).
void cholesky_solve(std::vector<double>& a, int n, std::vector<double>& rhs, int nrhs) {
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) {
      double sum = a[static_cast<size_t>(i) * n + j];
      for (int k = 0; k < j; ++k) {
        sum -= a[static_cast<size_t>(i) * n + k] * a[static_cast<size_t>(j) * n + k];
      }
      if (i == j) {
        if (sum <= 0) throw std::runtime_error("spline projector: singular normal matrix");
        a[static_cast<size_t>(i) * n + j] = std::sqrt(sum);
      } else {
        a[static_cast<size_t>(i) * n + j] = sum / a[static_cast<size_t>(j) * n + j];
      }
    }
  }
  for (int r = 0; r < nrhs; ++r) {
    double* b = rhs.data() + static_cast<size_t>(r) * n;
    for (int i = 0; i < n; ++i) {
      double sum = b[i];
      for (int k = 0; k < i; ++k) sum -= a[static_cast<size_t>(i) * n + k] * b[k];
      b[i] = sum / a[static_cast<size_t>(i) * n + i];
    }
    for (int i = n - 1; i >= 0; --i) {
      double sum = b[i];
      for (int k = i + 1; k < n; ++k) sum -= a[static_cast<size_t>(k) * n + i] * b[k];
      b[i] = sum / a[static_cast<size_t>(i) * n + i];
    }
  }
}

double cubic_bspline(double u) {
  const double au = std::fabs(u);
  if (au < 1.0) return (4.0 - 6.0 * au * au + 3.0 * au * au * au) / 6.0;
  if (au < 2.0) {
    const double t = 2.0 - au;
    return t * t * t / 6.0;
  }
  return 0.0;
}

struct SplineBasis {
  int nc = 0;
  std::vector<double> b;   // n x nc evaluation matrix
  std::vector<double> fit;  // nc x n = (B^T B)^{-1} B^T
};

SplineBasis make_basis(int n, double spacing) {
  SplineBasis basis;
  const int cells = std::max(1, static_cast<int>(std::ceil((n - 1) / spacing)));
  basis.nc = cells + 3;  // one margin control on each side of the cubic support
  basis.b.assign(static_cast<size_t>(n) * basis.nc, 0.0);
  for (int p = 0; p < n; ++p) {
    for (int c = 0; c < basis.nc; ++c) {
      basis.b[static_cast<size_t>(p) * basis.nc + c] = cubic_bspline(p / spacing - (c - 1));
    }
  }
  // fit = (B^T B)^{-1} B^T via Cholesky on the (small) normal matrix.
  std::vector<double> btb(static_cast<size_t>(basis.nc) * basis.nc, 0.0);
  for (int i = 0; i < basis.nc; ++i) {
    for (int j = 0; j < basis.nc; ++j) {
      double s = 0;
      for (int p = 0; p < n; ++p) {
        s += basis.b[static_cast<size_t>(p) * basis.nc + i] *
             basis.b[static_cast<size_t>(p) * basis.nc + j];
      }
      btb[static_cast<size_t>(i) * basis.nc + j] = s;
    }
  }
  std::vector<double> rhs(static_cast<size_t>(basis.nc) * n, 0.0);
  for (int p = 0; p < n; ++p) {
    for (int c = 0; c < basis.nc; ++c) {
      rhs[static_cast<size_t>(p) * basis.nc + c] =
          basis.b[static_cast<size_t>(p) * basis.nc + c];
    }
  }
  // Dense control grids (spacing ~1) make the normal matrix singular; retry
  // with a minimal ridge only in that case.
  try {
    std::vector<double> a = btb;
    std::vector<double> r = rhs;
    cholesky_solve(a, basis.nc, r, n);
    rhs = std::move(r);
  } catch (const std::runtime_error&) {
    double trace = 0;
    for (int i = 0; i < basis.nc; ++i) trace += btb[static_cast<size_t>(i) * basis.nc + i];
    for (int i = 0; i < basis.nc; ++i) {
      btb[static_cast<size_t>(i) * basis.nc + i] += 1e-12 * trace;
    }
    cholesky_solve(btb, basis.nc, rhs, n);
  }
  basis.fit.assign(static_cast<size_t>(basis.nc) * n, 0.0);
  for (int p = 0; p < n; ++p) {
    for (int c = 0; c < basis.nc; ++c) {
      basis.fit[static_cast<size_t>(c) * n + p] = rhs[static_cast<size_t>(p) * basis.nc + c];
    }
  }
  return basis;
}

// projected = B (fit D fit^T) B^T applied to one displacement plane.
std::vector<double> project_plane(const std::vector<double>& d, int n, const SplineBasis& basis) {
  const int nc = basis.nc;
  std::vector<double> tmp(static_cast<size_t>(nc) * n, 0.0);  // fit * D
  for (int c = 0; c < nc; ++c) {
    for (int k = 0; k < n; ++k) {
      double s = 0;
      for (int p = 0; p < n; ++p) {
        s += basis.fit[static_cast<size_t>(c) * n + p] * d[static_cast<size_t>(p) * n + k];
      }
      tmp[static_cast<size_t>(c) * n + k] = s;
    }
  }
  std::vector<double> coef(static_cast<size_t>(nc) * nc, 0.0);  // (fit D) fit^T
  for (int c = 0; c < nc; ++c) {
    for (int c2 = 0; c2 < nc; ++c2) {
      double s = 0;
      for (int k = 0; k < n; ++k) {
        s += tmp[static_cast<size_t>(c) * n + k] * basis.fit[static_cast<size_t>(c2) * n + k];
      }
      coef[static_cast<size_t>(c) * nc + c2] = s;
    }
  }
  std::vector<double> rows(static_cast<size_t>(n) * nc, 0.0);  // B coef
  for (int p = 0; p < n; ++p) {
    for (int c2 = 0; c2 < nc; ++c2) {
      double s = 0;
      for (int c = 0; c < nc; ++c) {
        s += basis.b[static_cast<size_t>(p) * nc + c] * coef[static_cast<size_t>(c) * nc + c2];
      }
      rows[static_cast<size_t>(p) * nc + c2] = s;
    }
  }
  std::vector<double> out(static_cast<size_t>(n) * n, 0.0);
  for (int p = 0; p < n; ++p) {
    for (int k = 0; k < n; ++k) {
      double s = 0;
      for (int c2 = 0; c2 < nc; ++c2) {
        s += rows[static_cast<size_t>(p) * nc + c2] * basis.b[static_cast<size_t>(k) * nc + c2];
      }
      out[static_cast<size_t>(p) * n + k] = s;
    }
  }
  return out;
}

}  // namespace

DeformationField SplineProjector::project(const DeformationField& f, int level) const {
  const int n = f.grid.n;
  const double spacing = std::max(1.0, spacing_h0_ / (1 << std::max(0, level)));
  const SplineBasis basis = make_basis(n, spacing);

  const DeformationField id = DeformationField::identity(f.grid);
  std::vector<double> dx(f.px.size()), dy(f.py.size());
  for (size_t p = 0; p < dx.size(); ++p) {
    dx[p] = f.px[p] - id.px[p];
    dy[p] = f.py[p] - id.py[p];
  }
  DeformationField out(f.grid);
  const std::vector<double> px = project_plane(dx, n, basis);
  const std::vector<double> py = project_plane(dy, n, basis);
  for (size_t p = 0; p < dx.size(); ++p) {
    out.px[p] = id.px[p] + px[p];
    out.py[p] = id.py[p] + py[p];
  }
  return out;
}

CorrectionResult correct_motion(const MotionProblem& problem, const DeformationSequence& u_est,
                                const CorrectionConfig& cfg, const Projector& projector) {
  if (cfg.levels < 0 || cfg.n_iter < 1) throw std::invalid_argument("bad correction config");
  if (u_est.size() != problem.n_exc) throw std::invalid_argument("correct: excitation mismatch");

  CorrectionResult result;
  result.j_per_level.resize(cfg.levels + 1);

  const int coarse_n = problem.grid.n >> cfg.levels;
  DeformationSequence u = resample_sequence(u_est, coarse_n);
  Image s(make_grid(coarse_n));

  for (int h = cfg.levels; h >= 0; --h) {
    const MotionProblem prob_h = crop_kspace(problem, h);
    if (h < cfg.levels) {
      u = resample_sequence(u, prob_h.grid.n);
      s = resample_image(s, prob_h.grid.n);
    }
    u.fields[0] = DeformationField::identity(prob_h.grid);
    auto& jlog = result.j_per_level[h];

    ReconConfig cg_cfg;
    cg_cfg.n_cg = cfg.n_cg;
    cg_cfg.positivity = cfg.positivity;

    for (int round = 0; round < cfg.n_iter; ++round) {
      ReconResult rec = cg_sense_motion(prob_h, u, s, cg_cfg);
      s = rec.s;
      double j_total = residuum(u, s, prob_h).j;
      if (!std::isfinite(j_total)) throw std::runtime_error("correct: non-finite objective");
      jlog.push_back(j_total);

      const GradientField grad = grad_u(prob_h, u, s);
      const HessianInfo hess = hessian_diag(prob_h, u, s);
      const GradientField step = precondition(grad, hess);

      std::vector<double> j_after(problem.n_exc, 0.0);
      parallel_for(problem.n_exc - 1, cfg.threads, [&](int idx) {
        const int i = idx + 1;
        double j_i = residual_excitation(u.fields[i], s, prob_h, i);
        double alpha = 1.0;
        for (int bt = 0; bt <= cfg.backtrack; ++bt) {
          DeformationField cand = u.fields[i];
          for (size_t p = 0; p < cand.px.size(); ++p) {
            cand.px[p] -= alpha * step.gx[i][p];
            cand.py[p] -= alpha * step.gy[i][p];
          }
          cand = projector.project(cand, h);
          const double j_cand = residual_excitation(cand, s, prob_h, i);
          if (j_cand < j_i) {
            u.fields[i] = std::move(cand);
            j_i = j_cand;
            break;
          }
          alpha *= 0.5;
        }
        j_after[i] = j_i;
      });
      j_after[0] = residual_excitation(u.fields[0], s, prob_h, 0);
      double j_round = 0;
      for (double v : j_after) j_round += v;
      jlog.push_back(j_round);
    }

    if (h == 0) {
      ReconResult rec = cg_sense_motion(prob_h, u, s, cg_cfg);
      s = rec.s;
      jlog.push_back(residuum(u, s, prob_h).j);
    }
  }

  result.u = std::move(u);
  result.s = std::move(s);
  return result;
}

}  // namespace moco
