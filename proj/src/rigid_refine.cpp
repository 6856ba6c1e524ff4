#include "rigid_refine.hpp"

#include <cmath>
#include <stdexcept>

#include "cg_sense.hpp"
#include "deform_synth.hpp"
#include "fft.hpp"
#include "parallel.hpp"

namespace moco {

namespace {

// Forward of one coil-weighted plane through excitation i's sampling.
std::vector<Complex> sample_block(const MotionProblem& problem, int exc,
                                  const std::vector<double>& plane, int coil) {
  const Grid& g = problem.grid;
  ComplexField cw(g);
  for (size_t p = 0; p < cw.v.size(); ++p) {
    cw.v[p] = problem.coils.maps[coil].v[p] * plane[p];
  }
  if (problem.path == SamplingPath::dfft) {
    fft::dft2_centered(cw.v, g.n);
    const auto& pts = problem.masks.grid_points[exc];
    std::vector<Complex> out(pts.size());
    for (size_t q = 0; q < pts.size(); ++q) out[q] = cw.v[pts[q]];
    return out;
  }
  std::vector<Complex> out = problem.nufft_ops[exc]->forward(cw);
  for (size_t q = 0; q < out.size(); ++q) out[q] *= std::sqrt(problem.dcf[exc][q]);
  return out;
}

bool solve3(double a[3][3], double b[3], double x[3]) {
  int piv[3] = {0, 1, 2};
  for (int col = 0; col < 3; ++col) {
    int best = col;
    for (int r = col + 1; r < 3; ++r) {
      if (std::fabs(a[piv[r]][col]) > std::fabs(a[piv[best]][col])) best = r;
    }
    std::swap(piv[col], piv[best]);
    const double p = a[piv[col]][col];
    if (std::fabs(p) < 1e-14) return false;
    for (int r = col + 1; r < 3; ++r) {
      const double f = a[piv[r]][col] / p;
      for (int c2 = col; c2 < 3; ++c2) a[piv[r]][c2] -= f * a[piv[col]][c2];
      b[piv[r]] -= f * b[piv[col]];
    }
  }
  for (int row = 2; row >= 0; --row) {
    double s = b[piv[row]];
    for (int c2 = row + 1; c2 < 3; ++c2) s -= a[piv[row]][c2] * x[c2];
    x[row] = s / a[piv[row]][row];
  }
  return true;
}

}  // namespace

RigidRefineResult rigid_refine(const MotionProblem& problem, const std::vector<RigidParams>& p0,
                               const RigidRefineConfig& cfg) {
  if (static_cast<int>(p0.size()) != problem.n_exc) {
    throw std::invalid_argument("rigid_refine: parameter count mismatch");
  }
  for (const auto& p : p0) {
    if (!std::isfinite(p.theta) || !std::isfinite(p.shift_x) || !std::isfinite(p.shift_y)) {
      throw std::invalid_argument("rigid_refine: non-finite initial parameters");
    }
  }
  const Grid& g = problem.grid;
  RigidRefineResult result;
  result.params = p0;
  result.params[0] = RigidParams{};
  result.converged.assign(problem.n_exc, true);
  result.singular.assign(problem.n_exc, false);
  std::vector<double> last_step(problem.n_exc, 0.0);

  Image s(g);
  ReconConfig cg_cfg;
  cg_cfg.n_cg = cfg.n_cg;
  cg_cfg.positivity = cfg.positivity;

  for (int outer = 0; outer < cfg.outer_iters; ++outer) {
    DeformationSequence u;
    for (int i = 0; i < problem.n_exc; ++i) {
      u.fields.push_back(rigid_field(result.params[i], g));
    }
    s = cg_sense_motion(problem, u, s, cg_cfg).s;

    parallel_for(problem.n_exc - 1, cfg.threads, [&](int idx) {
      const int i = idx + 1;
      if (result.singular[i]) return;
      const RigidParams& pr = result.params[i];
      const DeformationField field = rigid_field(pr, g);
      const Image warped = apply(field, s);
      const std::vector<double> dux = du_dp(field, s, Axis::x);
      const std::vector<double> duy = du_dp(field, s, Axis::y);

      // Chain rule: directional image derivatives for (theta, tx, ty).
      const double ct = std::cos(pr.theta), st = std::sin(pr.theta);
      std::vector<double> v[3];
      for (auto& vv : v) vv.resize(g.pixels());
      for (int j = 0; j < g.n; ++j) {
        for (int k = 0; k < g.n; ++k) {
          const size_t p = static_cast<size_t>(j) * g.n + k;
          const double dx = g.x(k) - pr.shift_x;
          const double dy = g.y(j) - pr.shift_y;
          const double dpx_dtheta = -st * dx + ct * dy;
          const double dpy_dtheta = -ct * dx - st * dy;
          v[0][p] = dux[p] * dpx_dtheta + duy[p] * dpy_dtheta;
          v[1][p] = dux[p] * (-ct) + duy[p] * st;   // d/d shift_x
          v[2][p] = dux[p] * (-st) + duy[p] * (-ct);  // d/d shift_y
        }
      }

      double gn[3][3] = {};
      double rhs[3] = {};
      for (int c = 0; c < problem.n_coils; ++c) {
        std::vector<Complex> w = sample_block(problem, i, warped.v, c);
        for (size_t q = 0; q < w.size(); ++q) w[q] -= problem.y.y[i][c][q];
        std::vector<Complex> e[3];
        for (int a = 0; a < 3; ++a) e[a] = sample_block(problem, i, v[a], c);
        for (int a = 0; a < 3; ++a) {
          for (int b = a; b < 3; ++b) {
            double s2 = 0;
            for (size_t q = 0; q < w.size(); ++q) {
              s2 += std::real(std::conj(e[a][q]) * e[b][q]);
            }
            gn[a][b] += 2.0 * s2;
          }
          double sg = 0;
          for (size_t q = 0; q < w.size(); ++q) sg += std::real(std::conj(w[q]) * e[a][q]);
          rhs[a] -= 2.0 * sg;
        }
      }
      gn[1][0] = gn[0][1];
      gn[2][0] = gn[0][2];
      gn[2][1] = gn[1][2];
      const double damp = cfg.damping * (gn[0][0] + gn[1][1] + gn[2][2]);
      for (int a = 0; a < 3; ++a) gn[a][a] += damp;

      double delta[3];
      if (!solve3(gn, rhs, delta)) {
        result.singular[i] = true;
        result.converged[i] = false;
        return;
      }
      result.params[i].theta += delta[0];
      result.params[i].shift_x += delta[1];
      result.params[i].shift_y += delta[2];
      last_step[i] = std::sqrt(delta[0] * delta[0] + delta[1] * delta[1] + delta[2] * delta[2]);
    });
  }

  DeformationSequence u;
  for (int i = 0; i < problem.n_exc; ++i) {
    u.fields.push_back(rigid_field(result.params[i], g));
  }
  ReconResult final_rec = cg_sense_motion(problem, u, s, cg_cfg);
  result.s = final_rec.s;
  result.j_final = final_rec.objective.back();
  for (int i = 1; i < problem.n_exc; ++i) {
    if (!result.singular[i]) result.converged[i] = last_step[i] < cfg.step_tol;
  }
  return result;
}

}  // namespace moco
