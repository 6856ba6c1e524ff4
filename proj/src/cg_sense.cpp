#include "cg_sense.hpp"

#include <cmath>
#include <stdexcept>

namespace moco {

namespace {

Image as_image(Grid g, std::vector<double> v) {
  Image im(g);
  im.v = std::move(v);
  return im;
}

}  // namespace

ReconResult cg_sense_motion(const MotionProblem& problem, const DeformationSequence& u,
                            const Image& s0, const ReconConfig& cfg) {
  if (cfg.n_cg < 1) throw std::invalid_argument("n_cg must be >= 1");
  if (!(s0.grid == problem.grid)) throw std::invalid_argument("cg: grid mismatch");
  const size_t npx = problem.grid.pixels();

  Image s = s0;
  if (cfg.positivity) {
    for (double& v : s.v) v = std::max(0.0, v);
  }
  KSpaceData r = problem.y - forward(u, s, problem);
  double f = r.norm2();
  if (!std::isfinite(f)) throw std::runtime_error("cg: non-finite objective at start");

  ReconResult result;
  result.objective.push_back(f);
  const double stop = cfg.tol * cfg.tol * problem.y.norm2();

  std::vector<double> g_prev, d;
  double g_prev_dot = 0.0;
  bool reset = true;
  int stalls = 0;

  for (int it = 0; it < cfg.n_cg; ++it) {
    if (f <= stop) break;

    std::vector<double> g = adjoint(r, u, problem);
    for (double& v : g) v *= -2.0;  // grad of |A s - y|^2, r = y - A s
    if (cfg.positivity) {
      for (size_t p = 0; p < npx; ++p) {
        if (s.v[p] <= 0.0 && g[p] > 0.0) g[p] = 0.0;  // active bound
      }
    }
    const double g_dot = dot(g, g);
    if (g_dot <= 1e-300) {
      result.objective.push_back(f);
      break;
    }
    double beta = 0.0;
    if (!reset && !g_prev.empty() && g_prev_dot > 0) {
      double num = 0;
      for (size_t p = 0; p < npx; ++p) num += g[p] * (g[p] - g_prev[p]);
      beta = std::max(0.0, num / g_prev_dot);
    }
    if (d.empty()) d.assign(npx, 0.0);
    for (size_t p = 0; p < npx; ++p) d[p] = -g[p] + beta * d[p];
    double gd = dot(g, d);
    if (gd >= 0) {
      for (size_t p = 0; p < npx; ++p) d[p] = -g[p];
      gd = -g_dot;
    }

    const KSpaceData ad = forward(u, as_image(problem.grid, d), problem);
    const double denom = ad.norm2();
    if (denom <= 1e-300) {
      result.objective.push_back(f);
      break;
    }
    double alpha = -gd / (2.0 * denom);

    bool accepted = false;
    bool clamped = false;
    Image s_try(problem.grid);
    for (int bt = 0; bt <= 8; ++bt) {
      clamped = false;
      for (size_t p = 0; p < npx; ++p) {
        double v = s.v[p] + alpha * d[p];
        if (cfg.positivity && v < 0.0) {
          v = 0.0;
          clamped = true;
        }
        s_try.v[p] = v;
      }
      double f_try;
      KSpaceData r_try;
      if (clamped) {
        r_try = problem.y - forward(u, s_try, problem);
        f_try = r_try.norm2();
      } else {
        f_try = f + alpha * gd + alpha * alpha * denom;
      }
      if (!std::isfinite(f_try)) throw std::runtime_error("cg: non-finite objective");
      if (f_try <= f) {
        s = s_try;
        if (clamped) {
          r = std::move(r_try);
        } else {
          for (size_t i = 0; i < r.y.size(); ++i) {
            for (size_t c = 0; c < r.y[i].size(); ++c) {
              for (size_t q = 0; q < r.y[i][c].size(); ++q) {
                r.y[i][c][q] -= alpha * ad.y[i][c][q];
              }
            }
          }
        }
        f = r.norm2();
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }

    result.objective.push_back(f);
    if (!accepted) {
      reset = true;
      if (++stalls >= 2) break;
      continue;
    }
    stalls = 0;
    reset = clamped;
    g_prev = std::move(g);
    g_prev_dot = g_dot;
  }

  result.final_residual = std::sqrt(f);
  result.s = std::move(s);
  if (cfg.positivity) {
    for (double& v : result.s.v) v = std::max(0.0, v);
  }
  return result;
}

Image per_excitation_recon(const MotionProblem& problem, int exc, const ReconConfig& cfg) {
  const MotionProblem sub = restrict_to_excitation(problem, exc);
  const DeformationSequence id = DeformationSequence::identity(problem.grid, 1);
  return cg_sense_motion(sub, id, Image(problem.grid), cfg).s;
}

}  // namespace moco
