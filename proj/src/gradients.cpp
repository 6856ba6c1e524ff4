#include "gradients.hpp"

#include <cmath>
#include <stdexcept>

#include "fft.hpp"
#include "parallel.hpp"

namespace moco {

namespace {

// Coil-summed backprojection of the residual factors w_{i,c}:
// sum_c conj(S_c) . (F* A_i* w_{i,c}), density-weighted on the NUFFT path.
ComplexField backproject_residual(const MotionProblem& problem, const Image& warped, int exc,
                                  std::vector<std::vector<Complex>>* w_out = nullptr) {
  const Grid& g = problem.grid;
  ComplexField acc(g);
  for (int c = 0; c < problem.n_coils; ++c) {
    ComplexField cw(g);
    for (size_t p = 0; p < cw.v.size(); ++p) {
      cw.v[p] = problem.coils.maps[c].v[p] * warped.v[p];
    }
    ComplexField back(g);
    if (problem.path == SamplingPath::dfft) {
      fft::dft2_centered(cw.v, g.n);
      const auto& pts = problem.masks.grid_points[exc];
      std::vector<Complex> w(pts.size());
      for (size_t q = 0; q < pts.size(); ++q) {
        w[q] = cw.v[pts[q]] - problem.y.y[exc][c][q];
      }
      for (size_t q = 0; q < pts.size(); ++q) back.v[pts[q]] = w[q];
      fft::idft2_centered(back.v, g.n);
      if (w_out) (*w_out)[c] = std::move(w);
    } else {
      std::vector<Complex> w = problem.nufft_ops[exc]->forward(cw);
      const auto& d = problem.dcf[exc];
      for (size_t q = 0; q < w.size(); ++q) {
        w[q] = w[q] * std::sqrt(d[q]) - problem.y.y[exc][c][q];
      }
      std::vector<Complex> wd = w;
      for (size_t q = 0; q < wd.size(); ++q) wd[q] *= std::sqrt(d[q]);
      back = problem.nufft_ops[exc]->adjoint(wd);
      if (w_out) (*w_out)[c] = std::move(w);
    }
    for (size_t p = 0; p < acc.v.size(); ++p) {
      acc.v[p] += std::conj(problem.coils.maps[c].v[p]) * back.v[p];
    }
  }
  return acc;
}

}  // namespace

GradientField grad_u(const MotionProblem& problem, const DeformationSequence& u, const Image& s,
                     bool pin_first) {
  if (problem.y.y.empty()) throw std::invalid_argument("grad_u: problem carries no data");
  if (u.size() != problem.n_exc) throw std::invalid_argument("grad_u: excitation mismatch");
  GradientField out;
  out.gx.resize(problem.n_exc);
  out.gy.resize(problem.n_exc);
  parallel_for(problem.n_exc, problem.threads, [&](int i) {
    const size_t npx = problem.grid.pixels();
    if (pin_first && i == 0) {
      out.gx[i].assign(npx, 0.0);
      out.gy[i].assign(npx, 0.0);
      return;
    }
    const Image warped = apply(u.fields[i], s);
    const ComplexField acc = backproject_residual(problem, warped, i);
    const std::vector<double> dux = du_dp(u.fields[i], s, Axis::x);
    const std::vector<double> duy = du_dp(u.fields[i], s, Axis::y);
    out.gx[i].resize(npx);
    out.gy[i].resize(npx);
    for (size_t p = 0; p < npx; ++p) {
      out.gx[i][p] = 2.0 * dux[p] * std::real(acc.v[p]);
      out.gy[i][p] = 2.0 * duy[p] * std::real(acc.v[p]);
    }
  });
  return out;
}

HessianInfo hessian_diag(const MotionProblem& problem, const DeformationSequence& u,
                         const Image& s) {
  if (u.size() != problem.n_exc) throw std::invalid_argument("hessian: excitation mismatch");
  const size_t npx = problem.grid.pixels();
  std::vector<double> coil_sq(npx, 0.0);
  for (int c = 0; c < problem.n_coils; ++c) {
    for (size_t p = 0; p < npx; ++p) coil_sq[p] += std::norm(problem.coils.maps[c].v[p]);
  }
  HessianInfo out;
  out.kappa.resize(problem.n_exc);
  out.hx.resize(problem.n_exc);
  out.hy.resize(problem.n_exc);
  parallel_for(problem.n_exc, problem.threads, [&](int i) {
    out.kappa[i] = problem.kappa(i);
    const std::vector<double> dux = du_dp(u.fields[i], s, Axis::x);
    const std::vector<double> duy = du_dp(u.fields[i], s, Axis::y);
    auto build = [&](const std::vector<double>& du) {
      std::vector<double> diag(npx);
      double dmax = 0.0;
      for (size_t p = 0; p < npx; ++p) {
        diag[p] = 2.0 * du[p] * du[p] * coil_sq[p] * out.kappa[i];
        dmax = std::max(dmax, diag[p]);
      }
      const double floor = 0.05 * dmax;
      for (double& v : diag) v += floor;
      return diag;
    };
    out.hx[i] = build(dux);
    out.hy[i] = build(duy);
  });
  return out;
}

GradientField precondition(const GradientField& g, const HessianInfo& h) {
  GradientField out;
  out.gx.resize(g.gx.size());
  out.gy.resize(g.gy.size());
  for (size_t i = 0; i < g.gx.size(); ++i) {
    out.gx[i].resize(g.gx[i].size());
    out.gy[i].resize(g.gy[i].size());
    for (size_t p = 0; p < g.gx[i].size(); ++p) {
      out.gx[i][p] = h.hx[i][p] > 0.0 ? g.gx[i][p] / h.hx[i][p] : 0.0;
      out.gy[i][p] = h.hy[i][p] > 0.0 ? g.gy[i][p] / h.hy[i][p] : 0.0;
    }
  }
  return out;
}

double fd_check(const MotionProblem& problem, const DeformationSequence& u, const Image& s,
                int exc, int j, int k, Axis axis, double h) {
  if (h <= 0) throw std::invalid_argument("fd_check: h must be positive");
  if (exc < 0 || exc >= problem.n_exc) throw std::invalid_argument("fd_check: bad excitation");
  const GradientField g = grad_u(problem, u, s, /*pin_first=*/false);
  const size_t p = static_cast<size_t>(j) * problem.grid.n + k;
  const double analytic = axis == Axis::x ? g.gx[exc][p] : g.gy[exc][p];

  DeformationField probe = u.fields[exc];
  auto set = [&](double delta) {
    if (axis == Axis::x) {
      probe.px[p] = u.fields[exc].px[p] + delta;
    } else {
      probe.py[p] = u.fields[exc].py[p] + delta;
    }
  };
  set(h);
  const double j_plus = residual_excitation(probe, s, problem, exc);
  set(-h);
  const double j_minus = residual_excitation(probe, s, problem, exc);
  const double fd = (j_plus - j_minus) / (2.0 * h);

  return std::fabs(analytic - fd) /
         std::max({std::fabs(analytic), std::fabs(fd), 1e-12});
}

}  // namespace moco
