#include "estimate.hpp"

#include <cmath>
#include <stdexcept>

#include "parallel.hpp"
#include "phantom.hpp"

namespace moco {

namespace {

Image downsample2(const Image& in) {
  const int n = in.grid.n / 2;
  Image out(Grid{n});
  for (int j = 0; j < n; ++j) {
    for (int k = 0; k < n; ++k) {
      out.at(j, k) = 0.25 * (in.at(2 * j, 2 * k) + in.at(2 * j, 2 * k + 1) +
                             in.at(2 * j + 1, 2 * k) + in.at(2 * j + 1, 2 * k + 1));
    }
  }
  return out;
}

// Prolongation of a displacement plane to twice the resolution (values in
// pixel units scale with the grid).
std::vector<double> upsample2(const std::vector<double>& d, int n_from) {
  const int n_to = 2 * n_from;
  std::vector<double> out(static_cast<size_t>(n_to) * n_to);
  for (int j = 0; j < n_to; ++j) {
    const double r = (j + 0.5) * 0.5 - 0.5;
    // Clamp the cell, not the position: edge cells extrapolate linearly.
    const int j0 = std::max(0, std::min(static_cast<int>(std::floor(r)), n_from - 2));
    const double fr = r - j0;
    for (int k = 0; k < n_to; ++k) {
      const double c = (k + 0.5) * 0.5 - 0.5;
      const int k0 = std::max(0, std::min(static_cast<int>(std::floor(c)), n_from - 2));
      const double fc = c - k0;
      auto at = [&](int jj, int kk) { return d[static_cast<size_t>(jj) * n_from + kk]; };
      out[static_cast<size_t>(j) * n_to + k] =
          2.0 * ((1 - fr) * ((1 - fc) * at(j0, k0) + fc * at(j0, k0 + 1)) +
                 fr * ((1 - fc) * at(j0 + 1, k0) + fc * at(j0 + 1, k0 + 1)));
    }
  }
  return out;
}

void refine_level(const Image& moving, const Image& target, double lambda, double field_sigma,
                  int steps, std::vector<double>& dx, std::vector<double>& dy) {
  const Grid& g = moving.grid;
  const int n = g.n;
  const size_t npx = g.pixels();
  std::vector<double> lapx(npx), lapy(npx);
  auto laplacian = [n](const std::vector<double>& d, std::vector<double>& lap) {
    for (int j = 0; j < n; ++j) {
      for (int k = 0; k < n; ++k) {
        const size_t p = static_cast<size_t>(j) * n + k;
        double v = 0;
        if (k > 0) v += d[p] - d[p - 1];
        if (k + 1 < n) v += d[p] - d[p + 1];
        if (j > 0) v += d[p] - d[p - n];
        if (j + 1 < n) v += d[p] - d[p + n];
        lap[p] = v;
      }
    }
  };
  Image plane(g);
  auto smooth_plane = [&](std::vector<double>& d) {
    plane.v = d;
    d = gaussian_blur(plane, field_sigma).v;
  };

  // Global affine stage: pooling every edge into six parameters sidesteps
  // the aperture problem that purely local steps hit on piecewise-constant
  // images (rotations are otherwise systematically under-estimated).
  for (int it = 0; it < 10; ++it) {
    double nmat[6][6] = {};
    double rhs[6] = {};
    bool any = false;
    for (int j = 0; j < n; ++j) {
      for (int k = 0; k < n; ++k) {
        const size_t p = static_cast<size_t>(j) * n + k;
        const double sx = g.x(k) + dx[p];
        const double sy = g.y(j) + dy[p];
        const double val = sample_bilinear(moving, sx, sy);
        double gx, gy;
        sample_bilinear_grad(moving, sx, sy, &gx, &gy);
        if (gx == 0.0 && gy == 0.0) continue;
        const double r = val - target.at(j, k);
        const double x = g.x(k), y = g.y(j);
        const double jrow[6] = {gx * x, gx * y, gx, gy * x, gy * y, gy};
        for (int a = 0; a < 6; ++a) {
          for (int b = a; b < 6; ++b) nmat[a][b] += jrow[a] * jrow[b];
          rhs[a] -= r * jrow[a];
        }
        any = true;
      }
    }
    if (!any) break;
    for (int a = 0; a < 6; ++a) {
      for (int b = 0; b < a; ++b) nmat[a][b] = nmat[b][a];
    }
    double trace = 0;
    for (int a = 0; a < 6; ++a) trace += nmat[a][a];
    for (int a = 0; a < 6; ++a) nmat[a][a] += 1e-6 * trace + 1e-12;
    // Cholesky solve of the 6x6 system.
    double chol[6][6] = {};
    bool ok = true;
    for (int i = 0; i < 6 && ok; ++i) {
      for (int j2 = 0; j2 <= i; ++j2) {
        double sum = nmat[i][j2];
        for (int t = 0; t < j2; ++t) sum -= chol[i][t] * chol[j2][t];
        if (i == j2) {
          if (sum <= 0) {
            ok = false;
            break;
          }
          chol[i][i] = std::sqrt(sum);
        } else {
          chol[i][j2] = sum / chol[j2][j2];
        }
      }
    }
    if (!ok) break;
    double z[6], delta[6];
    for (int i = 0; i < 6; ++i) {
      double sum = rhs[i];
      for (int t = 0; t < i; ++t) sum -= chol[i][t] * z[t];
      z[i] = sum / chol[i][i];
    }
    for (int i = 5; i >= 0; --i) {
      double sum = z[i];
      for (int t = i + 1; t < 6; ++t) sum -= chol[t][i] * delta[t];
      delta[i] = sum / chol[i][i];
    }
    double step_norm = 0;
    for (int j = 0; j < n; ++j) {
      for (int k = 0; k < n; ++k) {
        const size_t p = static_cast<size_t>(j) * n + k;
        const double x = g.x(k), y = g.y(j);
        const double ux = delta[0] * x + delta[1] * y + delta[2];
        const double uy = delta[3] * x + delta[4] * y + delta[5];
        dx[p] += ux;
        dy[p] += uy;
        step_norm = std::max(step_norm, std::fabs(ux) + std::fabs(uy));
      }
    }
    if (step_norm < 1e-6) break;
  }

  for (int step = 0; step < steps; ++step) {
    laplacian(dx, lapx);
    laplacian(dy, lapy);
    bool moved = false;
    for (int j = 0; j < n; ++j) {
      for (int k = 0; k < n; ++k) {
        const size_t p = static_cast<size_t>(j) * n + k;
        const double sx = g.x(k) + dx[p];
        const double sy = g.y(j) + dy[p];
        const double val = sample_bilinear(moving, sx, sy);
        double gx, gy;
        sample_bilinear_grad(moving, sx, sy, &gx, &gy);
        const double r = val - target.at(j, k);
        // Gauss-Newton-ish diagonal of data term + smoothness penalty.
        const double precond = gx * gx + gy * gy + 4.0 * lambda + 1e-6;
        const double ux = (r * gx + lambda * lapx[p]) / precond;
        const double uy = (r * gy + lambda * lapy[p]) / precond;
        dx[p] -= ux;
        dy[p] -= uy;
        moved = moved || ux != 0.0 || uy != 0.0;
      }
    }
    // Diffusion-style regularization: spreads edge-driven displacements into
    // flat regions and is exact on affine fields.
    if (field_sigma > 0 && moved) {
      smooth_plane(dx);
      smooth_plane(dy);
    }
  }
}

}  // namespace

void ClassicalRefiner::refine(const Image& warped, const Image& target, std::vector<double>* dx,
                              std::vector<double>* dy) const {
  if (!(warped.grid == target.grid)) throw std::invalid_argument("refiner: grid mismatch");
  const double scale = std::max({max_abs(warped), max_abs(target), 1e-12});

  Image w = warped, t = target;
  for (double& v : w.v) v /= scale;
  for (double& v : t.v) v /= scale;

  std::vector<Image> wp = {w}, tp = {t};
  for (int l = 1; l < cfg_.pyramid_levels; ++l) {
    if (wp.back().grid.n < 16) break;
    wp.push_back(downsample2(gaussian_blur(wp.back(), cfg_.smooth_sigma)));
    tp.push_back(downsample2(gaussian_blur(tp.back(), cfg_.smooth_sigma)));
  }

  const int coarsest = static_cast<int>(wp.size()) - 1;
  std::vector<double> ux(wp[coarsest].grid.pixels(), 0.0), uy(ux.size(), 0.0);
  // One diffusion step per data step matches the penalty strength when the
  // smoothing variance scales linearly with lambda.
  const double sigma = cfg_.field_sigma * std::sqrt(std::max(0.0, cfg_.smoothness) / 0.02);
  for (int l = coarsest; l >= 0; --l) {
    refine_level(wp[l], tp[l], cfg_.smoothness, sigma, cfg_.steps_per_level, ux, uy);
    if (l > 0) {
      ux = upsample2(ux, wp[l].grid.n);
      uy = upsample2(uy, wp[l].grid.n);
    }
  }
  *dx = std::move(ux);
  *dy = std::move(uy);
}

void smooth_temporal(DeformationSequence& u, int window) {
  const int n_exc = u.size();
  if (window % 2 == 0) --window;
  window = std::min(window, n_exc);
  if (window < 5 || n_exc < 5) return;

  // Savitzky-Golay style quadratic weights for every output position.
  std::vector<std::vector<double>> weights(n_exc);
  std::vector<int> starts(n_exc);
  for (int i = 0; i < n_exc; ++i) {
    int a = i - window / 2;
    a = std::max(0, std::min(a, n_exc - window));
    starts[i] = a;
    // Normal equations for fitting c0 + c1 t + c2 t^2 around t = i.
    double s0 = 0, s1 = 0, s2 = 0, s3 = 0, s4 = 0;
    for (int t = a; t < a + window; ++t) {
      const double off = t - i;
      s0 += 1;
      s1 += off;
      s2 += off * off;
      s3 += off * off * off;
      s4 += off * off * off * off;
    }
    // The evaluation at offset 0 needs only the first row of
    // (X^T X)^{-1} X^T.
    const double m[3][3] = {{s0, s1, s2}, {s1, s2, s3}, {s2, s3, s4}};
    const double det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
                       m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                       m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    const double inv00 = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) / det;
    const double inv01 = -(m[0][1] * m[2][2] - m[0][2] * m[2][1]) / det;
    const double inv02 = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) / det;
    weights[i].resize(window);
    for (int t = a; t < a + window; ++t) {
      const double off = t - i;
      weights[i][t - a] = inv00 + inv01 * off + inv02 * off * off;
    }
  }

  // Smooth displacements rather than absolute coordinates; all-zero
  // trajectories (static regions) are left untouched exactly.
  const Grid grid = u.fields[0].grid;
  const DeformationField id = DeformationField::identity(grid);
  const size_t npx = grid.pixels();
  auto smooth_plane = [&](auto get, auto set, const std::vector<double>& id_plane) {
    std::vector<double> traj(n_exc);
    for (size_t p = 0; p < npx; ++p) {
      bool any = false;
      for (int i = 0; i < n_exc; ++i) {
        traj[i] = get(i, p) - id_plane[p];
        any = any || traj[i] != 0.0;
      }
      if (!any) continue;
      for (int i = 0; i < n_exc; ++i) {
        double v = 0;
        for (int t = 0; t < window; ++t) v += weights[i][t] * traj[starts[i] + t];
        set(i, p, id_plane[p] + v);
      }
    }
  };
  smooth_plane([&](int i, size_t p) { return u.fields[i].px[p]; },
               [&](int i, size_t p, double v) { u.fields[i].px[p] = v; }, id.px);
  smooth_plane([&](int i, size_t p) { return u.fields[i].py[p]; },
               [&](int i, size_t p, double v) { u.fields[i].py[p] = v; }, id.py);
  u.fields[0] = DeformationField::identity(grid);
}

DeformationSequence estimate_motion(const std::vector<Image>& s_list, const EstimateConfig& cfg,
                                    const Refiner& refiner,
                                    std::vector<double>* iter_mean_update) {
  const int n_exc = static_cast<int>(s_list.size());
  if (n_exc < 2) throw std::invalid_argument("estimate_motion needs at least two excitations");
  if (cfg.n_iter < 1) throw std::invalid_argument("estimate n_iter must be >= 1");
  const Grid grid = s_list[0].grid;
  DeformationSequence u = DeformationSequence::identity(grid, n_exc);

  for (int it = 0; it < cfg.n_iter; ++it) {
    std::vector<double> update_sum(n_exc, 0.0);
    parallel_for(n_exc - 1, cfg.threads, [&](int idx) {
      const int i = idx + 1;
      const Image warped = apply(u.fields[i], s_list[0]);
      std::vector<double> dx, dy;
      refiner.refine(warped, s_list[i], &dx, &dy);
      double acc = 0;
      for (size_t p = 0; p < dx.size(); ++p) {
        if (!std::isfinite(dx[p]) || !std::isfinite(dy[p])) {
          throw std::runtime_error("refiner returned a non-finite update");
        }
        u.fields[i].px[p] += dx[p];
        u.fields[i].py[p] += dy[p];
        acc += std::hypot(dx[p], dy[p]);
      }
      update_sum[i] = acc / dx.size();
    });
    smooth_temporal(u, cfg.temporal_window);
    if (iter_mean_update) {
      double mean = 0;
      for (int i = 1; i < n_exc; ++i) mean += update_sum[i];
      iter_mean_update->push_back(mean / std::max(1, n_exc - 1));
    }
  }
  return u;
}

}  // namespace moco
