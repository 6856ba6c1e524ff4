#include "deform_synth.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace moco {

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;

double bspline1(double u) {
  const double au = std::fabs(u);
  return au < 1.0 ? 1.0 - au : 0.0;
}

double bspline3(double u) {
  const double au = std::fabs(u);
  if (au < 1.0) return (4.0 - 6.0 * au * au + 3.0 * au * au * au) / 6.0;
  if (au < 2.0) {
    const double t = 2.0 - au;
    return t * t * t / 6.0;
  }
  return 0.0;
}

// Temporal basis vanishing at tau = 0.
double phi(int order, double tau) { return std::sin((order + 1) * kPi * tau * 0.5); }

double tau_of(int t_index, int n_exc) {
  return n_exc > 1 ? static_cast<double>(t_index) / (n_exc - 1) : 0.0;
}

}  // namespace

DeformationField synth_rigid(double theta, double shift_x, double shift_y, Grid grid) {
  DeformationField f(grid);
  const double ct = std::cos(theta);
  const double st = std::sin(theta);
  for (int j = 0; j < grid.n; ++j) {
    for (int k = 0; k < grid.n; ++k) {
      const double dx = grid.x(k) - shift_x;
      const double dy = grid.y(j) - shift_y;
      // Pull-back: target = R(-theta) (x - shift).
      f.x_at(j, k) = ct * dx + st * dy;
      f.y_at(j, k) = -st * dx + ct * dy;
    }
  }
  return f;
}

FfdSpec FfdSpec::zero(int nodes, int spline_order, int n_exc) {
  if (nodes < 2) throw std::invalid_argument("ffd needs at least 2 nodes per side");
  if (spline_order != 1 && spline_order != 3) {
    throw std::invalid_argument("ffd spline order must be 1 or 3");
  }
  FfdSpec s;
  s.nodes = nodes;
  s.spline_order = spline_order;
  s.n_exc = n_exc;
  s.gamma_coef.assign(static_cast<size_t>(nodes) * nodes * kOrders, {0, 0, 0, 0});
  s.b_coef.assign(static_cast<size_t>(nodes) * nodes * kOrders, {0, 0});
  return s;
}

DeformationField synth_ffd(const FfdSpec& spec, int t_index, Grid grid) {
  const int m = spec.nodes;
  const double tau = tau_of(t_index, spec.n_exc);
  const double delta = static_cast<double>(grid.n) / (m - 1);
  const double half = grid.half();

  // Support vectors v = Gamma(tau) x + b(tau) per node.
  std::vector<double> vx(static_cast<size_t>(m) * m), vy(vx.size());
  for (int l = 0; l < m; ++l) {
    for (int q = 0; q < m; ++q) {
      const double nx = -half + q * delta;
      const double ny = -half + l * delta;
      double g00 = 0, g01 = 0, g10 = 0, g11 = 0, bx = 0, by = 0;
      const size_t node = static_cast<size_t>(l) * m + q;
      for (int o = 0; o < FfdSpec::kOrders; ++o) {
        const double p = phi(o, tau);
        const auto& gc = spec.gamma_coef[node * FfdSpec::kOrders + o];
        const auto& bc = spec.b_coef[node * FfdSpec::kOrders + o];
        g00 += gc[0] * p;
        g01 += gc[1] * p;
        g10 += gc[2] * p;
        g11 += gc[3] * p;
        bx += bc[0] * p;
        by += bc[1] * p;
      }
      const double tx = (1.0 + g00) * nx + g01 * ny + bx;
      const double ty = g10 * nx + (1.0 + g11) * ny + by;
      const double slack = 1e-9;
      if (std::fabs(tx) > half + slack || std::fabs(ty) > half + slack) {
        throw std::invalid_argument("ffd support vector leaves the field of view");
      }
      vx[node] = tx;
      vy[node] = ty;
    }
  }

  // Tensor B-spline of the support vectors with coefficients extrapolated
  // linearly one cell outward, which preserves affine fields exactly.
  const int pad = spec.spline_order == 3 ? 1 : 0;
  const int mp = m + 2 * pad;
  std::vector<double> cx(static_cast<size_t>(mp) * mp), cy(cx.size());
  // Out-of-range index i maps to value v[i0] + w * (v[i0] - v[i1]).
  auto extrap = [&](int i, int* i0, int* i1, double* w) {
    if (i < 0) {
      *i0 = 0, *i1 = 1, *w = static_cast<double>(-i);
    } else if (i >= m) {
      *i0 = m - 1, *i1 = m - 2, *w = static_cast<double>(i - m + 1);
    } else {
      *i0 = i, *i1 = i, *w = 0.0;
    }
  };
  for (int l = -pad; l < m + pad; ++l) {
    for (int q = -pad; q < m + pad; ++q) {
      int l0, l1, q0, q1;
      double wl, wq;
      extrap(l, &l0, &l1, &wl);
      extrap(q, &q0, &q1, &wq);
      auto node = [&](std::vector<double>& v, int li, int qi) {
        return v[static_cast<size_t>(li) * m + qi];
      };
      auto along_q = [&](std::vector<double>& v, int li) {
        return node(v, li, q0) + wq * (node(v, li, q0) - node(v, li, q1));
      };
      const size_t dst = static_cast<size_t>(l + pad) * mp + (q + pad);
      cx[dst] = along_q(vx, l0) + wl * (along_q(vx, l0) - along_q(vx, l1));
      cy[dst] = along_q(vy, l0) + wl * (along_q(vy, l0) - along_q(vy, l1));
    }
  }

  auto basis = [&](double u) { return spec.spline_order == 3 ? bspline3(u) : bspline1(u); };
  const int reach = spec.spline_order == 3 ? 2 : 1;

  DeformationField f(grid);
  for (int j = 0; j < grid.n; ++j) {
    const double sy = (grid.y(j) + half) / delta;  // node-space parameter
    const int l0 = static_cast<int>(std::floor(sy));
    for (int k = 0; k < grid.n; ++k) {
      const double sx = (grid.x(k) + half) / delta;
      const int q0 = static_cast<int>(std::floor(sx));
      double accx = 0, accy = 0;
      for (int l = l0 - reach + 1; l <= l0 + reach; ++l) {
        const double wl2 = basis(sy - l);
        if (wl2 == 0.0) continue;
        for (int q = q0 - reach + 1; q <= q0 + reach; ++q) {
          const double w = wl2 * basis(sx - q);
          if (w == 0.0) continue;
          const int lc = std::clamp(l + pad, 0, mp - 1);
          const int qc = std::clamp(q + pad, 0, mp - 1);
          accx += w * cx[static_cast<size_t>(lc) * mp + qc];
          accy += w * cy[static_cast<size_t>(lc) * mp + qc];
        }
      }
      f.x_at(j, k) = accx;
      f.y_at(j, k) = accy;
    }
  }
  return f;
}

bool ConvexRegion::chord(double r2, double* r1_bottom, double* r1_top) const {
  const double v = (r2 - cy) / b;
  const double disc = 1.0 - v * v;
  if (disc <= 0.0) return false;
  const double w = a * std::sqrt(disc);
  *r1_bottom = cx - w;
  *r1_top = cx + w;
  return true;
}

void ConvexRegion::normal(double r1, double r2, double* nx, double* ny) const {
  const double gx = (r1 - cx) / (a * a);
  const double gy = (r2 - cy) / (b * b);
  const double len = std::hypot(gx, gy);
  if (len < 1e-15) {
    *nx = 1.0;
    *ny = 0.0;
    return;
  }
  *nx = gx / len;
  *ny = gy / len;
}

namespace {

void sample_field(const DeformationField& u, double xc, double yc, double* ox, double* oy) {
  const Grid& g = u.grid;
  const double c = g.col(xc);
  const double r = g.row(yc);
  const int k0 = std::clamp(static_cast<int>(std::floor(c)), 0, g.n - 2);
  const int j0 = std::clamp(static_cast<int>(std::floor(r)), 0, g.n - 2);
  const double fc = c - k0;
  const double fr = r - j0;
  auto lerp = [&](const std::vector<double>& p) {
    auto at = [&](int j, int k) { return p[static_cast<size_t>(j) * g.n + k]; };
    return (1 - fr) * ((1 - fc) * at(j0, k0) + fc * at(j0, k0 + 1)) +
           fr * ((1 - fc) * at(j0 + 1, k0) + fc * at(j0 + 1, k0 + 1));
  };
  *ox = lerp(u.px);
  *oy = lerp(u.py);
}

}  // namespace

void constrain_point(const DeformationField& u_in, const ConvexRegion& c, double r1, double r2,
                     double* out_x, double* out_y) {
  double ux, uy;
  sample_field(u_in, r1, r2, &ux, &uy);
  double r1b, r1t;
  if (!c.chord(r2, &r1b, &r1t) || r1t - r1b < 1e-9) {
    *out_x = ux;
    *out_y = uy;
    return;
  }
  double tx, ty, bx, by;
  sample_field(u_in, r1t, r2, &tx, &ty);
  sample_field(u_in, r1b, r2, &bx, &by);
  double ntx, nty, nbx, nby;
  c.normal(r1t, r2, &ntx, &nty);
  c.normal(r1b, r2, &nbx, &nby);
  const double perp_t = ntx * (tx - r1t) + nty * (ty - r2);
  const double perp_b = nbx * (bx - r1b) + nby * (by - r2);
  const double wt = (r1 - r1b) / (r1t - r1b);
  const double wb = (r1t - r1) / (r1t - r1b);
  *out_x = ux - perp_t * wt * ntx - perp_b * wb * nbx;
  *out_y = uy - perp_t * wt * nty - perp_b * wb * nby;
}

DeformationField constrain_convex(const DeformationField& u_in, const ConvexRegion& c) {
  const Grid& g = u_in.grid;
  DeformationField out = DeformationField::identity(g);
  for (int j = 0; j < g.n; ++j) {
    const double y = g.y(j);
    for (int k = 0; k < g.n; ++k) {
      const double x = g.x(k);
      if (!c.contains(x, y)) continue;
      double tx, ty;
      constrain_point(u_in, c, x, y, &tx, &ty);
      // Radial clamp keeps the target inside C ("no mass leaves").
      const double qx = tx - c.cx, qy = ty - c.cy;
      const double rho = (qx / c.a) * (qx / c.a) + (qy / c.b) * (qy / c.b);
      if (rho > 1.0) {
        const double t = 1.0 / std::sqrt(rho);
        tx = c.cx + t * qx;
        ty = c.cy + t * qy;
      }
      out.x_at(j, k) = tx;
      out.y_at(j, k) = ty;
    }
  }
  return out;
}

MotionClass motion_class_from_string(const std::string& s) {
  if (s == "static") return MotionClass::static_motion;
  if (s == "rigid") return MotionClass::rigid;
  if (s == "affine") return MotionClass::affine;
  if (s == "ffd") return MotionClass::ffd;
  if (s == "ffd_convex") return MotionClass::ffd_convex;
  throw std::invalid_argument("unknown motion class: " + s);
}

std::string to_string(MotionClass m) {
  switch (m) {
    case MotionClass::static_motion:
      return "static";
    case MotionClass::rigid:
      return "rigid";
    case MotionClass::affine:
      return "affine";
    case MotionClass::ffd:
      return "ffd";
    case MotionClass::ffd_convex:
      return "ffd_convex";
  }
  return "?";
}

namespace {

// Smooth seeded trajectory through the excitation times: a trigonometric
// combination normalized so the peak magnitude over the sampled times equals
// amp * (draw in [0.6, 1]).
std::vector<double> trajectory(int n_exc, double amp, Rng rng) {
  std::vector<double> coef(FfdSpec::kOrders);
  for (auto& c : coef) c = rng.uniform(-1.0, 1.0);
  const double peak_frac = rng.uniform(0.6, 1.0);
  std::vector<double> g(n_exc, 0.0);
  double peak = 0.0;
  for (int i = 0; i < n_exc; ++i) {
    const double tau = tau_of(i, n_exc);
    double v = 0;
    for (int o = 0; o < FfdSpec::kOrders; ++o) v += coef[o] * phi(o, tau);
    g[i] = v;
    peak = std::max(peak, std::fabs(v));
  }
  if (peak < 1e-12 || amp == 0.0) return std::vector<double>(n_exc, 0.0);
  const double scale = amp * peak_frac / peak;
  for (double& v : g) v *= scale;
  g[0] = 0.0;
  return g;
}

DeformationField affine_field(double g00, double g01, double g10, double g11, double bx,
                              double by, Grid grid) {
  DeformationField f(grid);
  for (int j = 0; j < grid.n; ++j) {
    for (int k = 0; k < grid.n; ++k) {
      const double x = grid.x(k);
      const double y = grid.y(j);
      f.x_at(j, k) = (1.0 + g00) * x + g01 * y + bx;
      f.y_at(j, k) = g10 * x + (1.0 + g11) * y + by;
    }
  }
  return f;
}

// Per-node spatially smooth coefficient set: a low-order polynomial over the
// node grid, tapered to zero at the FOV boundary so support vectors cannot
// leave the field of view.
FfdSpec random_ffd(int nodes, int order, int n_exc, double amp_px, Rng rng) {
  FfdSpec spec = FfdSpec::zero(nodes, order, n_exc);
  std::vector<std::array<double, 4>> poly_b(FfdSpec::kOrders);  // c00 c10 c01 c11 per axis pair
  std::vector<std::array<double, 4>> poly_b2(FfdSpec::kOrders);
  for (int o = 0; o < FfdSpec::kOrders; ++o) {
    for (int t = 0; t < 4; ++t) {
      poly_b[o][t] = rng.uniform(-1.0, 1.0);
      poly_b2[o][t] = rng.uniform(-1.0, 1.0);
    }
  }
  double peak = 0.0;
  auto eval_poly = [](const std::array<double, 4>& c, double xi, double eta) {
    return c[0] + c[1] * xi + c[2] * eta + c[3] * xi * eta;
  };
  for (int l = 0; l < nodes; ++l) {
    for (int q = 0; q < nodes; ++q) {
      const double eta = nodes > 1 ? 2.0 * l / (nodes - 1) - 1.0 : 0.0;
      const double xi = nodes > 1 ? 2.0 * q / (nodes - 1) - 1.0 : 0.0;
      const double taper = (1.0 - xi * xi) * (1.0 - eta * eta);
      const size_t node = static_cast<size_t>(l) * nodes + q;
      for (int o = 0; o < FfdSpec::kOrders; ++o) {
        spec.b_coef[node * FfdSpec::kOrders + o] = {taper * eval_poly(poly_b[o], xi, eta),
                                                    taper * eval_poly(poly_b2[o], xi, eta)};
      }
    }
  }
  for (int i = 0; i < n_exc; ++i) {
    const double tau = tau_of(i, n_exc);
    for (size_t node = 0; node < static_cast<size_t>(nodes) * nodes; ++node) {
      double bx = 0, by = 0;
      for (int o = 0; o < FfdSpec::kOrders; ++o) {
        bx += spec.b_coef[node * FfdSpec::kOrders + o][0] * phi(o, tau);
        by += spec.b_coef[node * FfdSpec::kOrders + o][1] * phi(o, tau);
      }
      peak = std::max({peak, std::fabs(bx), std::fabs(by)});
    }
  }
  if (peak > 1e-12 && amp_px > 0.0) {
    const double scale = amp_px / peak;
    for (auto& c : spec.b_coef) {
      c[0] *= scale;
      c[1] *= scale;
    }
  } else {
    for (auto& c : spec.b_coef) c = {0.0, 0.0};
  }
  return spec;
}

}  // namespace

DeformationSequence synth_sequence(const MotionConfig& cfg, Grid grid, const Rng& rng) {
  if (cfg.n_exc < 1) throw std::invalid_argument("n_exc must be >= 1");
  const double quarter = 0.25 * grid.n;
  if (cfg.max_shift_px > quarter || cfg.ffd_amp_px > quarter || cfg.max_rot_rad > kPi / 4) {
    throw std::invalid_argument("motion amplitude bounds exceed the field of view");
  }

  DeformationSequence seq;
  seq.fields.reserve(cfg.n_exc);
  seq.fields.push_back(DeformationField::identity(grid));

  switch (cfg.kind) {
    case MotionClass::static_motion: {
      for (int i = 1; i < cfg.n_exc; ++i) seq.fields.push_back(DeformationField::identity(grid));
      break;
    }
    case MotionClass::rigid: {
      const auto theta = trajectory(cfg.n_exc, cfg.max_rot_rad, rng.substream(1));
      const auto sx = trajectory(cfg.n_exc, cfg.max_shift_px, rng.substream(2));
      const auto sy = trajectory(cfg.n_exc, cfg.max_shift_px, rng.substream(3));
      for (int i = 1; i < cfg.n_exc; ++i) {
        seq.fields.push_back(synth_rigid(theta[i], sx[i], sy[i], grid));
      }
      break;
    }
    case MotionClass::affine: {
      const auto theta = trajectory(cfg.n_exc, cfg.max_rot_rad, rng.substream(1));
      const auto sx = trajectory(cfg.n_exc, cfg.max_shift_px, rng.substream(2));
      const auto sy = trajectory(cfg.n_exc, cfg.max_shift_px, rng.substream(3));
      const auto shear = trajectory(cfg.n_exc, cfg.max_shear, rng.substream(4));
      for (int i = 1; i < cfg.n_exc; ++i) {
        // Gamma = R(-theta) * unit shear keeps |det| = 1.
        const double ct = std::cos(theta[i]), st = std::sin(theta[i]);
        const double sh = shear[i];
        const double g00 = ct, g01 = ct * sh + st, g10 = -st, g11 = -st * sh + ct;
        const double bx = -(g00 * sx[i] + g01 * sy[i]);
        const double by = -(g10 * sx[i] + g11 * sy[i]);
        seq.fields.push_back(affine_field(g00 - 1.0, g01, g10, g11 - 1.0, bx, by, grid));
      }
      break;
    }
    case MotionClass::ffd: {
      const FfdSpec spec = random_ffd(cfg.ffd_nodes, cfg.spline_order, cfg.n_exc, cfg.ffd_amp_px,
                                      rng.substream(1));
      for (int i = 1; i < cfg.n_exc; ++i) seq.fields.push_back(synth_ffd(spec, i, grid));
      break;
    }
    case MotionClass::ffd_convex: {
      const ConvexRegion region{0.0, 0.0, 0.32 * grid.n, 0.26 * grid.n};
      const FfdSpec inner = random_ffd(cfg.ffd_nodes, cfg.spline_order, cfg.n_exc,
                                       cfg.ffd_amp_px, rng.substream(1));
      const auto sx = trajectory(cfg.n_exc, 0.5 * cfg.max_shift_px, rng.substream(2));
      const auto sy = trajectory(cfg.n_exc, 0.5 * cfg.max_shift_px, rng.substream(3));
      for (int i = 1; i < cfg.n_exc; ++i) {
        const DeformationField u_in = constrain_convex(synth_ffd(inner, i, grid), region);
        const DeformationField u_out = synth_rigid(0.0, sx[i], sy[i], grid);
        seq.fields.push_back(compose(u_out, u_in));
      }
      break;
    }
  }
  return seq;
}

}  // namespace moco
