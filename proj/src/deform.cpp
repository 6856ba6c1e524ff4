#include "deform.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace moco {

DeformationField DeformationField::identity(Grid g) {
  DeformationField f(g);
  for (int j = 0; j < g.n; ++j) {
    for (int k = 0; k < g.n; ++k) {
      f.x_at(j, k) = g.x(k);
      f.y_at(j, k) = g.y(j);
    }
  }
  return f;
}

DeformationSequence DeformationSequence::identity(Grid g, int n_exc) {
  DeformationSequence seq;
  seq.fields.assign(n_exc, DeformationField::identity(g));
  return seq;
}

double sample_bilinear(const Image& s, double xc, double yc) {
  const Grid& g = s.grid;
  if (!g.inside_fov(xc, yc)) return 0.0;
  const double c = g.col(xc);
  const double r = g.row(yc);
  const int k0 = static_cast<int>(std::floor(c));
  const int j0 = static_cast<int>(std::floor(r));
  const double fc = c - k0;
  const double fr = r - j0;
  auto pix = [&](int j, int k) -> double {
    if (j < 0 || j >= g.n || k < 0 || k >= g.n) return 0.0;
    return s.at(j, k);
  };
  return (1 - fr) * ((1 - fc) * pix(j0, k0) + fc * pix(j0, k0 + 1)) +
         fr * ((1 - fc) * pix(j0 + 1, k0) + fc * pix(j0 + 1, k0 + 1));
}

void sample_bilinear_grad(const Image& s, double xc, double yc, double* dx, double* dy) {
  const Grid& g = s.grid;
  *dx = 0.0;
  *dy = 0.0;
  if (!g.inside_fov(xc, yc)) return;
  const double c = g.col(xc);
  const double r = g.row(yc);
  const int k0 = static_cast<int>(std::floor(c));
  const int j0 = static_cast<int>(std::floor(r));
  const double fc = c - k0;
  const double fr = r - j0;
  auto pix = [&](int j, int k) -> double {
    if (j < 0 || j >= g.n || k < 0 || k >= g.n) return 0.0;
    return s.at(j, k);
  };
  const double p00 = pix(j0, k0), p01 = pix(j0, k0 + 1);
  const double p10 = pix(j0 + 1, k0), p11 = pix(j0 + 1, k0 + 1);
  *dx = (1 - fr) * (p01 - p00) + fr * (p11 - p10);
  *dy = (1 - fc) * (p10 - p00) + fc * (p11 - p01);
}

void scatter_bilinear(std::vector<double>& acc, const Grid& g, double xc, double yc, double w) {
  if (!g.inside_fov(xc, yc)) return;
  const double c = g.col(xc);
  const double r = g.row(yc);
  const int k0 = static_cast<int>(std::floor(c));
  const int j0 = static_cast<int>(std::floor(r));
  const double fc = c - k0;
  const double fr = r - j0;
  auto add = [&](int j, int k, double v) {
    if (j < 0 || j >= g.n || k < 0 || k >= g.n) return;
    acc[static_cast<size_t>(j) * g.n + k] += v;
  };
  add(j0, k0, w * (1 - fr) * (1 - fc));
  add(j0, k0 + 1, w * (1 - fr) * fc);
  add(j0 + 1, k0, w * fr * (1 - fc));
  add(j0 + 1, k0 + 1, w * fr * fc);
}

Image apply(const DeformationField& u, const Image& s) {
  if (!(u.grid == s.grid)) throw std::invalid_argument("apply: grid mismatch");
  Image out(s.grid);
  const int n = s.grid.n;
  for (int j = 0; j < n; ++j) {
    for (int k = 0; k < n; ++k) {
      out.at(j, k) = sample_bilinear(s, u.x_at(j, k), u.y_at(j, k));
    }
  }
  return out;
}

namespace {

// Bilinear sampling of a coordinate plane; positions beyond the pixel-center
// hull extrapolate linearly from the edge cell, which keeps affine fields
// exact all the way to the FOV boundary.
double sample_plane_extrap(const std::vector<double>& plane, const Grid& g, double xc,
                           double yc) {
  const double c = g.col(xc);
  const double r = g.row(yc);
  const int k0 = std::clamp(static_cast<int>(std::floor(c)), 0, g.n - 2);
  const int j0 = std::clamp(static_cast<int>(std::floor(r)), 0, g.n - 2);
  const double fc = c - k0;
  const double fr = r - j0;
  auto at = [&](int j, int k) { return plane[static_cast<size_t>(j) * g.n + k]; };
  return (1 - fr) * ((1 - fc) * at(j0, k0) + fc * at(j0, k0 + 1)) +
         fr * ((1 - fc) * at(j0 + 1, k0) + fc * at(j0 + 1, k0 + 1));
}

}  // namespace

DeformationField compose(const DeformationField& outer, const DeformationField& inner) {
  if (!(outer.grid == inner.grid)) throw std::invalid_argument("compose: grid mismatch");
  const Grid& g = outer.grid;
  DeformationField out(g);
  const double h = g.half();
  for (int j = 0; j < g.n; ++j) {
    for (int k = 0; k < g.n; ++k) {
      const double tx = std::clamp(outer.x_at(j, k), -h, h);
      const double ty = std::clamp(outer.y_at(j, k), -h, h);
      out.x_at(j, k) = sample_plane_extrap(inner.px, g, tx, ty);
      out.y_at(j, k) = sample_plane_extrap(inner.py, g, tx, ty);
    }
  }
  return out;
}

std::vector<double> du_dp(const DeformationField& u, const Image& s, Axis axis) {
  if (!(u.grid == s.grid)) throw std::invalid_argument("du_dp: grid mismatch");
  const int n = s.grid.n;
  std::vector<double> out(s.grid.pixels());
  for (int j = 0; j < n; ++j) {
    for (int k = 0; k < n; ++k) {
      double dx, dy;
      sample_bilinear_grad(s, u.x_at(j, k), u.y_at(j, k), &dx, &dy);
      out[static_cast<size_t>(j) * n + k] = axis == Axis::x ? dx : dy;
    }
  }
  return out;
}

}  // namespace moco
