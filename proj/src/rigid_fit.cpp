#include "rigid_fit.hpp"

#include <cmath>

#include "deform_synth.hpp"

namespace moco {

RigidParams fit_rigid(const DeformationField& f, const Image* mask) {
  const Grid& g = f.grid;
  double wsum = 0, mx = 0, my = 0, px = 0, py = 0;
  for (int j = 0; j < g.n; ++j) {
    for (int k = 0; k < g.n; ++k) {
      const double w = mask ? (mask->at(j, k) > 0 ? 1.0 : 0.0) : 1.0;
      if (w == 0) continue;
      wsum += w;
      mx += w * g.x(k);
      my += w * g.y(j);
      px += w * f.x_at(j, k);
      py += w * f.y_at(j, k);
    }
  }
  if (wsum <= 0) return {};
  mx /= wsum;
  my /= wsum;
  px /= wsum;
  py /= wsum;

  // target = R(phi) x + b with phi = -theta; phi from the cross/dot sums.
  double sdot = 0, scross = 0;
  for (int j = 0; j < g.n; ++j) {
    for (int k = 0; k < g.n; ++k) {
      const double w = mask ? (mask->at(j, k) > 0 ? 1.0 : 0.0) : 1.0;
      if (w == 0) continue;
      const double ax = g.x(k) - mx, ay = g.y(j) - my;
      const double bx = f.x_at(j, k) - px, by = f.y_at(j, k) - py;
      sdot += w * (ax * bx + ay * by);
      scross += w * (ax * by - ay * bx);
    }
  }
  const double phi = std::atan2(scross, sdot);
  RigidParams p;
  p.theta = -phi;
  // b = p_mean - R(phi) x_mean; shift = -R(theta) b.
  const double c = std::cos(phi), s = std::sin(phi);
  const double bx = px - (c * mx - s * my);
  const double by = py - (s * mx + c * my);
  const double ct = std::cos(p.theta), st = std::sin(p.theta);
  p.shift_x = -(ct * bx - st * by);
  p.shift_y = -(st * bx + ct * by);
  return p;
}

DeformationField rigid_field(const RigidParams& p, Grid grid) {
  return synth_rigid(p.theta, p.shift_x, p.shift_y, grid);
}

}  // namespace moco
