#include "coils.hpp"

#include <cmath>
#include <stdexcept>

namespace moco {

CoilMaps synth_coils(int n_coils, Grid grid, const Rng& rng) {
  if (n_coils < 1) throw std::invalid_argument("need at least one coil");
  CoilMaps coils;
  coils.grid = grid;
  coils.n_coils = n_coils;
  const double ring = 0.45 * grid.n;
  const double d_base = grid.half() * grid.half();
  for (int c = 0; c < n_coils; ++c) {
    Rng sub = rng.substream(100 + c);
    // Centers spread around the ring with a jittered equiangular layout so
    // small coil counts still surround the object.
    const double angle = 2.0 * 3.141592653589793 * (c + sub.uniform(-0.25, 0.25)) / n_coils;
    const double rc_x = ring * std::cos(angle);
    const double rc_y = ring * std::sin(angle);
    const double dc = sub.uniform(0.5, 1.5) * d_base;
    coils.center_x.push_back(rc_x);
    coils.center_y.push_back(rc_y);
    coils.width.push_back(dc);
    ComplexField map(grid);
    for (int j = 0; j < grid.n; ++j) {
      for (int k = 0; k < grid.n; ++k) {
        const double dx = grid.x(k) - rc_x;
        const double dy = grid.y(j) - rc_y;
        map.at(j, k) = std::exp(-(dx * dx + dy * dy) / dc);
      }
    }
    coils.maps.push_back(std::move(map));
  }
  return coils;
}

double coil_coverage(const CoilMaps& coils, int j, int k) {
  double s = 0;
  for (const auto& m : coils.maps) s += std::norm(m.at(j, k));
  return s;
}

}  // namespace moco
