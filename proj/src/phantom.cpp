#include "phantom.hpp"

#include <cmath>
#include <stdexcept>

namespace moco {

namespace {

struct Ellipse {
  double value, a, b, x0, y0, phi_deg;
};

// Standard Shepp-Logan definition on the unit square.
constexpr Ellipse kSheppLogan[10] = {
    {1.00, 0.6900, 0.9200, 0.00, 0.0000, 0.0},
    {-0.98, 0.6624, 0.8740, 0.00, -0.0184, 0.0},
    {-0.02, 0.1100, 0.3100, 0.22, 0.0000, -18.0},
    {-0.02, 0.1600, 0.4100, -0.22, 0.0000, 18.0},
    {0.01, 0.2100, 0.2500, 0.00, 0.3500, 0.0},
    {0.01, 0.0460, 0.0460, 0.00, 0.1000, 0.0},
    {0.01, 0.0460, 0.0460, 0.00, -0.1000, 0.0},
    {0.01, 0.0460, 0.0230, -0.08, -0.6050, 0.0},
    {0.01, 0.0230, 0.0230, 0.00, -0.6060, 0.0},
    {0.01, 0.0230, 0.0460, 0.06, -0.6050, 0.0},
};

struct Disk {
  double cx, cy, r, value;  // center/radius as fractions of N
};

// Fixed layout with distinct intensities and asymmetric placement so rigid
// registration has unambiguous structure to lock onto; nothing is centered,
// so rotations move every edge.
constexpr Disk kDisks[5] = {
    {-0.06, 0.05, 0.28, 0.45},
    {-0.16, -0.13, 0.09, 1.00},
    {0.17, -0.12, 0.07, 0.75},
    {0.08, 0.18, 0.11, 0.60},
    {0.20, 0.11, 0.05, 0.90},
};

Image shepp_logan(Grid grid) {
  Image im(grid);
  const double scale = 1.0 / grid.half();
  for (int j = 0; j < grid.n; ++j) {
    for (int k = 0; k < grid.n; ++k) {
      const double x = grid.x(k) * scale;
      const double y = grid.y(j) * scale;
      double v = 0;
      for (const Ellipse& e : kSheppLogan) {
        const double phi = e.phi_deg * 3.141592653589793 / 180.0;
        const double dx = x - e.x0;
        const double dy = y - e.y0;
        const double xr = std::cos(phi) * dx + std::sin(phi) * dy;
        const double yr = -std::sin(phi) * dx + std::cos(phi) * dy;
        if (xr * xr / (e.a * e.a) + yr * yr / (e.b * e.b) <= 1.0) v += e.value;
      }
      im.at(j, k) = std::max(0.0, v);
    }
  }
  return im;
}

Image disks(Grid grid) {
  Image im(grid);
  for (int j = 0; j < grid.n; ++j) {
    for (int k = 0; k < grid.n; ++k) {
      const double x = grid.x(k);
      const double y = grid.y(j);
      double v = 0;
      for (const Disk& d : kDisks) {
        const double dx = x - d.cx * grid.n;
        const double dy = y - d.cy * grid.n;
        if (dx * dx + dy * dy <= d.r * d.r * grid.n * grid.n) v = std::max(v, d.value);
      }
      im.at(j, k) = v;
    }
  }
  return im;
}

}  // namespace

PhantomKind phantom_kind_from_string(const std::string& s) {
  if (s == "shepp_logan") return PhantomKind::shepp_logan;
  if (s == "disks") return PhantomKind::disks;
  if (s == "constant") return PhantomKind::constant;
  throw std::invalid_argument("unknown phantom kind: " + s);
}

Image make_phantom(PhantomKind kind, Grid grid) {
  switch (kind) {
    case PhantomKind::shepp_logan:
      return shepp_logan(grid);
    case PhantomKind::disks:
      return disks(grid);
    case PhantomKind::constant:
      return Image(grid, 1.0);
  }
  throw std::invalid_argument("unknown phantom kind");
}

Image gaussian_blur(const Image& in, double sigma) {
  if (sigma <= 0) return in;
  const int n = in.grid.n;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(2 * radius + 1);
  double sum = 0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += kernel[i + radius];
  }
  for (double& k : kernel) k /= sum;

  auto reflect = [n](int i) {
    while (i < 0 || i >= n) {
      if (i < 0) i = -i - 1;
      if (i >= n) i = 2 * n - 1 - i;
    }
    return i;
  };

  Image tmp(in.grid), out(in.grid);
  for (int j = 0; j < n; ++j) {
    for (int k = 0; k < n; ++k) {
      double v = 0;
      for (int t = -radius; t <= radius; ++t) v += kernel[t + radius] * in.at(j, reflect(k + t));
      tmp.at(j, k) = v;
    }
  }
  for (int j = 0; j < n; ++j) {
    for (int k = 0; k < n; ++k) {
      double v = 0;
      for (int t = -radius; t <= radius; ++t) v += kernel[t + radius] * tmp.at(reflect(j + t), k);
      out.at(j, k) = v;
    }
  }
  return out;
}

}  // namespace moco
