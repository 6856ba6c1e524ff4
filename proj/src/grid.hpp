#pragma once

#include <complex>
#include <stdexcept>
#include <vector>

namespace moco {

using Complex = std::complex<double>;

/// Square pixel grid. Pixel (row j, col k) sits at coordinates
/// x = k + 0.5 - N/2, y = j + 0.5 - N/2 so the field of view is
/// the centered square [-N/2, N/2]^2 in pixel units.
struct Grid {
  int n = 0;

  double x(int col) const { return col + 0.5 - 0.5 * n; }
  double y(int row) const { return row + 0.5 - 0.5 * n; }
  // Continuous inverse of the coordinate map (fractional array indices).
  double col(double xc) const { return xc - 0.5 + 0.5 * n; }
  double row(double yc) const { return yc - 0.5 + 0.5 * n; }
  double half() const { return 0.5 * n; }
  bool inside_fov(double xc, double yc) const {
    return xc >= -half() && xc <= half() && yc >= -half() && yc <= half();
  }
  long pixels() const { return static_cast<long>(n) * n; }

  bool operator==(const Grid&) const = default;
};

inline Grid make_grid(int n) {
  if (n < 8 || n % 2 != 0) {
    throw std::invalid_argument("grid size must be even and >= 8");
  }
  return Grid{n};
}

/// Real nonnegative image on a grid, row-major.
struct Image {
  Grid grid;
  std::vector<double> v;

  Image() = default;
  explicit Image(Grid g, double fill = 0.0) : grid(g), v(g.pixels(), fill) {}

  double& at(int j, int k) { return v[static_cast<size_t>(j) * grid.n + k]; }
  double at(int j, int k) const { return v[static_cast<size_t>(j) * grid.n + k]; }
};

/// Complex field on a grid (k-space planes, coil-weighted images), row-major.
struct ComplexField {
  Grid grid;
  std::vector<Complex> v;

  ComplexField() = default;
  explicit ComplexField(Grid g, Complex fill = {}) : grid(g), v(g.pixels(), fill) {}

  Complex& at(int j, int k) { return v[static_cast<size_t>(j) * grid.n + k]; }
  Complex at(int j, int k) const { return v[static_cast<size_t>(j) * grid.n + k]; }
};

inline double max_abs(const Image& a) {
  double m = 0;
  for (double x : a.v) m = std::max(m, std::abs(x));
  return m;
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace moco
