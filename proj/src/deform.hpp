#pragma once

#include <vector>

#include "grid.hpp"

namespace moco {

enum class Axis { x, y };

/// Pull-back deformation on the pixel grid: entry (j,k) holds the absolute
/// reference-configuration coordinates of the particle currently at pixel
/// (j,k), in pixel units.
struct DeformationField {
  Grid grid;
  std::vector<double> px, py;

  DeformationField() = default;
  explicit DeformationField(Grid g) : grid(g), px(g.pixels()), py(g.pixels()) {}

  static DeformationField identity(Grid g);

  double& x_at(int j, int k) { return px[static_cast<size_t>(j) * grid.n + k]; }
  double& y_at(int j, int k) { return py[static_cast<size_t>(j) * grid.n + k]; }
  double x_at(int j, int k) const { return px[static_cast<size_t>(j) * grid.n + k]; }
  double y_at(int j, int k) const { return py[static_cast<size_t>(j) * grid.n + k]; }
};

/// Per-excitation deformation states; fields[0] is pinned to the identity
/// (the first excitation defines the reference configuration).
struct DeformationSequence {
  std::vector<DeformationField> fields;

  int size() const { return static_cast<int>(fields.size()); }
  static DeformationSequence identity(Grid g, int n_exc);
};

// Bilinear interpolation helpers. Samples outside the field of view return
// zero; inside, missing pixels are treated as zero (zero-padded image model).
double sample_bilinear(const Image& s, double xc, double yc);
/// Derivative of the bilinear interpolant with respect to the sample
/// coordinates; cell indices follow the floor convention so an integer
/// coordinate takes the derivative of the cell it starts.
void sample_bilinear_grad(const Image& s, double xc, double yc, double* dx, double* dy);
/// Transpose of sample_bilinear: accumulates w into the four touched pixels.
void scatter_bilinear(std::vector<double>& acc, const Grid& g, double xc, double yc, double w);

/// Warps s by the field: out[j,k] = s sampled at the target of pixel (j,k).
Image apply(const DeformationField& u, const Image& s);

/// Pointwise composition out(x) = inner(outer(x)); targets falling outside
/// the field of view are clamped to its boundary before sampling.
DeformationField compose(const DeformationField& outer, const DeformationField& inner);

/// Sensitivity of the warped image w.r.t. the per-pixel parameter of the
/// given axis (a signed plane, not an image). Entry (j,k) depends only on
/// pixel (j,k)'s own target.
std::vector<double> du_dp(const DeformationField& u, const Image& s, Axis axis);

}  // namespace moco
