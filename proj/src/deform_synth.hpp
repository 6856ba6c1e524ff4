#pragma once

#include <array>
#include <string>
#include <vector>

#include "deform.hpp"
#include "rng.hpp"

namespace moco {

DeformationField synth_rigid(double theta, double shift_x, double shift_y, Grid grid);

/// Free-form deformation generator: a regular control grid whose nodes carry
/// affine parameters with smooth seeded trajectories over the excitation
/// times. phi_o(tau) = sin(o pi tau / 2) vanishes at tau = 0, so the first
/// excitation is the reference configuration.
struct FfdSpec {
  static constexpr int kOrders = 3;

  int nodes = 0;         // control nodes per side, >= 2
  int spline_order = 3;  // 1 or 3
  int n_exc = 1;
  // Node-major (l * nodes + m), then temporal order. Gamma is stored as the
  // deviation from the identity, row-major 2x2.
  std::vector<std::array<double, 4>> gamma_coef;
  std::vector<std::array<double, 2>> b_coef;

  static FfdSpec zero(int nodes, int spline_order, int n_exc);
};

DeformationField synth_ffd(const FfdSpec& spec, int t_index, Grid grid);

/// Axis-aligned ellipse; r1 is the x coordinate, r2 the y coordinate.
struct ConvexRegion {
  double cx = 0, cy = 0, a = 1, b = 1;

  bool contains(double r1, double r2) const {
    const double u = (r1 - cx) / a, v = (r2 - cy) / b;
    return u * u + v * v < 1.0;
  }
  /// Extreme abscissae of the horizontal chord at height r2; false when the
  /// row misses the region.
  bool chord(double r2, double* r1_bottom, double* r1_top) const;
  /// Outward unit normal at a boundary point.
  void normal(double r1, double r2, double* nx, double* ny) const;
};

/// Removes the boundary-normal flow from the field inside C (interpolated
/// from the chord endpoints) and leaves the identity outside; targets of
/// interior points are radially clamped into C.
DeformationField constrain_convex(const DeformationField& u_in, const ConvexRegion& c);

/// Single-point evaluation of the chord-based constraint (before the radial
/// clamp), with the input field sampled bilinearly. Used by the pixel loop
/// and by boundary-flux checks.
void constrain_point(const DeformationField& u_in, const ConvexRegion& c, double r1, double r2,
                     double* out_x, double* out_y);

enum class MotionClass { static_motion, rigid, affine, ffd, ffd_convex };

MotionClass motion_class_from_string(const std::string& s);
std::string to_string(MotionClass m);

struct MotionConfig {
  MotionClass kind = MotionClass::rigid;
  int n_exc = 8;
  double max_rot_rad = 0.0;
  double max_shift_px = 0.0;
  double max_shear = 0.0;
  double ffd_amp_px = 0.0;
  int ffd_nodes = 5;
  int spline_order = 3;
};

/// Seeded sequence of deformation states, one per excitation; fields[0] is
/// the identity and all parameters follow smooth temporal trajectories.
DeformationSequence synth_sequence(const MotionConfig& cfg, Grid grid, const Rng& rng);

}  // namespace moco
