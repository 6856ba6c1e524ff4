#pragma once

#include "deform.hpp"

namespace moco {

/// Rigid parameters in the pull-back convention of synth_rigid:
/// target(x) = R(-theta) (x - shift).
struct RigidParams {
  double theta = 0.0;
  double shift_x = 0.0;
  double shift_y = 0.0;
};

/// Least-squares rigid fit of a deformation field (Procrustes over all
/// pixels, or over mask > 0 when given).
RigidParams fit_rigid(const DeformationField& f, const Image* mask = nullptr);

DeformationField rigid_field(const RigidParams& p, Grid grid);

}  // namespace moco
