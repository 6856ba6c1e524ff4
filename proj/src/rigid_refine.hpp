#pragma once

#include <vector>

#include "forward_op.hpp"
#include "rigid_fit.hpp"

namespace moco {

struct RigidRefineConfig {
  int outer_iters = 10;
  int n_cg = 10;
  bool positivity = true;
  double damping = 1e-3;    // Levenberg term: damping * trace added to the diagonal
  double step_tol = 1e-3;   // convergence flag threshold on the last update norm
  int threads = 1;
};

struct RigidRefineResult {
  std::vector<RigidParams> params;  // per excitation; entry 0 stays identity
  std::vector<bool> converged;      // small final step and a solvable system
  std::vector<bool> singular;       // normal matrix was singular after damping
  Image s;
  double j_final = 0.0;
};

/// Per-excitation Gauss-Newton on (theta, tx, ty), alternating with CG for
/// the image. Non-convergence is flagged, never silent.
RigidRefineResult rigid_refine(const MotionProblem& problem, const std::vector<RigidParams>& p0,
                               const RigidRefineConfig& cfg);

}  // namespace moco
