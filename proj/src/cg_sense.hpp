#pragma once

#include <vector>

#include "forward_op.hpp"

namespace moco {

struct ReconConfig {
  int n_cg = 10;
  double tol = 0.0;  // stop when |r| <= tol |y|
  bool positivity = true;
  double tv_lambda = 0.0;  // post-denoise weight (0 = off)
  int tv_iters = 100;
};

struct ReconResult {
  Image s;
  std::vector<double> objective;  // J before the first step, then per iteration
  double final_residual = 0.0;
};

/// Approximately minimizes |A(U,s) - y|^2 over s >= 0 by Polak-Ribiere
/// nonlinear CG. Positivity is handled by projection after each accepted
/// step (with a direction reset whenever the projection was active) and the
/// backtracking line search keeps the objective non-increasing.
ReconResult cg_sense_motion(const MotionProblem& problem, const DeformationSequence& u,
                            const Image& s0, const ReconConfig& cfg);

/// Static CG-SENSE image of a single excitation's data.
Image per_excitation_recon(const MotionProblem& problem, int exc, const ReconConfig& cfg);

}  // namespace moco
