#pragma once

#include <vector>

#include "forward_op.hpp"

namespace moco {

/// Data-fidelity gradient w.r.t. the per-pixel deformation parameters, one
/// pair of planes per excitation. Excitation 0 is zeroed when the first
/// state is pinned as the reference configuration.
struct GradientField {
  std::vector<std::vector<double>> gx, gy;
};

/// Hessian diagonal of the data fidelity plus its stabilizing floor: the
/// regularized diagonal is diag + 0.05 max(diag) per excitation and axis.
struct HessianInfo {
  std::vector<double> kappa;  // diagonal value of F* A_i* A_i F
  std::vector<std::vector<double>> hx, hy;
};

GradientField grad_u(const MotionProblem& problem, const DeformationSequence& u, const Image& s,
                     bool pin_first = true);

HessianInfo hessian_diag(const MotionProblem& problem, const DeformationSequence& u,
                         const Image& s);

/// Entrywise g / H per axis and excitation (entries with a nonpositive
/// diagonal produce a zero step).
GradientField precondition(const GradientField& g, const HessianInfo& h);

/// Relative error between the analytic gradient entry and a central finite
/// difference of J with step h at one pixel of one excitation.
double fd_check(const MotionProblem& problem, const DeformationSequence& u, const Image& s,
                int exc, int j, int k, Axis axis, double h);

}  // namespace moco
