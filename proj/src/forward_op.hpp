#pragma once

#include <memory>
#include <string>
#include <vector>

#include "coils.hpp"
#include "deform.hpp"
#include "grid.hpp"
#include "nufft.hpp"
#include "rng.hpp"
#include "trajectory.hpp"

namespace moco {

enum class SamplingPath { dfft, nufft };

SamplingPath sampling_path_from_string(const std::string& s);
std::string to_string(SamplingPath p);

/// Measured samples per excitation and coil. DFFT path: values at the masked
/// grid points in grid_points order; NUFFT path: density-weighted values at
/// the excitation's trajectory samples.
struct KSpaceData {
  std::vector<std::vector<std::vector<Complex>>> y;  // [exc][coil][sample]
  double noise_level = 0.0;

  double norm2() const;
};

KSpaceData operator-(const KSpaceData& a, const KSpaceData& b);

/// Everything needed to evaluate the motion-forward operator and its
/// adjoint: grid, sampling structure, coils and (optionally) measured data.
struct MotionProblem {
  Grid grid;
  SamplingPath path = SamplingPath::dfft;
  int n_exc = 0;
  int n_coils = 0;
  Trajectory traj;
  ExcitationMasks masks;
  CoilMaps coils;
  KSpaceData y;
  // NUFFT path only: per-excitation density weights and gridding operators.
  std::vector<std::vector<double>> dcf;
  std::vector<std::shared_ptr<Nufft>> nufft_ops;
  int threads = 1;

  /// Diagonal of F* A_i* A_i F (equal entries): M_i / N^2 on the DFFT path,
  /// sum(D_i) / N^2 on the density-weighted NUFFT path.
  double kappa(int exc) const;
};

/// Builds the sampling structure (masks, DCF, gridding plans); y stays empty.
MotionProblem make_problem(Grid grid, SamplingPath path, int n_spokes, int n_readout, int n_exc,
                           const CoilMaps& coils, int dcf_iters = 10,
                           int nufft_width = kNufftDefaultWidth);

/// Restriction of the problem to one excitation (identity-motion SENSE
/// subproblem used for the per-excitation reconstructions).
MotionProblem restrict_to_excitation(const MotionProblem& problem, int exc);

KSpaceData forward(const DeformationSequence& u, const Image& s, const MotionProblem& problem);

/// Exact adjoint of forward w.r.t. the real image inner product.
std::vector<double> adjoint(const KSpaceData& y, const DeformationSequence& u,
                            const MotionProblem& problem);

struct Residuum {
  KSpaceData r;
  double j = 0.0;
};

/// R = y - forward(U, s) and the data-fidelity value J = |R|^2.
Residuum residuum(const DeformationSequence& u, const Image& s, const MotionProblem& problem);

/// Data fidelity of excitation i only.
double residual_excitation(const DeformationField& u_i, const Image& s,
                           const MotionProblem& problem, int exc);

/// Adds i.i.d. complex Gaussian noise with per-component standard deviation
/// level * RMS(|y|) / sqrt(2).
KSpaceData add_noise(const KSpaceData& y, double level, const Rng& rng);

/// Raw (unweighted) trajectory samples of the motion model, the form stored
/// in datasets. Identical to forward() on the DFFT path; the NUFFT path
/// omits the D^{1/2} factor.
KSpaceData simulate_samples(const DeformationSequence& u, const Image& s,
                            const MotionProblem& problem);

/// Converts raw samples into the operator-matched space (multiplies by
/// D^{1/2} on the NUFFT path).
KSpaceData apply_dcf_weights(const MotionProblem& problem, const KSpaceData& raw);

}  // namespace moco
