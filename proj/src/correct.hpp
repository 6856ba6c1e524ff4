#pragma once

#include <memory>
#include <string>
#include <vector>

#include "cg_sense.hpp"
#include "forward_op.hpp"
#include "gradients.hpp"

namespace moco {

/// Problem restricted to the central Fourier coefficients: resolution
/// N/2^level, sample values scaled by 2^-level (image amplitudes preserved
/// under the orthonormal convention), coil maps block-averaged.
MotionProblem crop_kspace(const MotionProblem& problem, int level);

/// Bilinear resampling between grid sizes (linear extrapolation at the
/// edges). Deformation coordinates are rescaled by the grid ratio so the
/// physical map is preserved; images are clamped nonnegative.
Image resample_image(const Image& in, int n_to);
DeformationField resample_field(const DeformationField& in, int n_to);
DeformationSequence resample_sequence(const DeformationSequence& in, int n_to);

/// Maps a proposed deformation onto the admissible surrogate. Must be
/// idempotent and preserve the identity.
class Projector {
 public:
  virtual ~Projector() = default;
  virtual DeformationField project(const DeformationField& f, int level) const = 0;
  virtual std::string name() const = 0;
};

class IdentityProjector : public Projector {
 public:
  DeformationField project(const DeformationField& f, int) const override { return f; }
  std::string name() const override { return "identity"; }
};

/// Least-squares fit of the displacement onto a coarse cubic B-spline
/// control grid (an exact linear projection). Control spacing is
/// spacing_h0 / 2^level in level pixels, floor 2.
class SplineProjector : public Projector {
 public:
  explicit SplineProjector(double spacing_h0 = 8.0) : spacing_h0_(spacing_h0) {}
  DeformationField project(const DeformationField& f, int level) const override;
  std::string name() const override { return "spline"; }

 private:
  double spacing_h0_;
};

struct CorrectionConfig {
  int levels = 2;   // coarsest level L
  int n_iter = 2;   // rounds per level
  int n_cg = 10;    // CG iterations per round
  int backtrack = 5;
  bool positivity = true;
  int threads = 1;
};

struct CorrectionResult {
  DeformationSequence u;
  Image s;
  /// J evaluation points per level (after the CG solve and after the
  /// deformation round), non-increasing within each level.
  std::vector<std::vector<double>> j_per_level;
};

/// Multilevel projected preconditioned gradient descent on the deformation
/// parameters, alternating with CG for the image. Excitation 0 stays pinned
/// to the identity; steps are only accepted when they reduce the
/// excitation's data fidelity.
CorrectionResult correct_motion(const MotionProblem& problem, const DeformationSequence& u_est,
                                const CorrectionConfig& cfg, const Projector& projector);

}  // namespace moco
