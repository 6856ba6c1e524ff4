#pragma once

#include "deform.hpp"
#include "forward_op.hpp"

namespace moco {

struct ImageMetrics {
  double psnr = 0.0;  // dB, valid when !psnr_infinite
  bool psnr_infinite = false;
  double ssim = 0.0;
  double mse = 0.0;  // percent-scaled: 100 * mean squared error
};

/// PSNR / SSIM / MSE against a reference. SSIM uses an 11x11 Gaussian window
/// (sigma 1.5) with constants (0.01 range)^2 and (0.03 range)^2, averaged
/// over windows fully inside the image.
ImageMetrics image_metrics(const Image& test, const Image& ref, double data_range);

/// RMS Euclidean target-coordinate error over mask pixels and excitations
/// 2..N (the first state is the shared reference).
double deformation_rmse(const DeformationSequence& u, const DeformationSequence& u_ref,
                        const Image& mask);

/// Residual floor of the best static reconstruction of (noisy) data:
/// J(identity, s*) with s* from a long CG run.
double static_incompatibility(const MotionProblem& problem, int cg_iters = 200);

}  // namespace moco
