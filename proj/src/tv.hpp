#pragma once

#include "grid.hpp"

namespace moco {

/// Isotropic total variation (forward differences, Neumann boundary).
double tv_value(const Image& s);

/// Proximal TV denoising: min_u 0.5 |u - s|^2 + lambda TV(u) by Chambolle's
/// dual projection with a fixed iteration count; the output is clamped
/// nonnegative at the end.
Image tv_denoise(const Image& s, double lambda, int iters);

}  // namespace moco
