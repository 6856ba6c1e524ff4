#pragma once

#include <string>

#include "grid.hpp"

namespace moco {

enum class PhantomKind { shepp_logan, disks, constant };

PhantomKind phantom_kind_from_string(const std::string& s);

/// Synthetic nonnegative test images scaled to the field of view.
Image make_phantom(PhantomKind kind, Grid grid);

/// Separable Gaussian blur with reflected borders (pyramids, smooth phantoms).
Image gaussian_blur(const Image& in, double sigma);

}  // namespace moco
