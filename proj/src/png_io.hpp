#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "grid.hpp"

namespace moco {

struct DeformationField;

/// Writes an 8-bit grayscale or RGB PNG (rows top to bottom).
void write_png_gray(const std::filesystem::path& path, const std::vector<uint8_t>& pixels,
                    int width, int height);
void write_png_rgb(const std::filesystem::path& path, const std::vector<uint8_t>& rgb, int width,
                   int height);

/// Magnitude preview with fixed windowing: values are mapped linearly from
/// [0, window_max] to [0, 255].
void export_image_png(const std::filesystem::path& path, const Image& im, double window_max);

/// Displacement color map: hue = direction of (target - identity), value =
/// magnitude scaled by `max_disp` (<=0 means auto from the field).
void export_deformation_png(const std::filesystem::path& path, const DeformationField& field,
                            double max_disp = 0.0);

}  // namespace moco
