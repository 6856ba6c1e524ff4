#pragma once

#include <vector>

#include "grid.hpp"
#include "rng.hpp"

namespace moco {

/// Gaussian-profile receiver sensitivities S_c(r) = exp(-(r - r_c)^2 / d_c),
/// centers drawn on a ring of radius 0.45 N, widths d_c in
/// [0.5, 1.5] (N/2)^2. Maps are real-valued but stored complex since the
/// data path is complex throughout.
struct CoilMaps {
  Grid grid;
  int n_coils = 0;
  std::vector<ComplexField> maps;
  std::vector<double> center_x, center_y, width;  // synthesis metadata
};

CoilMaps synth_coils(int n_coils, Grid grid, const Rng& rng);

/// Sum of |S_c|^2 at a pixel (SENSE coverage diagnostic).
double coil_coverage(const CoilMaps& coils, int j, int k);

}  // namespace moco
