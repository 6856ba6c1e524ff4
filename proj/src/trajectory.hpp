#pragma once

#include <vector>

#include "grid.hpp"

namespace moco {

/// Radial k-space trajectory. Sample coordinates live on the centered
/// frequency grid (units of grid cells, disc radius N/2); spoke s, readout t
/// is sample s * n_readout + t.
struct Trajectory {
  int n_spokes = 0;
  int n_readout = 0;
  std::vector<double> angles;  // radians in [0, pi), per spoke
  std::vector<int> order;      // acquisition order (permutation of spokes)
  std::vector<double> kx, ky;  // per sample, spoke-major

  int samples() const { return n_spokes * n_readout; }
};

/// Evenly spaced spokes (angle s*pi/n_spokes); each spoke holds n_readout
/// equispaced samples spanning the full diameter, including the exact
/// k-space center when n_readout is even. Acquisition order is van der
/// Corput.
Trajectory radial_trajectory(int n_spokes, int n_readout, Grid grid);

/// Bit-reversed (power of two) or greedy largest-gap (general) low
/// discrepancy ordering of spoke indices.
std::vector<int> van_der_corput_order(int n_spokes);

/// Per-excitation selectors: contiguous blocks of the acquisition order.
/// For the DFFT path each excitation is reduced to the set of nearest grid
/// points of its samples (duplicates collapsed); m[i] counts them.
struct ExcitationMasks {
  int n_exc = 0;
  std::vector<std::vector<int>> spokes;       // spoke ids per excitation
  std::vector<std::vector<int>> sample_ids;   // trajectory sample indices
  std::vector<std::vector<int>> grid_points;  // sorted row-major k-grid indices
  std::vector<int> m;                         // grid point count per excitation
};

ExcitationMasks partition_excitations(const Trajectory& traj, int n_exc, Grid grid);

/// Nearest grid point of a sample (round half away from zero), as a
/// row-major index into the centered N x N frequency grid.
int nearest_grid_index(double kx, double ky, Grid grid);

}  // namespace moco
