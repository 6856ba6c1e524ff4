#pragma once

#include <vector>

#include "grid.hpp"
#include "trajectory.hpp"

namespace moco {

/// Kernel width (in oversampled grid cells) used when none is requested.
/// Width 8 at 2x oversampling keeps the off-grid gridding error around
/// 1e-7 relative; narrower kernels are available for speed.
inline constexpr int kNufftDefaultWidth = 8;

/// Density estimation kernel for the Pipe fixed point. Width 5 gives the
/// cleanest |k| ramp on radial sets.
inline constexpr int kDcfKernelWidth = 5;

double bessel_i0(double x);

/// Gridding NUFFT between the N x N image grid and off-grid k-space samples
/// (2x oversampling, Kaiser-Bessel kernel, de-apodization in image space).
/// forward evaluates (1/N) sum_m img[m] e^{-2pi i k.x_m / N} at each sample;
/// adjoint is the exact conjugate transpose.
class Nufft {
 public:
  Nufft(Grid grid, std::vector<double> kx, std::vector<double> ky,
        int width = kNufftDefaultWidth);

  std::vector<Complex> forward(const ComplexField& img) const;
  ComplexField adjoint(const std::vector<Complex>& samples) const;

  int n_samples() const { return static_cast<int>(kx_.size()); }
  Grid grid() const { return grid_; }
  int width() const { return width_; }

 private:
  struct Taps {
    int start;                   // first oversampled frequency index
    std::vector<double> w;       // kernel weights, one per tap
  };
  Taps make_taps(double k) const;

  Grid grid_;
  int width_;
  double beta_;
  int os_;  // oversampled grid size (2N)
  std::vector<double> kx_, ky_;
  std::vector<Taps> tx_, ty_;
  std::vector<double> apod_;  // 1D de-apodization, separable
};

/// Pipe-Menon fixed-point density compensation for the given samples
/// (indices into the trajectory); weights are normalized so the samples
/// nearest DC sum to 1.
std::vector<double> pipe_dcf_samples(const Trajectory& traj, const std::vector<int>& sample_ids,
                                     int iters, Grid grid, int width = kDcfKernelWidth);

/// Whole-trajectory weights.
std::vector<double> pipe_dcf(const Trajectory& traj, int iters, Grid grid,
                             int width = kDcfKernelWidth);

}  // namespace moco
