#include "nufft.hpp"

#include <cmath>
#include <stdexcept>

#include "fft.hpp"

namespace moco {

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;

double kb_beta(int width, double osf) {
  const double r = width / osf * (osf - 0.5);
  return kPi * std::sqrt(r * r - 0.8);
}

// The half-offset pixel coordinates make the oversampled spectrum
// antiperiodic: S(g + L) = -S(g). Folding a tap frequency into the
// fundamental window therefore carries a sign per wrap.
struct Fold {
  int index;
  double sign;
};

Fold fold_freq(int g, int L) {
  int shifted = g + L / 2;
  int wraps = 0;
  while (shifted < 0) {
    shifted += L;
    ++wraps;
  }
  while (shifted >= L) {
    shifted -= L;
    ++wraps;
  }
  return {shifted, (wraps & 1) ? -1.0 : 1.0};
}

}  // namespace

double bessel_i0(double x) {
  // Abramowitz & Stegun 9.8.1/9.8.2 polynomial fits.
  const double ax = std::fabs(x);
  if (ax < 3.75) {
    double y = x / 3.75;
    y *= y;
    return 1.0 + y * (3.5156229 + y * (3.0899424 + y * (1.2067492 +
                 y * (0.2659732 + y * (0.0360768 + y * 0.0045813)))));
  }
  const double y = 3.75 / ax;
  return (std::exp(ax) / std::sqrt(ax)) *
         (0.39894228 + y * (0.01328592 + y * (0.00225319 + y * (-0.00157565 +
          y * (0.00916281 + y * (-0.02057706 + y * (0.02635537 + y * (-0.01647633 +
          y * 0.00392377))))))));
}

Nufft::Nufft(Grid grid, std::vector<double> kx, std::vector<double> ky, int width)
    : grid_(grid), width_(width), kx_(std::move(kx)), ky_(std::move(ky)) {
  if (width_ < 2 || width_ > 16) throw std::invalid_argument("nufft kernel width out of range");
  if (kx_.size() != ky_.size()) throw std::invalid_argument("nufft: kx/ky size mismatch");
  beta_ = kb_beta(width_, 2.0);
  os_ = 2 * grid.n;
  const double half = grid.half();
  for (size_t q = 0; q < kx_.size(); ++q) {
    if (std::hypot(kx_[q], ky_[q]) > half + 1e-9) {
      throw std::invalid_argument("trajectory point beyond k-space radius N/2");
    }
  }
  tx_.reserve(kx_.size());
  ty_.reserve(ky_.size());
  for (size_t q = 0; q < kx_.size(); ++q) {
    tx_.push_back(make_taps(kx_[q]));
    ty_.push_back(make_taps(ky_[q]));
  }
  // De-apodization by the inverse DFT of the sampled kernel, which makes
  // on-grid sample locations reproduce the discrete transform exactly.
  apod_.resize(grid.n);
  const double i0b = bessel_i0(beta_);
  const int reach = width_ / 2;
  for (int m = 0; m < grid.n; ++m) {
    const double x = grid.x(m);
    double v = 1.0;  // g = 0 tap of the normalized kernel
    for (int g = 1; g <= reach; ++g) {
      const double u = 2.0 * g / width_;
      if (u > 1.0) break;
      const double c = bessel_i0(beta_ * std::sqrt(1.0 - u * u)) / i0b;
      v += 2.0 * c * std::cos(2.0 * kPi * g * x / os_);
    }
    apod_[m] = v;
  }
}

Nufft::Taps Nufft::make_taps(double k) const {
  // Sample frequency in oversampled cells.
  const double t = 2.0 * k;
  const double hw = 0.5 * width_;
  Taps taps;
  taps.start = static_cast<int>(std::ceil(t - hw));
  const int stop = static_cast<int>(std::floor(t + hw));
  taps.w.reserve(stop - taps.start + 1);
  const double i0b = bessel_i0(beta_);
  for (int g = taps.start; g <= stop; ++g) {
    const double u = (t - g) / hw;
    const double arg = 1.0 - u * u;
    taps.w.push_back(arg <= 0.0 ? (arg > -1e-12 ? 1.0 / i0b : 0.0)
                                : bessel_i0(beta_ * std::sqrt(arg)) / i0b);
  }
  return taps;
}

std::vector<Complex> Nufft::forward(const ComplexField& img) const {
  if (!(img.grid == grid_)) throw std::invalid_argument("nufft forward: grid mismatch");
  const int n = grid_.n;
  const int L = os_;
  std::vector<Complex> os_grid(static_cast<size_t>(L) * L, Complex(0, 0));
  const int off = n / 2;
  for (int j = 0; j < n; ++j) {
    for (int k = 0; k < n; ++k) {
      os_grid[static_cast<size_t>(j + off) * L + (k + off)] =
          img.at(j, k) / (apod_[k] * apod_[j]);
    }
  }
  fft::dft2_centered(os_grid, L);
  // Oversampled spectrum indexed by centered frequency g: idx = g + L/2.
  const double scale = static_cast<double>(L) / n;
  std::vector<Complex> out(kx_.size());
  for (size_t q = 0; q < kx_.size(); ++q) {
    const Taps& ax = tx_[q];
    const Taps& ay = ty_[q];
    Complex acc(0, 0);
    for (size_t a = 0; a < ay.w.size(); ++a) {
      const Fold fy = fold_freq(ay.start + static_cast<int>(a), L);
      Complex racc(0, 0);
      for (size_t b = 0; b < ax.w.size(); ++b) {
        const Fold fx = fold_freq(ax.start + static_cast<int>(b), L);
        racc += ax.w[b] * fx.sign * os_grid[static_cast<size_t>(fy.index) * L + fx.index];
      }
      acc += ay.w[a] * fy.sign * racc;
    }
    out[q] = scale * acc;
  }
  return out;
}

ComplexField Nufft::adjoint(const std::vector<Complex>& samples) const {
  if (samples.size() != kx_.size()) throw std::invalid_argument("nufft adjoint: size mismatch");
  const int n = grid_.n;
  const int L = os_;
  std::vector<Complex> os_grid(static_cast<size_t>(L) * L, Complex(0, 0));
  for (size_t q = 0; q < samples.size(); ++q) {
    const Taps& ax = tx_[q];
    const Taps& ay = ty_[q];
    for (size_t a = 0; a < ay.w.size(); ++a) {
      const Fold fy = fold_freq(ay.start + static_cast<int>(a), L);
      const Complex vy = ay.w[a] * fy.sign * samples[q];
      for (size_t b = 0; b < ax.w.size(); ++b) {
        const Fold fx = fold_freq(ax.start + static_cast<int>(b), L);
        os_grid[static_cast<size_t>(fy.index) * L + fx.index] += ax.w[b] * fx.sign * vy;
      }
    }
  }
  fft::idft2_centered(os_grid, L);
  ComplexField out(grid_);
  const int off = n / 2;
  const double scale = static_cast<double>(L) / n;
  for (int j = 0; j < n; ++j) {
    for (int k = 0; k < n; ++k) {
      out.at(j, k) =
          scale * os_grid[static_cast<size_t>(j + off) * L + (k + off)] / (apod_[k] * apod_[j]);
    }
  }
  return out;
}

namespace {

struct DcfTaps {
  std::vector<int> gx0, gy0;
  std::vector<std::vector<double>> wx, wy;
};

DcfTaps dcf_taps(const Trajectory& traj, const std::vector<int>& ids, int width, double beta) {
  DcfTaps t;
  const double hw = 0.5 * width;
  const double i0b = bessel_i0(beta);
  auto taps_1d = [&](double k, int* start, std::vector<double>* w) {
    const double tt = 2.0 * k;
    *start = static_cast<int>(std::ceil(tt - hw));
    const int stop = static_cast<int>(std::floor(tt + hw));
    for (int g = *start; g <= stop; ++g) {
      const double u = (tt - g) / hw;
      const double arg = 1.0 - u * u;
      w->push_back(arg <= 0.0 ? (arg > -1e-12 ? 1.0 / i0b : 0.0)
                              : bessel_i0(beta * std::sqrt(arg)) / i0b);
    }
  };
  t.gx0.resize(ids.size());
  t.gy0.resize(ids.size());
  t.wx.resize(ids.size());
  t.wy.resize(ids.size());
  for (size_t q = 0; q < ids.size(); ++q) {
    taps_1d(traj.kx[ids[q]], &t.gx0[q], &t.wx[q]);
    taps_1d(traj.ky[ids[q]], &t.gy0[q], &t.wy[q]);
  }
  return t;
}

}  // namespace

std::vector<double> pipe_dcf_samples(const Trajectory& traj, const std::vector<int>& sample_ids,
                                     int iters, Grid grid, int width) {
  if (iters < 1) throw std::invalid_argument("pipe_dcf: iters must be >= 1");
  const int L = 2 * grid.n;
  const double beta = kb_beta(width, 2.0);
  const DcfTaps taps = dcf_taps(traj, sample_ids, width, beta);
  const size_t nq = sample_ids.size();

  std::vector<double> w(nq, 1.0);
  std::vector<double> os(static_cast<size_t>(L) * L, 0.0);
  for (int it = 0; it < iters; ++it) {
    std::fill(os.begin(), os.end(), 0.0);
    for (size_t q = 0; q < nq; ++q) {
      for (size_t a = 0; a < taps.wy[q].size(); ++a) {
        const int row = ((taps.gy0[q] + static_cast<int>(a) + L / 2) % L + L) % L;
        const double vy = taps.wy[q][a] * w[q];
        for (size_t b = 0; b < taps.wx[q].size(); ++b) {
          const int col = ((taps.gx0[q] + static_cast<int>(b) + L / 2) % L + L) % L;
          os[static_cast<size_t>(row) * L + col] += taps.wx[q][b] * vy;
        }
      }
    }
    for (size_t q = 0; q < nq; ++q) {
      double dens = 0.0;
      for (size_t a = 0; a < taps.wy[q].size(); ++a) {
        const int row = ((taps.gy0[q] + static_cast<int>(a) + L / 2) % L + L) % L;
        double racc = 0.0;
        for (size_t b = 0; b < taps.wx[q].size(); ++b) {
          const int col = ((taps.gx0[q] + static_cast<int>(b) + L / 2) % L + L) % L;
          racc += taps.wx[q][b] * os[static_cast<size_t>(row) * L + col];
        }
        dens += taps.wy[q][a] * racc;
      }
      if (dens < 1e-12) {
        throw std::runtime_error("pipe_dcf: interpolation density vanished");
      }
      w[q] /= dens;
    }
  }

  // Normalize so the weights of the samples nearest DC sum to one.
  double rmin = 1e300;
  for (size_t q = 0; q < nq; ++q) {
    rmin = std::min(rmin, std::hypot(traj.kx[sample_ids[q]], traj.ky[sample_ids[q]]));
  }
  double dc_sum = 0.0;
  for (size_t q = 0; q < nq; ++q) {
    if (std::hypot(traj.kx[sample_ids[q]], traj.ky[sample_ids[q]]) <= rmin + 1e-9) {
      dc_sum += w[q];
    }
  }
  if (dc_sum > 0) {
    for (double& v : w) v /= dc_sum;
  }
  return w;
}

std::vector<double> pipe_dcf(const Trajectory& traj, int iters, Grid grid, int width) {
  std::vector<int> ids(traj.samples());
  for (int i = 0; i < traj.samples(); ++i) ids[i] = i;
  return pipe_dcf_samples(traj, ids, iters, grid, width);
}

}  // namespace moco
