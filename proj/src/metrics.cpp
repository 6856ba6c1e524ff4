#include "metrics.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "cg_sense.hpp"

namespace moco {

ImageMetrics image_metrics(const Image& test, const Image& ref, double data_range) {
  if (!(test.grid == ref.grid)) throw std::invalid_argument("metrics: grid mismatch");
  if (data_range <= 0) throw std::invalid_argument("metrics: data range must be positive");
  const int n = test.grid.n;
  if (n < 11) throw std::invalid_argument("metrics: image too small for the SSIM window");

  ImageMetrics out;
  double sq = 0;
  for (size_t p = 0; p < test.v.size(); ++p) {
    const double d = test.v[p] - ref.v[p];
    sq += d * d;
  }
  const double mse_plain = sq / test.v.size();
  out.mse = 100.0 * mse_plain;
  if (mse_plain == 0.0) {
    out.psnr_infinite = true;
    out.psnr = std::numeric_limits<double>::infinity();
  } else {
    out.psnr = 10.0 * std::log10(data_range * data_range / mse_plain);
  }

  // SSIM, 11x11 Gaussian window sigma 1.5, windows fully inside the image.
  constexpr int kWin = 11;
  constexpr int kRad = kWin / 2;
  double w[kWin][kWin];
  double wsum = 0;
  for (int a = 0; a < kWin; ++a) {
    for (int b = 0; b < kWin; ++b) {
      const double da = a - kRad, db = b - kRad;
      w[a][b] = std::exp(-(da * da + db * db) / (2.0 * 1.5 * 1.5));
      wsum += w[a][b];
    }
  }
  for (auto& row : w) {
    for (double& v : row) v /= wsum;
  }
  const double c1 = (0.01 * data_range) * (0.01 * data_range);
  const double c2 = (0.03 * data_range) * (0.03 * data_range);
  double ssim_sum = 0;
  long count = 0;
  for (int j = kRad; j < n - kRad; ++j) {
    for (int k = kRad; k < n - kRad; ++k) {
      double mx = 0, my = 0;
      for (int a = 0; a < kWin; ++a) {
        for (int b = 0; b < kWin; ++b) {
          mx += w[a][b] * test.at(j + a - kRad, k + b - kRad);
          my += w[a][b] * ref.at(j + a - kRad, k + b - kRad);
        }
      }
      double vx = 0, vy = 0, cov = 0;
      for (int a = 0; a < kWin; ++a) {
        for (int b = 0; b < kWin; ++b) {
          const double dx = test.at(j + a - kRad, k + b - kRad) - mx;
          const double dy = ref.at(j + a - kRad, k + b - kRad) - my;
          vx += w[a][b] * dx * dx;
          vy += w[a][b] * dy * dy;
          cov += w[a][b] * dx * dy;
        }
      }
      ssim_sum += ((2 * mx * my + c1) * (2 * cov + c2)) /
                  ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++count;
    }
  }
  out.ssim = ssim_sum / count;
  return out;
}

double deformation_rmse(const DeformationSequence& u, const DeformationSequence& u_ref,
                        const Image& mask) {
  if (u.size() != u_ref.size()) throw std::invalid_argument("deformation_rmse: length mismatch");
  if (u.size() < 2) return 0.0;
  const Grid& g = u.fields[0].grid;
  if (!(mask.grid == g)) throw std::invalid_argument("deformation_rmse: mask grid mismatch");
  double acc = 0;
  long count = 0;
  for (int i = 1; i < u.size(); ++i) {
    for (size_t p = 0; p < u.fields[i].px.size(); ++p) {
      if (mask.v[p] <= 0) continue;
      const double dx = u.fields[i].px[p] - u_ref.fields[i].px[p];
      const double dy = u.fields[i].py[p] - u_ref.fields[i].py[p];
      acc += dx * dx + dy * dy;
      ++count;
    }
  }
  if (count == 0) throw std::invalid_argument("deformation_rmse: empty mask");
  return std::sqrt(acc / count);
}

double static_incompatibility(const MotionProblem& problem, int cg_iters) {
  ReconConfig cfg;
  cfg.n_cg = cg_iters;
  cfg.positivity = true;
  const DeformationSequence id = DeformationSequence::identity(problem.grid, problem.n_exc);
  const ReconResult rec = cg_sense_motion(problem, id, Image(problem.grid), cfg);
  return rec.objective.back();
}

}  // namespace moco
