#include "tv.hpp"

#include <cmath>
#include <stdexcept>

namespace moco {

namespace {

// Forward differences, zero across the far edge.
void grad(const std::vector<double>& u, int n, std::vector<double>& gx, std::vector<double>& gy) {
  for (int j = 0; j < n; ++j) {
    for (int k = 0; k < n; ++k) {
      const size_t p = static_cast<size_t>(j) * n + k;
      gx[p] = k + 1 < n ? u[p + 1] - u[p] : 0.0;
      gy[p] = j + 1 < n ? u[p + n] - u[p] : 0.0;
    }
  }
}

// Negative adjoint of grad.
void divergence(const std::vector<double>& px, const std::vector<double>& py, int n,
                std::vector<double>& out) {
  for (int j = 0; j < n; ++j) {
    for (int k = 0; k < n; ++k) {
      const size_t p = static_cast<size_t>(j) * n + k;
      double v = 0;
      if (k + 1 < n) v += px[p];
      if (k > 0) v -= px[p - 1];
      if (j + 1 < n) v += py[p];
      if (j > 0) v -= py[p - n];
      out[p] = v;
    }
  }
}

}  // namespace

double tv_value(const Image& s) {
  const int n = s.grid.n;
  std::vector<double> gx(s.v.size()), gy(s.v.size());
  grad(s.v, n, gx, gy);
  double tv = 0;
  for (size_t p = 0; p < s.v.size(); ++p) tv += std::hypot(gx[p], gy[p]);
  return tv;
}

Image tv_denoise(const Image& s, double lambda, int iters) {
  if (lambda < 0) throw std::invalid_argument("tv lambda must be >= 0");
  if (lambda == 0) return s;
  const int n = s.grid.n;
  const size_t npx = s.v.size();
  std::vector<double> px(npx, 0.0), py(npx, 0.0);
  std::vector<double> div(npx), work(npx), gx(npx), gy(npx);
  const double tau = 0.125;

  for (int it = 0; it < iters; ++it) {
    divergence(px, py, n, div);
    for (size_t p = 0; p < npx; ++p) work[p] = div[p] - s.v[p] / lambda;
    grad(work, n, gx, gy);
    for (size_t p = 0; p < npx; ++p) {
      const double nx = px[p] + tau * gx[p];
      const double ny = py[p] + tau * gy[p];
      const double mag = 1.0 + tau * std::hypot(gx[p], gy[p]);
      px[p] = nx / mag;
      py[p] = ny / mag;
    }
  }

  divergence(px, py, n, div);
  Image out(s.grid);
  for (size_t p = 0; p < npx; ++p) out.v[p] = std::max(0.0, s.v[p] - lambda * div[p]);
  return out;
}

}  // namespace moco
