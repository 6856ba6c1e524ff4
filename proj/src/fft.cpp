#include "fft.hpp"

#include <cmath>
#include <map>
#include <memory>
#include <mutex>

namespace moco::fft {

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;

bool is_pow2(size_t n) { return n != 0 && (n & (n - 1)) == 0; }

size_t next_pow2(size_t n) {
  size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

struct Pow2Plan {
  size_t n = 0;
  std::vector<size_t> bitrev;
  std::vector<Complex> twiddle;  // e^{-2pi i k / n}, k < n/2

  explicit Pow2Plan(size_t size) : n(size) {
    bitrev.resize(n);
    size_t log2n = 0;
    while ((size_t{1} << log2n) < n) ++log2n;
    for (size_t i = 0; i < n; ++i) {
      size_t r = 0;
      for (size_t b = 0; b < log2n; ++b) r |= ((i >> b) & 1u) << (log2n - 1 - b);
      bitrev[i] = r;
    }
    twiddle.resize(n / 2);
    for (size_t k = 0; k < n / 2; ++k) {
      const double a = -2.0 * kPi * static_cast<double>(k) / static_cast<double>(n);
      twiddle[k] = Complex(std::cos(a), std::sin(a));
    }
  }
};

struct BluesteinPlan {
  size_t n = 0;
  size_t m = 0;                  // pow2 convolution size >= 2n-1
  std::vector<Complex> chirp;    // e^{-pi i k^2 / n}
  std::vector<Complex> bspec;    // FFT of the conjugate-chirp sequence
};

const Pow2Plan& pow2_plan(size_t n) {
  static std::mutex mu;
  static std::map<size_t, std::unique_ptr<Pow2Plan>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<Pow2Plan>(n);
  return *slot;
}

void fft_pow2(Complex* a, size_t n) {
  const Pow2Plan& plan = pow2_plan(n);
  for (size_t i = 0; i < n; ++i) {
    const size_t r = plan.bitrev[i];
    if (i < r) std::swap(a[i], a[r]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    const size_t step = n / len;
    for (size_t base = 0; base < n; base += len) {
      for (size_t k = 0; k < len / 2; ++k) {
        const Complex w = plan.twiddle[k * step];
        const Complex u = a[base + k];
        const Complex t = w * a[base + k + len / 2];
        a[base + k] = u + t;
        a[base + k + len / 2] = u - t;
      }
    }
  }
}

const BluesteinPlan& bluestein_plan(size_t n) {
  static std::mutex mu;
  static std::map<size_t, std::unique_ptr<BluesteinPlan>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto& slot = cache[n];
  if (!slot) {
    auto plan = std::make_unique<BluesteinPlan>();
    plan->n = n;
    plan->m = next_pow2(2 * n - 1);
    plan->chirp.resize(n);
    for (size_t k = 0; k < n; ++k) {
      // k^2 mod 2n keeps the angle argument small for large sizes.
      const uint64_t k2 = (static_cast<uint64_t>(k) * k) % (2 * n);
      const double a = -kPi * static_cast<double>(k2) / static_cast<double>(n);
      plan->chirp[k] = Complex(std::cos(a), std::sin(a));
    }
    std::vector<Complex> b(plan->m, Complex(0, 0));
    b[0] = std::conj(plan->chirp[0]);
    for (size_t k = 1; k < n; ++k) {
      b[k] = std::conj(plan->chirp[k]);
      b[plan->m - k] = std::conj(plan->chirp[k]);
    }
    fft_pow2(b.data(), plan->m);
    plan->bspec = std::move(b);
    slot = std::move(plan);
  }
  return *slot;
}

void fft_bluestein(Complex* x, size_t n) {
  const BluesteinPlan& plan = bluestein_plan(n);
  std::vector<Complex> a(plan.m, Complex(0, 0));
  for (size_t k = 0; k < n; ++k) a[k] = x[k] * plan.chirp[k];
  fft_pow2(a.data(), plan.m);
  for (size_t k = 0; k < plan.m; ++k) a[k] *= plan.bspec[k];
  // Unnormalized inverse via conjugation.
  for (auto& v : a) v = std::conj(v);
  fft_pow2(a.data(), plan.m);
  const double scale = 1.0 / static_cast<double>(plan.m);
  for (size_t k = 0; k < n; ++k) x[k] = std::conj(a[k]) * scale * plan.chirp[k];
}

}  // namespace

void transform(Complex* a, size_t n, bool inverse) {
  if (n <= 1) return;
  if (inverse) {
    for (size_t i = 0; i < n; ++i) a[i] = std::conj(a[i]);
  }
  if (is_pow2(n)) {
    fft_pow2(a, n);
  } else {
    fft_bluestein(a, n);
  }
  if (inverse) {
    for (size_t i = 0; i < n; ++i) a[i] = std::conj(a[i]);
  }
}

namespace {

// Post-transform phase attaching the centered/half-offset convention:
// P[f] = gamma * (-1)^f * e^{-pi i f / n}, gamma = i e^{-pi i n / 2}.
std::vector<Complex> centered_phases(int n) {
  std::vector<Complex> p(n);
  const Complex gamma = (n % 4 == 0) ? Complex(0, 1) : Complex(0, -1);
  for (int f = 0; f < n; ++f) {
    const double a = -kPi * static_cast<double>(f) / n;
    Complex v = gamma * Complex(std::cos(a), std::sin(a));
    if (f & 1) v = -v;
    p[f] = v;
  }
  return p;
}

const std::vector<Complex>& phase_table(int n) {
  static std::mutex mu;
  static std::map<int, std::vector<Complex>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto& slot = cache[n];
  if (slot.empty()) slot = centered_phases(n);
  return slot;
}

void rows_cols_transform(std::vector<Complex>& a, int n, bool inverse) {
  for (int j = 0; j < n; ++j) transform(a.data() + static_cast<size_t>(j) * n, n, inverse);
  std::vector<Complex> col(n);
  for (int k = 0; k < n; ++k) {
    for (int j = 0; j < n; ++j) col[j] = a[static_cast<size_t>(j) * n + k];
    transform(col.data(), n, inverse);
    for (int j = 0; j < n; ++j) a[static_cast<size_t>(j) * n + k] = col[j];
  }
}

}  // namespace

void dft2_centered(std::vector<Complex>& a, int n) {
  for (int j = 0; j < n; ++j) {
    for (int k = 0; k < n; ++k) {
      if ((j + k) & 1) a[static_cast<size_t>(j) * n + k] = -a[static_cast<size_t>(j) * n + k];
    }
  }
  rows_cols_transform(a, n, false);
  const auto& p = phase_table(n);
  const double inv_n = 1.0 / n;
  for (int fr = 0; fr < n; ++fr) {
    const Complex pr = p[fr] * inv_n;
    for (int fc = 0; fc < n; ++fc) {
      a[static_cast<size_t>(fr) * n + fc] *= pr * p[fc];
    }
  }
}

void idft2_centered(std::vector<Complex>& a, int n) {
  const auto& p = phase_table(n);
  const double inv_n = 1.0 / n;
  for (int fr = 0; fr < n; ++fr) {
    const Complex pr = std::conj(p[fr]) * inv_n;
    for (int fc = 0; fc < n; ++fc) {
      a[static_cast<size_t>(fr) * n + fc] *= pr * std::conj(p[fc]);
    }
  }
  rows_cols_transform(a, n, true);
  for (int j = 0; j < n; ++j) {
    for (int k = 0; k < n; ++k) {
      if ((j + k) & 1) a[static_cast<size_t>(j) * n + k] = -a[static_cast<size_t>(j) * n + k];
    }
  }
}

ComplexField dft2_centered(const ComplexField& in) {
  ComplexField out = in;
  dft2_centered(out.v, in.grid.n);
  return out;
}

ComplexField idft2_centered(const ComplexField& in) {
  ComplexField out = in;
  idft2_centered(out.v, in.grid.n);
  return out;
}

}  // namespace moco::fft
