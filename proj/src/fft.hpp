#pragma once

#include <vector>

#include "grid.hpp"

namespace moco::fft {

/// In-place unnormalized 1D transform of arbitrary length.
/// forward: X[f] = sum_m x[m] e^{-2pi i f m / n}
/// inverse: X[m] = sum_f x[f] e^{+2pi i f m / n}
void transform(Complex* a, size_t n, bool inverse);

// Centered unitary 2D DFT on an n x n row-major array (n even).
// Row index of the output is the y-frequency, column index the x-frequency,
// both centered: u(f) = f - n/2. Pixels carry the half-offset coordinates
// of Grid, so
//   out[fr,fc] = (1/n) sum_{j,k} in[j,k] e^{-2pi i (u(fc) x(k) + u(fr) y(j)) / n}.
void dft2_centered(std::vector<Complex>& a, int n);
/// Exact inverse (= adjoint) of dft2_centered.
void idft2_centered(std::vector<Complex>& a, int n);

ComplexField dft2_centered(const ComplexField& in);
ComplexField idft2_centered(const ComplexField& in);

}  // namespace moco::fft
