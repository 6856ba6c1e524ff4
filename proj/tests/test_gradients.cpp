#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "gradients.hpp"
#include "oracles.hpp"

using namespace moco;

namespace {

// Perturbed copy of the truth with cell-interior coordinates.
DeformationSequence perturb(const DeformationSequence& u, double amp, uint64_t seed) {
  DeformationSequence out = u;
  Rng rng(seed);
  for (int i = 1; i < out.size(); ++i) {
    for (auto& v : out.fields[i].px) v += amp * rng.uniform(-1.0, 1.0);
    for (auto& v : out.fields[i].py) v += amp * rng.uniform(-1.0, 1.0);
  }
  auto nudge = [](std::vector<double>& plane) {
    for (auto& v : plane) {
      const double frac = v - std::floor(v);
      if (frac < 0.1) v += 0.12;
      if (frac > 0.9) v -= 0.12;
    }
  };
  for (int i = 1; i < out.size(); ++i) {
    nudge(out.fields[i].px);
    nudge(out.fields[i].py);
  }
  return out;
}

}  // namespace

TEST_CASE("gradient vanishes at the true configuration") {
  auto sc = fixtures::make_scene(16, 2, 2, 8, 3);
  const GradientField g = grad_u(sc.problem, sc.u_ref, sc.s_ref);
  double peak = 0;
  for (int i = 0; i < 2; ++i) {
    for (size_t p = 0; p < g.gx[i].size(); ++p) {
      peak = std::max({peak, std::fabs(g.gx[i][p]), std::fabs(g.gy[i][p])});
    }
  }
  CHECK(peak <= 1e-10 * sc.problem.y.norm2());
}

TEST_CASE("gradient vanishes for a constant image") {
  auto sc = fixtures::make_scene(16, 2, 2, 8, 5);
  const Image ones = make_phantom(PhantomKind::constant, sc.problem.grid);
  MotionProblem p = sc.problem;
  p.y = forward(DeformationSequence::identity(p.grid, 2), ones, p);
  const DeformationSequence u = perturb(DeformationSequence::identity(p.grid, 2), 0.4, 7);
  const GradientField g = grad_u(p, u, ones);
  // du_dp of a constant image is zero away from the FOV edge, and so is the
  // gradient.
  const int n = p.grid.n;
  for (int i = 1; i < 2; ++i) {
    for (int j = 2; j < n - 2; ++j) {
      for (int k = 2; k < n - 2; ++k) {
        CHECK(std::fabs(g.gx[i][static_cast<size_t>(j) * n + k]) < 1e-12);
      }
    }
  }
}

TEST_CASE("finite differences confirm the analytic gradient") {
  // N=16, two excitations, both operator paths.
  for (const SamplingPath path : {SamplingPath::dfft, SamplingPath::nufft}) {
    auto sc = fixtures::make_scene(16, 2, 2, 8, 11, MotionClass::rigid, 0.0, path);
    const DeformationSequence u = perturb(sc.u_ref, 0.5, 13);
    Rng pick(17);
    int checked = 0;
    while (checked < 110) {
      const int i = 1;
      const int j = 2 + static_cast<int>(pick.uniform() * 12);
      const int k = 2 + static_cast<int>(pick.uniform() * 12);
      const Axis axis = pick.uniform() < 0.5 ? Axis::x : Axis::y;
      const GradientField g = grad_u(sc.problem, u, sc.s_ref, false);
      const size_t p = static_cast<size_t>(j) * 16 + k;
      const double entry = axis == Axis::x ? g.gx[i][p] : g.gy[i][p];
      if (std::fabs(entry) <= 1e-8) {
        ++checked;
        continue;
      }
      const double err = fd_check(sc.problem, u, sc.s_ref, i, j, k, axis, 1e-3);
      CHECK(err <= 1e-4);
      ++checked;
    }
  }
}

TEST_CASE("hessian diagonal") {
  SUBCASE("kappa is M_i / N^2, equal to one on a full mask") {
    auto sc = fixtures::make_scene(16, 2, 2, 8, 19);
    for (int i = 0; i < 2; ++i) {
      CHECK(sc.problem.kappa(i) ==
            doctest::Approx(sc.problem.masks.m[i] / 256.0).epsilon(1e-15));
    }
    MotionProblem full = sc.problem;
    std::vector<int> all(256);
    for (int q = 0; q < 256; ++q) all[q] = q;
    full.masks.grid_points = {all, all};
    full.masks.m = {256, 256};
    CHECK(full.kappa(0) == 1.0);
  }

  SUBCASE("matches brute-force second differences at N=8") {
    auto sc = fixtures::make_scene(8, 2, 2, 4, 23);
    const DeformationSequence u = perturb(sc.u_ref, 0.4, 29);
    const HessianInfo h = hessian_diag(sc.problem, u, sc.s_ref);
    // Recover the unfloored diagonal: max(H) = 1.05 max(diag).
    for (const Axis axis : {Axis::x, Axis::y}) {
      const auto& plane = axis == Axis::x ? h.hx[1] : h.hy[1];
      double hmax = 0;
      for (double v : plane) hmax = std::max(hmax, v);
      const double dmax = hmax / 1.05;
      const double floor = 0.05 * dmax;
      const double hstep = 1e-3;
      for (int j = 2; j < 6; ++j) {
        for (int k = 2; k < 6; ++k) {
          const size_t p = static_cast<size_t>(j) * 8 + k;
          const double diag = plane[p] - floor;
          DeformationField probe = u.fields[1];
          auto& coord = axis == Axis::x ? probe.px : probe.py;
          const double base = coord[p];
          coord[p] = base + hstep;
          const double jp = residual_excitation(probe, sc.s_ref, sc.problem, 1);
          coord[p] = base - hstep;
          const double jm = residual_excitation(probe, sc.s_ref, sc.problem, 1);
          coord[p] = base;
          const double j0 = residual_excitation(probe, sc.s_ref, sc.problem, 1);
          const double fd = (jp - 2 * j0 + jm) / (hstep * hstep);
          if (std::fabs(diag) > 1e-9 * dmax) {
            CHECK(std::fabs(diag - fd) / std::max(std::fabs(diag), std::fabs(fd)) <= 1e-3);
          }
        }
      }
    }
  }

  SUBCASE("floor keeps the regularized diagonal away from zero") {
    auto sc = fixtures::make_scene(16, 2, 2, 8, 31);
    const DeformationSequence u = perturb(sc.u_ref, 0.3, 37);
    const HessianInfo h = hessian_diag(sc.problem, u, sc.s_ref);
    for (int i = 0; i < 2; ++i) {
      for (const auto* plane : {&h.hx[i], &h.hy[i]}) {
        double hmax = 0, hmin = 1e300;
        for (double v : *plane) {
          hmax = std::max(hmax, v);
          hmin = std::min(hmin, v);
        }
        const double dmax = hmax / 1.05;
        CHECK(hmin >= 0.05 * dmax - 1e-12 * hmax);
      }
    }
  }

  SUBCASE("constant image: regularized diagonal collapses to the floor") {
    auto sc = fixtures::make_scene(16, 2, 2, 8, 41);
    const Image ones = make_phantom(PhantomKind::constant, sc.problem.grid);
    const DeformationSequence id = DeformationSequence::identity(sc.problem.grid, 2);
    const HessianInfo h = hessian_diag(sc.problem, id, ones);
    // The edge pixels give du_dp != 0 under zero padding, so restrict to the
    // interior where the diagonal is exactly zero before the floor.
    const int n = sc.problem.grid.n;
    double hmax = 0;
    for (double v : h.hx[1]) hmax = std::max(hmax, v);
    const double floor = 0.05 * (hmax / 1.05);
    for (int j = 2; j < n - 2; ++j) {
      for (int k = 2; k < n - 2; ++k) {
        CHECK(h.hx[1][static_cast<size_t>(j) * n + k] == doctest::Approx(floor).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("precondition") {
  auto sc = fixtures::make_scene(16, 2, 2, 8, 43);
  const DeformationSequence u = perturb(sc.u_ref, 0.4, 47);
  const GradientField g = grad_u(sc.problem, u, sc.s_ref);

  SUBCASE("unit diagonal is the identity") {
    HessianInfo h;
    h.kappa = {1.0, 1.0};
    h.hx = {std::vector<double>(256, 1.0), std::vector<double>(256, 1.0)};
    h.hy = h.hx;
    const GradientField out = precondition(g, h);
    CHECK(out.gx[1] == g.gx[1]);
    CHECK(out.gy[1] == g.gy[1]);
  }

  SUBCASE("zero gradient gives a zero step") {
    GradientField zero;
    zero.gx = {std::vector<double>(256, 0.0), std::vector<double>(256, 0.0)};
    zero.gy = zero.gx;
    const HessianInfo h = hessian_diag(sc.problem, u, sc.s_ref);
    const GradientField out = precondition(zero, h);
    for (double v : out.gx[1]) CHECK(v == 0.0);
  }

  SUBCASE("image scaling cancels in the preconditioned step") {
    // Scale the image and data together: gradient and diagonal scale by 4.
    Image s2 = sc.s_ref;
    for (auto& v : s2.v) v *= 2.0;
    MotionProblem p2 = sc.problem;
    p2.y = forward(sc.u_ref, s2, p2);
    const GradientField g2 = grad_u(p2, u, s2);
    const HessianInfo h1 = hessian_diag(sc.problem, u, sc.s_ref);
    const HessianInfo h2 = hessian_diag(p2, u, s2);
    const GradientField step1 = precondition(g, h1);
    const GradientField step2 = precondition(g2, h2);
    for (size_t p = 0; p < g.gx[1].size(); ++p) {
      CHECK(g2.gx[1][p] == doctest::Approx(4.0 * g.gx[1][p]).epsilon(1e-9));
      CHECK(h2.hx[1][p] == doctest::Approx(4.0 * h1.hx[1][p]).epsilon(1e-9));
      CHECK(step2.gx[1][p] == doctest::Approx(step1.gx[1][p]).epsilon(1e-9));
    }
  }
}

TEST_CASE("excitation locality of the gradient") {
  auto sc = fixtures::make_scene(16, 3, 2, 6, 53);
  const DeformationSequence u = perturb(sc.u_ref, 0.3, 59);
  const GradientField base = grad_u(sc.problem, u, sc.s_ref);
  MotionProblem p = sc.problem;
  for (auto& v : p.y.y[2][1]) v += Complex(0.2, -0.3);
  const GradientField after = grad_u(p, u, sc.s_ref);
  CHECK(after.gx[1] == base.gx[1]);
  CHECK(after.gy[1] == base.gy[1]);
  bool changed = false;
  for (size_t q = 0; q < after.gx[2].size(); ++q) {
    if (after.gx[2][q] != base.gx[2][q]) changed = true;
  }
  CHECK(changed);
}

TEST_CASE("hessian kappa is reproducible") {
  auto sc = fixtures::make_scene(16, 2, 2, 8, 61);
  const HessianInfo a = hessian_diag(sc.problem, sc.u_ref, sc.s_ref);
  const HessianInfo b = hessian_diag(sc.problem, sc.u_ref, sc.s_ref);
  CHECK(a.kappa == b.kappa);
  CHECK(a.hx[0] == b.hx[0]);
}

TEST_CASE("fd_check behaviors") {
  SUBCASE("linear ramp with rigid motion is exact") {
    const Grid g = make_grid(16);
    auto sc = fixtures::make_scene(16, 2, 2, 8, 67);
    Image ramp(g);
    for (int j = 0; j < g.n; ++j) {
      for (int k = 0; k < g.n; ++k) ramp.at(j, k) = 0.05 * (g.x(k) + g.y(j)) + 1.0;
    }
    MotionProblem p = sc.problem;
    const DeformationSequence u_true = sc.u_ref;
    p.y = forward(u_true, ramp, p);
    const DeformationSequence u = perturb(u_true, 0.3, 71);
    // J is exactly quadratic inside interpolation cells: central differences
    // agree to roundoff for interior pixels with nonzero gradient.
    const GradientField gf = grad_u(p, u, ramp, false);
    int found = 0;
    for (int j = 4; j < 12 && found < 10; ++j) {
      for (int k = 4; k < 12 && found < 10; ++k) {
        const size_t q = static_cast<size_t>(j) * 16 + k;
        if (std::fabs(gf.gx[1][q]) < 1e-6) continue;
        CHECK(fd_check(p, u, ramp, 1, j, k, Axis::x, 1e-3) <= 1e-8);
        ++found;
      }
    }
    CHECK(found > 0);
  }

  SUBCASE("zero image gradient gives zero error") {
    auto sc = fixtures::make_scene(16, 2, 2, 8, 73);
    const Image ones = make_phantom(PhantomKind::constant, sc.problem.grid);
    MotionProblem p = sc.problem;
    p.y = forward(DeformationSequence::identity(p.grid, 2), ones, p);
    const DeformationSequence u = perturb(DeformationSequence::identity(p.grid, 2), 0.3, 79);
    CHECK(fd_check(p, u, ones, 1, 8, 8, Axis::x, 1e-3) == 0.0);
  }

  SUBCASE("bad arguments") {
    auto sc = fixtures::make_scene(16, 2, 2, 8, 83);
    CHECK_THROWS_AS(fd_check(sc.problem, sc.u_ref, sc.s_ref, 5, 1, 1, Axis::x, 1e-3),
                    std::invalid_argument);
    CHECK_THROWS_AS(fd_check(sc.problem, sc.u_ref, sc.s_ref, 0, 1, 1, Axis::x, 0.0),
                    std::invalid_argument);
  }
}
