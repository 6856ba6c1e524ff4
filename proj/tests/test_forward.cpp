#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fft.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace moco;

TEST_CASE("synth_coils") {
  const Grid g = make_grid(32);
  const CoilMaps coils = synth_coils(4, g, Rng(3));

  SUBCASE("default four coils, magnitudes at most one") {
    CHECK(coils.n_coils == 4);
    for (const auto& m : coils.maps) {
      for (const auto& v : m.v) CHECK(std::abs(v) <= 1.0 + 1e-12);
    }
  }

  SUBCASE("maps follow the Gaussian profile of their metadata") {
    for (int c = 0; c < coils.n_coils; ++c) {
      for (int j = 0; j < g.n; j += 5) {
        for (int k = 0; k < g.n; k += 5) {
          const double dx = g.x(k) - coils.center_x[c];
          const double dy = g.y(j) - coils.center_y[c];
          const double expected = std::exp(-(dx * dx + dy * dy) / coils.width[c]);
          CHECK(std::abs(coils.maps[c].at(j, k) - expected) < 1e-12);
        }
      }
    }
    // value at the exact center is e^0 = 1 by the formula
    for (int c = 0; c < coils.n_coils; ++c) {
      const double dx = 0, dy = 0;
      CHECK(std::exp(-(dx + dy) / coils.width[c]) == 1.0);
    }
  }

  SUBCASE("wide-width limit approaches a uniform unit map") {
    CoilMaps wide;
    wide.grid = g;
    wide.n_coils = 1;
    wide.center_x = {0.0};
    wide.center_y = {0.0};
    wide.width = {1e12};
    ComplexField m(g);
    for (int j = 0; j < g.n; ++j) {
      for (int k = 0; k < g.n; ++k) {
        const double dx = g.x(k), dy = g.y(j);
        m.at(j, k) = std::exp(-(dx * dx + dy * dy) / wide.width[0]);
      }
    }
    wide.maps.push_back(m);
    for (const auto& v : wide.maps[0].v) CHECK(std::abs(v - 1.0) < 1e-9);
  }

  SUBCASE("coverage stays above the experiment floor") {
    double min_cov = 1e300;
    for (int j = 0; j < g.n; ++j) {
      for (int k = 0; k < g.n; ++k) min_cov = std::min(min_cov, coil_coverage(coils, j, k));
    }
    CHECK(min_cov >= 1e-3);
  }
}

namespace {

// Full-mask single-coil problem with a uniform map: the forward operator
// reduces to the centered orthonormal DFT.
MotionProblem uniform_full_problem(Grid g) {
  MotionProblem p;
  p.grid = g;
  p.path = SamplingPath::dfft;
  p.n_exc = 1;
  p.n_coils = 1;
  p.coils.grid = g;
  p.coils.n_coils = 1;
  p.coils.maps.emplace_back(g, Complex(1.0, 0.0));
  p.coils.center_x = {0.0};
  p.coils.center_y = {0.0};
  p.coils.width = {1e18};
  p.masks.n_exc = 1;
  p.masks.spokes = {{0}};
  p.masks.sample_ids = {{}};
  std::vector<int> all(g.pixels());
  for (size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
  p.masks.grid_points = {all};
  p.masks.m = {static_cast<int>(all.size())};
  return p;
}

}  // namespace

TEST_CASE("forward operator structure") {
  const Grid g = make_grid(16);

  SUBCASE("zero image maps to zero data") {
    auto sc = fixtures::make_scene(16, 2, 2, 8, 5);
    const KSpaceData y = forward(sc.u_ref, Image(g), sc.problem);
    CHECK(y.norm2() == 0.0);
  }

  SUBCASE("identity motion with a uniform coil and full mask is the DFT") {
    MotionProblem p = uniform_full_problem(g);
    const Image s = gaussian_blur(make_phantom(PhantomKind::disks, g), 0.8);
    const DeformationSequence id = DeformationSequence::identity(g, 1);
    const KSpaceData y = forward(id, s, p);
    ComplexField sc(g);
    for (size_t i = 0; i < s.v.size(); ++i) sc.v[i] = s.v[i];
    const ComplexField ref = fft::dft2_centered(sc);
    double err = 0, den = 0;
    for (size_t q = 0; q < y.y[0][0].size(); ++q) {
      err += std::norm(y.y[0][0][q] - ref.v[q]);
      den += std::norm(ref.v[q]);
    }
    CHECK(std::sqrt(err / den) < 1e-12);
  }
}

TEST_CASE("dense matrix oracle at N=8") {
  // N=8, 2 excitations, 2 coils, random motion: forward, adjoint and
  // residuum all agree with the explicit matrix build.
  auto sc = fixtures::make_scene(8, 2, 2, 4, 11, MotionClass::ffd);
  const oracle::DenseOperator dense = oracle::build_dense(sc.problem, sc.u_ref);

  Rng rng(77);
  Image s(sc.problem.grid);
  for (auto& v : s.v) v = rng.uniform();

  SUBCASE("forward") {
    const std::vector<Complex> fast = oracle::flatten(forward(sc.u_ref, s, sc.problem));
    const std::vector<Complex> ref = dense.apply(s.v);
    CHECK(oracle::rel_err(fast, ref) <= 1e-10);
  }

  SUBCASE("adjoint") {
    KSpaceData y = sc.problem.y;
    Rng noise(31);
    for (auto& exc : y.y) {
      for (auto& coil : exc) {
        for (auto& v : coil) v = Complex(noise.normal(), noise.normal());
      }
    }
    const std::vector<double> fast = adjoint(y, sc.u_ref, sc.problem);
    const std::vector<double> ref = dense.apply_adjoint(oracle::flatten(y));
    CHECK(oracle::rel_err(fast, ref) <= 1e-10);
  }

  SUBCASE("residuum") {
    const Residuum res = residuum(sc.u_ref, s, sc.problem);
    const std::vector<Complex> pred = dense.apply(s.v);
    const std::vector<Complex> data = oracle::flatten(sc.problem.y);
    double j_ref = 0;
    for (size_t q = 0; q < pred.size(); ++q) j_ref += std::norm(data[q] - pred[q]);
    CHECK(res.j == doctest::Approx(j_ref).epsilon(1e-10));
  }
}

TEST_CASE("adjoint inner-product identity at N=32") {
  for (const SamplingPath path : {SamplingPath::dfft, SamplingPath::nufft}) {
    auto sc = fixtures::make_scene(32, 2, 2, 8, 19, MotionClass::rigid, 0.0, path);
    Rng rng(51);
    Image x(sc.problem.grid);
    for (auto& v : x.v) v = rng.normal();
    KSpaceData y = sc.problem.y;
    for (auto& exc : y.y) {
      for (auto& coil : exc) {
        for (auto& v : coil) v = Complex(rng.normal(), rng.normal());
      }
    }
    const KSpaceData ax = forward(sc.u_ref, x, sc.problem);
    const std::vector<double> aty = adjoint(y, sc.u_ref, sc.problem);
    double lhs = 0;
    for (size_t i = 0; i < ax.y.size(); ++i) {
      for (size_t c = 0; c < ax.y[i].size(); ++c) {
        for (size_t q = 0; q < ax.y[i][c].size(); ++q) {
          lhs += std::real(std::conj(ax.y[i][c][q]) * y.y[i][c][q]);
        }
      }
    }
    const double rhs = dot(x.v, aty);
    CHECK(std::fabs(lhs - rhs) / std::sqrt(ax.norm2() * y.norm2()) <= 1e-10);
  }
}

TEST_CASE("residuum") {
  auto sc = fixtures::make_scene(16, 2, 2, 8, 23, MotionClass::rigid);

  SUBCASE("exact data gives zero residual") {
    const Residuum res = residuum(sc.u_ref, sc.s_ref, sc.problem);
    CHECK(res.j <= 1e-18 * sc.problem.y.norm2());
  }

  SUBCASE("wrong motion leaves a positive residual") {
    const DeformationSequence id = DeformationSequence::identity(sc.problem.grid, 2);
    const Residuum res = residuum(id, sc.s_ref, sc.problem);
    CHECK(res.j > 1e-6 * sc.problem.y.norm2());
  }

  SUBCASE("J decomposes over excitation blocks") {
    const DeformationSequence id = DeformationSequence::identity(sc.problem.grid, 2);
    const Residuum res = residuum(id, sc.s_ref, sc.problem);
    double sum = 0;
    for (int i = 0; i < sc.problem.n_exc; ++i) {
      sum += residual_excitation(id.fields[i], sc.s_ref, sc.problem, i);
    }
    CHECK(sum == doctest::Approx(res.j).epsilon(1e-12));
  }
}

TEST_CASE("adjoint point-spread peaks at the delta") {
  const Grid g = make_grid(16);
  auto sc = fixtures::make_scene(16, 1, 3, 16, 29, MotionClass::static_motion);
  Image delta(g);
  delta.at(7, 9) = 1.0;
  const DeformationSequence id = DeformationSequence::identity(g, 1);
  MotionProblem p = sc.problem;
  p.y = forward(id, delta, p);
  const std::vector<double> psf = adjoint(p.y, id, p);
  size_t argmax = 0;
  for (size_t i = 0; i < psf.size(); ++i) {
    if (psf[i] > psf[argmax]) argmax = i;
  }
  CHECK(argmax == static_cast<size_t>(7) * g.n + 9);
}

TEST_CASE("add_noise") {
  auto sc = fixtures::make_scene(64, 2, 4, 64, 37, MotionClass::rigid);
  const KSpaceData clean = simulate_samples(sc.u_ref, sc.s_ref, sc.problem);

  SUBCASE("level zero is the identity") {
    const KSpaceData noisy = add_noise(clean, 0.0, Rng(1));
    CHECK((clean - noisy).norm2() == 0.0);
  }

  SUBCASE("noise power matches the requested level") {
    size_t count = 0;
    for (const auto& exc : clean.y) {
      for (const auto& coil : exc) count += coil.size();
    }
    REQUIRE(count >= 10000);
    const double level = 0.05;
    const KSpaceData noisy = add_noise(clean, level, Rng(2));
    const double noise_power = (noisy - clean).norm2();
    const double signal_power = clean.norm2();
    CHECK(noise_power / signal_power ==
          doctest::Approx(level * level).epsilon(0.05));
  }

  SUBCASE("same seed reproduces the noise") {
    const KSpaceData a = add_noise(clean, 0.05, Rng(3));
    const KSpaceData b = add_noise(clean, 0.05, Rng(3));
    CHECK((a - b).norm2() == 0.0);
  }
}

TEST_CASE("forward is additive over excitations and coils") {
  auto sc = fixtures::make_scene(16, 3, 2, 6, 41, MotionClass::rigid);
  const KSpaceData y = forward(sc.u_ref, sc.s_ref, sc.problem);
  // zeroing one excitation of the data changes only that block's residual
  MotionProblem p = sc.problem;
  p.y = y;
  const double j_full = residuum(sc.u_ref, sc.s_ref, p).j;
  CHECK(j_full <= 1e-18 * y.norm2());
  for (auto& v : p.y.y[1][0]) v = Complex(0, 0);
  const double j0 = residual_excitation(sc.u_ref.fields[0], sc.s_ref, p, 0);
  const double j2 = residual_excitation(sc.u_ref.fields[2], sc.s_ref, p, 2);
  CHECK(j0 <= 1e-18 * y.norm2());
  CHECK(j2 <= 1e-18 * y.norm2());
}
