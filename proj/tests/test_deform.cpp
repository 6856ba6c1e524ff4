#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "deform.hpp"
#include "deform_synth.hpp"
#include "phantom.hpp"
#include "rigid_fit.hpp"
#include "rng.hpp"

using namespace moco;

namespace {

Image random_smooth_image(Grid g, uint64_t seed) {
  Image im(g);
  Rng rng(seed);
  for (auto& v : im.v) v = rng.uniform();
  im = gaussian_blur(im, 1.2);
  return im;
}

DeformationField random_field(Grid g, uint64_t seed, double amp) {
  DeformationField f = DeformationField::identity(g);
  Rng rng(seed);
  for (auto& v : f.px) v += amp * rng.uniform(-1.0, 1.0);
  for (auto& v : f.py) v += amp * rng.uniform(-1.0, 1.0);
  return f;
}

}  // namespace

TEST_CASE("synth_rigid conventions") {
  const Grid g = make_grid(16);

  SUBCASE("zero parameters give the identity") {
    const DeformationField f = synth_rigid(0.0, 0.0, 0.0, g);
    const DeformationField id = DeformationField::identity(g);
    for (size_t p = 0; p < f.px.size(); ++p) {
      CHECK(f.px[p] == id.px[p]);
      CHECK(f.py[p] == id.py[p]);
    }
  }

  SUBCASE("quarter turn sends the point at (x,y) to (y,-x)") {
    // Pull-back target: R(-pi/2) x, so (1,0) lands on (0,-1).
    const DeformationField f = synth_rigid(3.141592653589793 / 2, 0.0, 0.0, g);
    const int j0 = 3, k0 = 12;
    const double x0 = g.x(k0), y0 = g.y(j0);
    CHECK(f.x_at(j0, k0) == doctest::Approx(y0).epsilon(1e-12));
    CHECK(f.y_at(j0, k0) == doctest::Approx(-x0).epsilon(1e-12));
  }

  SUBCASE("pure shift pulls back by the shift") {
    const DeformationField f = synth_rigid(0.0, 2.0, 0.0, g);
    for (int j = 0; j < g.n; ++j) {
      for (int k = 0; k < g.n; ++k) {
        CHECK(f.x_at(j, k) == doctest::Approx(g.x(k) - 2.0).epsilon(1e-12));
        CHECK(f.y_at(j, k) == doctest::Approx(g.y(j)).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("apply") {
  const Grid g = make_grid(16);
  const Image s = random_smooth_image(g, 1);

  SUBCASE("identity reproduces the image") {
    const Image out = apply(DeformationField::identity(g), s);
    for (size_t p = 0; p < s.v.size(); ++p) {
      CHECK(out.v[p] == doctest::Approx(s.v[p]).epsilon(1e-14));
    }
  }

  SUBCASE("integer shift of a constant image leaves a zero inflow band") {
    const Image ones = make_phantom(PhantomKind::constant, g);
    const Image out = apply(synth_rigid(0.0, 2.0, 0.0, g), ones);
    for (int j = 0; j < g.n; ++j) {
      CHECK(out.at(j, 0) == 0.0);
      CHECK(out.at(j, 1) == 0.0);
      for (int k = 2; k < g.n; ++k) CHECK(out.at(j, k) == doctest::Approx(1.0).epsilon(1e-14));
    }
  }

  SUBCASE("interior values of a constant image are preserved under any field") {
    const Image ones = make_phantom(PhantomKind::constant, g);
    const DeformationField f = random_field(g, 3, 1.5);
    const Image out = apply(f, ones);
    for (int j = 4; j < g.n - 4; ++j) {
      for (int k = 4; k < g.n - 4; ++k) {
        CHECK(out.at(j, k) == doctest::Approx(1.0).epsilon(1e-12));
      }
    }
  }

  SUBCASE("linear in the image") {
    const Image s2 = random_smooth_image(g, 7);
    const DeformationField f = random_field(g, 4, 1.0);
    Image combo(g);
    for (size_t p = 0; p < s.v.size(); ++p) combo.v[p] = 2.0 * s.v[p] + 0.5 * s2.v[p];
    const Image a = apply(f, combo);
    const Image b1 = apply(f, s);
    const Image b2 = apply(f, s2);
    for (size_t p = 0; p < a.v.size(); ++p) {
      CHECK(a.v[p] == doctest::Approx(2.0 * b1.v[p] + 0.5 * b2.v[p]).epsilon(1e-12));
    }
  }
}

TEST_CASE("compose") {
  const Grid g = make_grid(32);

  SUBCASE("identity laws") {
    const DeformationField f = random_field(g, 5, 1.0);
    const DeformationField id = DeformationField::identity(g);
    const DeformationField a = compose(id, f);
    const DeformationField b = compose(f, id);
    for (size_t p = 0; p < f.px.size(); ++p) {
      CHECK(a.px[p] == doctest::Approx(f.px[p]).epsilon(1e-12));
      // compose(f, id) reproduces targets that stay inside the FOV; outside
      // ones clamp to the boundary by contract.
      if (std::fabs(f.px[p]) <= g.half() && std::fabs(f.py[p]) <= g.half()) {
        CHECK(b.px[p] == doctest::Approx(f.px[p]).epsilon(1e-12));
        CHECK(b.py[p] == doctest::Approx(f.py[p]).epsilon(1e-12));
      }
    }
  }

  SUBCASE("translations add") {
    const DeformationField fa = synth_rigid(0.0, 1.25, -0.5, g);
    const DeformationField fb = synth_rigid(0.0, 0.5, 2.0, g);
    const DeformationField c = compose(fa, fb);
    for (int j = 6; j < g.n - 6; ++j) {
      for (int k = 6; k < g.n - 6; ++k) {
        CHECK(c.x_at(j, k) == doctest::Approx(g.x(k) - 1.75).epsilon(1e-12));
        CHECK(c.y_at(j, k) == doctest::Approx(g.y(j) - 1.5).epsilon(1e-12));
      }
    }
  }

  SUBCASE("rotations compose in the interior") {
    const double t1 = 0.15, t2 = -0.25;
    const DeformationField c = compose(synth_rigid(t1, 0, 0, g), synth_rigid(t2, 0, 0, g));
    const DeformationField ref = synth_rigid(t1 + t2, 0, 0, g);
    for (int j = 8; j < g.n - 8; ++j) {
      for (int k = 8; k < g.n - 8; ++k) {
        CHECK(std::fabs(c.x_at(j, k) - ref.x_at(j, k)) < 1e-6);
        CHECK(std::fabs(c.y_at(j, k) - ref.y_at(j, k)) < 1e-6);
      }
    }
  }
}

TEST_CASE("du_dp") {
  const Grid g = make_grid(16);

  SUBCASE("constant image has zero sensitivity") {
    const Image ones = make_phantom(PhantomKind::constant, g);
    const auto d = du_dp(random_field(g, 9, 1.0), ones, Axis::x);
    for (int j = 2; j < g.n - 2; ++j) {
      for (int k = 2; k < g.n - 2; ++k) {
        CHECK(std::fabs(d[static_cast<size_t>(j) * g.n + k]) < 1e-13);
      }
    }
  }

  SUBCASE("x ramp has unit x derivative in the interior") {
    Image ramp(g);
    for (int j = 0; j < g.n; ++j) {
      for (int k = 0; k < g.n; ++k) ramp.at(j, k) = g.x(k) + 8.0;  // keep nonnegative
    }
    const DeformationField f = random_field(g, 10, 0.9);
    const auto d = du_dp(f, ramp, Axis::x);
    for (int j = 3; j < g.n - 3; ++j) {
      for (int k = 3; k < g.n - 3; ++k) {
        CHECK(d[static_cast<size_t>(j) * g.n + k] == doctest::Approx(1.0).epsilon(1e-12));
      }
    }
  }

  SUBCASE("matches central differences of the interpolant at cell-interior points") {
    const Image s = random_smooth_image(g, 11);
    DeformationField f = random_field(g, 12, 0.8);
    // Nudge coordinates off cell boundaries so +-h stays inside one cell.
    auto nudge = [](std::vector<double>& plane) {
      for (auto& v : plane) {
        const double frac = v - std::floor(v);
        if (frac < 0.1) v += 0.15;
        if (frac > 0.9) v -= 0.15;
      }
    };
    nudge(f.px);
    nudge(f.py);
    const double h = 1e-3;
    const auto dx = du_dp(f, s, Axis::x);
    const auto dy = du_dp(f, s, Axis::y);
    for (int j = 2; j < g.n - 2; ++j) {
      for (int k = 2; k < g.n - 2; ++k) {
        const size_t p = static_cast<size_t>(j) * g.n + k;
        const double fd_x =
            (sample_bilinear(s, f.px[p] + h, f.py[p]) - sample_bilinear(s, f.px[p] - h, f.py[p])) /
            (2 * h);
        const double fd_y =
            (sample_bilinear(s, f.px[p], f.py[p] + h) - sample_bilinear(s, f.px[p], f.py[p] - h)) /
            (2 * h);
        if (std::fabs(dx[p]) > 1e-8) CHECK(std::fabs(dx[p] - fd_x) / std::fabs(dx[p]) < 1e-6);
        if (std::fabs(dy[p]) > 1e-8) CHECK(std::fabs(dy[p] - fd_y) / std::fabs(dy[p]) < 1e-6);
      }
    }
  }

  SUBCASE("perturbing one pixel's parameter changes exactly that output pixel") {
    const Image s = random_smooth_image(g, 13);
    DeformationField f = random_field(g, 14, 0.7);
    const Image base = apply(f, s);
    f.x_at(5, 9) += 0.2;
    const Image pert = apply(f, s);
    for (int j = 0; j < g.n; ++j) {
      for (int k = 0; k < g.n; ++k) {
        if (j == 5 && k == 9) continue;
        CHECK(pert.at(j, k) == base.at(j, k));
      }
    }
    CHECK(pert.at(5, 9) != base.at(5, 9));
  }
}

TEST_CASE("synth_ffd") {
  const Grid g = make_grid(32);

  SUBCASE("zero parameters give the identity") {
    for (int order : {1, 3}) {
      const FfdSpec spec = FfdSpec::zero(4, order, 4);
      const DeformationField f = synth_ffd(spec, 2, g);
      const DeformationField id = DeformationField::identity(g);
      for (size_t p = 0; p < f.px.size(); ++p) {
        CHECK(f.px[p] == doctest::Approx(id.px[p]).epsilon(1e-12));
        CHECK(f.py[p] == doctest::Approx(id.py[p]).epsilon(1e-12));
      }
    }
  }

  SUBCASE("shared node parameters reduce to the global affine map") {
    // tau = 1 at the last excitation makes the first temporal basis equal 1.
    for (int order : {1, 3}) {
      FfdSpec spec = FfdSpec::zero(5, order, 2);
      // Mild contraction so boundary support vectors stay inside the FOV.
      const double g00 = -0.03, g01 = 0.005, g10 = -0.004, g11 = -0.02, bx = 0.2, by = -0.1;
      for (size_t node = 0; node < 25; ++node) {
        spec.gamma_coef[node * FfdSpec::kOrders + 0] = {g00, g01, g10, g11};
        spec.b_coef[node * FfdSpec::kOrders + 0] = {bx, by};
      }
      const DeformationField f = synth_ffd(spec, 1, g);
      double max_diff = 0;
      for (int j = 0; j < g.n; ++j) {
        for (int k = 0; k < g.n; ++k) {
          const double x = g.x(k), y = g.y(j);
          const double ex = (1 + g00) * x + g01 * y + bx;
          const double ey = g10 * x + (1 + g11) * y + by;
          max_diff = std::max(max_diff, std::fabs(f.x_at(j, k) - ex));
          max_diff = std::max(max_diff, std::fabs(f.y_at(j, k) - ey));
        }
      }
      CHECK(max_diff <= 1e-12);
    }
  }

  SUBCASE("two-node order-1 field equals direct bilinear interpolation") {
    FfdSpec spec = FfdSpec::zero(2, 1, 2);
    // Displace the (1,1) corner node at tau = 1.
    spec.b_coef[3 * FfdSpec::kOrders + 0] = {-2.0, -1.5};
    const DeformationField f = synth_ffd(spec, 1, g);
    const double half = g.half();
    auto interp = [&](double x, double y, int comp) {
      const double tx = (x + half) / g.n;
      const double ty = (y + half) / g.n;
      double vx[2][2] = {{-half, half}, {-half, half}};
      double vy[2][2] = {{-half, -half}, {half, half}};
      vx[1][1] += -2.0;
      vy[1][1] += -1.5;
      const double ix = (1 - ty) * ((1 - tx) * vx[0][0] + tx * vx[0][1]) +
                        ty * ((1 - tx) * vx[1][0] + tx * vx[1][1]);
      const double iy = (1 - ty) * ((1 - tx) * vy[0][0] + tx * vy[0][1]) +
                        ty * ((1 - tx) * vy[1][0] + tx * vy[1][1]);
      return comp == 0 ? ix : iy;
    };
    for (int j = 0; j < g.n; j += 3) {
      for (int k = 0; k < g.n; k += 3) {
        CHECK(f.x_at(j, k) == doctest::Approx(interp(g.x(k), g.y(j), 0)).epsilon(1e-12));
        CHECK(f.y_at(j, k) == doctest::Approx(interp(g.x(k), g.y(j), 1)).epsilon(1e-12));
      }
    }
  }

  SUBCASE("support vectors outside the FOV are rejected") {
    FfdSpec spec = FfdSpec::zero(3, 1, 2);
    spec.b_coef[0 * FfdSpec::kOrders + 0] = {-50.0, 0.0};
    CHECK_THROWS_AS(synth_ffd(spec, 1, g), std::invalid_argument);
  }
}

TEST_CASE("constrain_convex") {
  const Grid g = make_grid(32);
  const ConvexRegion region{0.0, 0.0, 10.0, 8.0};

  SUBCASE("identity input stays identity") {
    const DeformationField out = constrain_convex(DeformationField::identity(g), region);
    const DeformationField id = DeformationField::identity(g);
    for (size_t p = 0; p < out.px.size(); ++p) {
      CHECK(out.px[p] == doctest::Approx(id.px[p]).epsilon(1e-12));
      CHECK(out.py[p] == doctest::Approx(id.py[p]).epsilon(1e-12));
    }
  }

  SUBCASE("pixels outside the region are exactly identity") {
    const DeformationField f = random_field(g, 21, 1.5);
    const DeformationField out = constrain_convex(f, region);
    for (int j = 0; j < g.n; ++j) {
      for (int k = 0; k < g.n; ++k) {
        if (region.contains(g.x(k), g.y(j))) continue;
        CHECK(out.x_at(j, k) == g.x(k));
        CHECK(out.y_at(j, k) == g.y(j));
      }
    }
  }

  SUBCASE("no normal flow through the boundary") {
    const DeformationField f = random_field(g, 22, 1.5);
    for (int t = 0; t < 200; ++t) {
      const double r2 = -7.9 + 15.8 * t / 199.0;
      double r1b, r1t;
      if (!region.chord(r2, &r1b, &r1t) || r1t - r1b < 1e-9) continue;
      for (const double r1 : {r1b, r1t}) {
        double ux, uy;
        constrain_point(f, region, r1, r2, &ux, &uy);
        double nx, ny;
        region.normal(r1, r2, &nx, &ny);
        CHECK(std::fabs(nx * (ux - r1) + ny * (uy - r2)) < 1e-6);
      }
    }
  }

  SUBCASE("interior targets stay inside the region") {
    const DeformationField f = random_field(g, 23, 3.0);
    const DeformationField out = constrain_convex(f, region);
    for (int j = 0; j < g.n; ++j) {
      for (int k = 0; k < g.n; ++k) {
        if (!region.contains(g.x(k), g.y(j))) continue;
        const double qx = (out.x_at(j, k) - region.cx) / region.a;
        const double qy = (out.y_at(j, k) - region.cy) / region.b;
        CHECK(qx * qx + qy * qy <= 1.0 + 1e-12);
      }
    }
  }
}

TEST_CASE("synth_sequence") {
  const Grid g = make_grid(32);

  SUBCASE("zero amplitude gives identities for every class") {
    for (auto kind : {MotionClass::static_motion, MotionClass::rigid, MotionClass::affine,
                      MotionClass::ffd, MotionClass::ffd_convex}) {
      MotionConfig cfg;
      cfg.kind = kind;
      cfg.n_exc = 4;
      const DeformationSequence u = synth_sequence(cfg, g, Rng(7));
      REQUIRE(u.size() == 4);
      const DeformationField id = DeformationField::identity(g);
      for (const auto& f : u.fields) {
        for (size_t p = 0; p < f.px.size(); ++p) {
          CHECK(f.px[p] == doctest::Approx(id.px[p]).epsilon(1e-9));
          CHECK(f.py[p] == doctest::Approx(id.py[p]).epsilon(1e-9));
        }
      }
    }
  }

  SUBCASE("rigid sequences respect the amplitude bounds") {
    MotionConfig cfg;
    cfg.kind = MotionClass::rigid;
    cfg.n_exc = 8;
    cfg.max_rot_rad = 10.0 * 3.141592653589793 / 180.0;
    cfg.max_shift_px = 0.03 * g.n;
    const DeformationSequence u = synth_sequence(cfg, g, Rng(42));
    for (const auto& f : u.fields) {
      const RigidParams p = fit_rigid(f);
      CHECK(std::fabs(p.theta) <= cfg.max_rot_rad + 1e-9);
      CHECK(std::fabs(p.shift_x) <= cfg.max_shift_px + 1e-9);
      CHECK(std::fabs(p.shift_y) <= cfg.max_shift_px + 1e-9);
    }
  }

  SUBCASE("same seed reproduces the sequence; first field is identity") {
    MotionConfig cfg;
    cfg.kind = MotionClass::ffd_convex;
    cfg.n_exc = 6;
    cfg.max_shift_px = 1.0;
    cfg.ffd_amp_px = 2.0;
    const DeformationSequence a = synth_sequence(cfg, g, Rng(5));
    const DeformationSequence b = synth_sequence(cfg, g, Rng(5));
    REQUIRE(a.size() == b.size());
    for (int i = 0; i < a.size(); ++i) {
      CHECK(a.fields[i].px == b.fields[i].px);
      CHECK(a.fields[i].py == b.fields[i].py);
    }
    const DeformationField id = DeformationField::identity(g);
    CHECK(a.fields[0].px == id.px);
    CHECK(a.fields[0].py == id.py);
  }

  SUBCASE("excessive amplitudes are rejected") {
    MotionConfig cfg;
    cfg.kind = MotionClass::rigid;
    cfg.n_exc = 4;
    cfg.max_shift_px = 0.5 * g.n;
    CHECK_THROWS_AS(synth_sequence(cfg, g, Rng(1)), std::invalid_argument);
  }
}

TEST_CASE("rigid fit recovers exact parameters") {
  const Grid g = make_grid(32);
  const RigidParams truth{0.2, 1.5, -2.25};
  const RigidParams fit = fit_rigid(rigid_field(truth, g));
  CHECK(fit.theta == doctest::Approx(truth.theta).epsilon(1e-10));
  CHECK(fit.shift_x == doctest::Approx(truth.shift_x).epsilon(1e-10));
  CHECK(fit.shift_y == doctest::Approx(truth.shift_y).epsilon(1e-10));
}
