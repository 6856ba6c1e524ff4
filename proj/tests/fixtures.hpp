#pragma once

// Shared test fixtures: small seeded problems with known ground truth.

#include "cg_sense.hpp"
#include "deform_synth.hpp"
#include "forward_op.hpp"
#include "phantom.hpp"
#include "rng.hpp"

namespace fixtures {

struct Scene {
  moco::Image s_ref;
  moco::DeformationSequence u_ref;
  moco::MotionProblem problem;  // with y = forward(u_ref, s_ref) (+ noise)
};

inline Scene make_scene(int n, int n_exc, int n_coils, int spokes, uint64_t seed,
                        moco::MotionClass kind = moco::MotionClass::rigid,
                        double noise = 0.0,
                        moco::SamplingPath path = moco::SamplingPath::dfft,
                        double rot_deg = 5.0, double shift_frac = 0.02) {
  using namespace moco;
  Scene sc;
  const Grid g = make_grid(n);
  const Rng rng(seed);
  sc.s_ref = gaussian_blur(make_phantom(PhantomKind::disks, g), 1.0);
  MotionConfig mc;
  mc.kind = kind;
  mc.n_exc = n_exc;
  mc.max_rot_rad = rot_deg * 3.141592653589793 / 180.0;
  mc.max_shift_px = shift_frac * n;
  mc.ffd_amp_px = 0.02 * n;
  sc.u_ref = synth_sequence(mc, g, rng.substream(1));
  const CoilMaps coils = synth_coils(n_coils, g, rng.substream(2));
  sc.problem = make_problem(g, path, spokes, n, n_exc, coils);
  KSpaceData raw = simulate_samples(sc.u_ref, sc.s_ref, sc.problem);
  if (noise > 0) raw = add_noise(raw, noise, rng.substream(3));
  sc.problem.y = apply_dcf_weights(sc.problem, raw);
  sc.problem.y.noise_level = noise;
  return sc;
}

}  // namespace fixtures
