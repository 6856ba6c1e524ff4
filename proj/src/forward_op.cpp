#include "forward_op.hpp"

#include <cmath>
#include <stdexcept>

#include "fft.hpp"
#include "parallel.hpp"

namespace moco {

SamplingPath sampling_path_from_string(const std::string& s) {
  if (s == "dfft") return SamplingPath::dfft;
  if (s == "nufft") return SamplingPath::nufft;
  throw std::invalid_argument("unknown sampling path: " + s);
}

std::string to_string(SamplingPath p) { return p == SamplingPath::dfft ? "dfft" : "nufft"; }

double KSpaceData::norm2() const {
  double s = 0;
  for (const auto& exc : y) {
    for (const auto& coil : exc) {
      for (const Complex& v : coil) s += std::norm(v);
    }
  }
  return s;
}

KSpaceData operator-(const KSpaceData& a, const KSpaceData& b) {
  KSpaceData out = a;
  for (size_t i = 0; i < out.y.size(); ++i) {
    for (size_t c = 0; c < out.y[i].size(); ++c) {
      for (size_t q = 0; q < out.y[i][c].size(); ++q) out.y[i][c][q] -= b.y[i][c][q];
    }
  }
  return out;
}

double MotionProblem::kappa(int exc) const {
  const double n2 = static_cast<double>(grid.n) * grid.n;
  if (path == SamplingPath::dfft) return masks.m[exc] / n2;
  double s = 0;
  for (double d : dcf[exc]) s += d;
  return s / n2;
}

MotionProblem make_problem(Grid grid, SamplingPath path, int n_spokes, int n_readout, int n_exc,
                           const CoilMaps& coils, int dcf_iters, int nufft_width) {
  MotionProblem p;
  p.grid = grid;
  p.path = path;
  p.n_exc = n_exc;
  p.n_coils = coils.n_coils;
  p.coils = coils;
  p.traj = radial_trajectory(n_spokes, n_readout, grid);
  p.masks = partition_excitations(p.traj, n_exc, grid);
  if (path == SamplingPath::nufft) {
    p.dcf.resize(n_exc);
    p.nufft_ops.resize(n_exc);
    for (int i = 0; i < n_exc; ++i) {
      p.dcf[i] = pipe_dcf_samples(p.traj, p.masks.sample_ids[i], dcf_iters, grid);
      std::vector<double> kx, ky;
      kx.reserve(p.masks.sample_ids[i].size());
      ky.reserve(p.masks.sample_ids[i].size());
      for (int sid : p.masks.sample_ids[i]) {
        kx.push_back(p.traj.kx[sid]);
        ky.push_back(p.traj.ky[sid]);
      }
      p.nufft_ops[i] = std::make_shared<Nufft>(grid, std::move(kx), std::move(ky), nufft_width);
    }
  }
  return p;
}

MotionProblem restrict_to_excitation(const MotionProblem& problem, int exc) {
  if (exc < 0 || exc >= problem.n_exc) throw std::invalid_argument("excitation out of range");
  MotionProblem p;
  p.grid = problem.grid;
  p.path = problem.path;
  p.n_exc = 1;
  p.n_coils = problem.n_coils;
  p.coils = problem.coils;
  p.traj = problem.traj;
  p.masks.n_exc = 1;
  p.masks.spokes = {problem.masks.spokes[exc]};
  p.masks.sample_ids = {problem.masks.sample_ids[exc]};
  p.masks.grid_points = {problem.masks.grid_points[exc]};
  p.masks.m = {problem.masks.m[exc]};
  if (problem.path == SamplingPath::nufft) {
    p.dcf = {problem.dcf[exc]};
    p.nufft_ops = {problem.nufft_ops[exc]};
  }
  if (!problem.y.y.empty()) {
    p.y.y = {problem.y.y[exc]};
    p.y.noise_level = problem.y.noise_level;
  }
  p.threads = problem.threads;
  return p;
}

namespace {

void check_dims(const DeformationSequence& u, const Image& s, const MotionProblem& problem) {
  if (!(s.grid == problem.grid)) throw std::invalid_argument("image grid mismatch");
  if (u.size() != problem.n_exc) throw std::invalid_argument("deformation count mismatch");
  for (const auto& f : u.fields) {
    if (!(f.grid == problem.grid)) throw std::invalid_argument("deformation grid mismatch");
  }
}

// One excitation, one coil of the forward model.
std::vector<Complex> forward_block(const Image& warped, const MotionProblem& problem, int exc,
                                   int coil) {
  const Grid& g = problem.grid;
  const ComplexField& smap = problem.coils.maps[coil];
  if (problem.path == SamplingPath::dfft) {
    ComplexField cw(g);
    for (size_t i = 0; i < cw.v.size(); ++i) cw.v[i] = smap.v[i] * warped.v[i];
    fft::dft2_centered(cw.v, g.n);
    const auto& pts = problem.masks.grid_points[exc];
    std::vector<Complex> out(pts.size());
    for (size_t q = 0; q < pts.size(); ++q) out[q] = cw.v[pts[q]];
    return out;
  }
  ComplexField cw(g);
  for (size_t i = 0; i < cw.v.size(); ++i) cw.v[i] = smap.v[i] * warped.v[i];
  std::vector<Complex> out = problem.nufft_ops[exc]->forward(cw);
  const auto& d = problem.dcf[exc];
  for (size_t q = 0; q < out.size(); ++q) out[q] *= std::sqrt(d[q]);
  return out;
}

}  // namespace

KSpaceData forward(const DeformationSequence& u, const Image& s, const MotionProblem& problem) {
  check_dims(u, s, problem);
  KSpaceData out;
  out.y.resize(problem.n_exc);
  parallel_for(problem.n_exc, problem.threads, [&](int i) {
    const Image warped = apply(u.fields[i], s);
    out.y[i].resize(problem.n_coils);
    for (int c = 0; c < problem.n_coils; ++c) {
      out.y[i][c] = forward_block(warped, problem, i, c);
    }
  });
  return out;
}

std::vector<double> adjoint(const KSpaceData& y, const DeformationSequence& u,
                            const MotionProblem& problem) {
  if (static_cast<int>(y.y.size()) != problem.n_exc) {
    throw std::invalid_argument("adjoint: excitation count mismatch");
  }
  const Grid& g = problem.grid;
  std::vector<std::vector<double>> partial(problem.n_exc);
  parallel_for(problem.n_exc, problem.threads, [&](int i) {
    // Coil-summed backprojection Re(sum_c S_c^* F^* A_i^* y_i^c) ...
    std::vector<double> real_part(g.pixels(), 0.0);
    for (int c = 0; c < problem.n_coils; ++c) {
      ComplexField back(g);
      if (problem.path == SamplingPath::dfft) {
        const auto& pts = problem.masks.grid_points[i];
        if (y.y[i][c].size() != pts.size()) {
          throw std::invalid_argument("adjoint: sample count mismatch");
        }
        for (size_t q = 0; q < pts.size(); ++q) back.v[pts[q]] = y.y[i][c][q];
        fft::idft2_centered(back.v, g.n);
      } else {
        std::vector<Complex> wsamp = y.y[i][c];
        const auto& d = problem.dcf[i];
        for (size_t q = 0; q < wsamp.size(); ++q) wsamp[q] *= std::sqrt(d[q]);
        back = problem.nufft_ops[i]->adjoint(wsamp);
      }
      const ComplexField& smap = problem.coils.maps[c];
      for (size_t px = 0; px < real_part.size(); ++px) {
        real_part[px] += std::real(std::conj(smap.v[px]) * back.v[px]);
      }
    }
    // ... then the transpose of the bilinear warp.
    std::vector<double> acc(g.pixels(), 0.0);
    const DeformationField& f = u.fields[i];
    for (int j = 0; j < g.n; ++j) {
      for (int k = 0; k < g.n; ++k) {
        const size_t px = static_cast<size_t>(j) * g.n + k;
        scatter_bilinear(acc, g, f.px[px], f.py[px], real_part[px]);
      }
    }
    partial[i] = std::move(acc);
  });
  std::vector<double> out(g.pixels(), 0.0);
  for (int i = 0; i < problem.n_exc; ++i) {
    for (size_t px = 0; px < out.size(); ++px) out[px] += partial[i][px];
  }
  return out;
}

Residuum residuum(const DeformationSequence& u, const Image& s, const MotionProblem& problem) {
  if (problem.y.y.empty()) throw std::invalid_argument("residuum: problem carries no data");
  Residuum res;
  res.r = problem.y - forward(u, s, problem);
  res.j = res.r.norm2();
  return res;
}

double residual_excitation(const DeformationField& u_i, const Image& s,
                           const MotionProblem& problem, int exc) {
  const Image warped = apply(u_i, s);
  double j = 0;
  for (int c = 0; c < problem.n_coils; ++c) {
    const std::vector<Complex> pred = forward_block(warped, problem, exc, c);
    const auto& data = problem.y.y[exc][c];
    for (size_t q = 0; q < pred.size(); ++q) j += std::norm(data[q] - pred[q]);
  }
  return j;
}

KSpaceData simulate_samples(const DeformationSequence& u, const Image& s,
                            const MotionProblem& problem) {
  if (problem.path == SamplingPath::dfft) return forward(u, s, problem);
  check_dims(u, s, problem);
  KSpaceData out;
  out.y.resize(problem.n_exc);
  parallel_for(problem.n_exc, problem.threads, [&](int i) {
    const Image warped = apply(u.fields[i], s);
    out.y[i].resize(problem.n_coils);
    for (int c = 0; c < problem.n_coils; ++c) {
      ComplexField cw(problem.grid);
      for (size_t px = 0; px < cw.v.size(); ++px) {
        cw.v[px] = problem.coils.maps[c].v[px] * warped.v[px];
      }
      out.y[i][c] = problem.nufft_ops[i]->forward(cw);
    }
  });
  return out;
}

KSpaceData apply_dcf_weights(const MotionProblem& problem, const KSpaceData& raw) {
  if (problem.path == SamplingPath::dfft) return raw;
  KSpaceData out = raw;
  for (int i = 0; i < problem.n_exc; ++i) {
    const auto& d = problem.dcf[i];
    for (auto& coil : out.y[i]) {
      for (size_t q = 0; q < coil.size(); ++q) coil[q] *= std::sqrt(d[q]);
    }
  }
  return out;
}

KSpaceData add_noise(const KSpaceData& y, double level, const Rng& rng) {
  if (level < 0) throw std::invalid_argument("noise level must be >= 0");
  KSpaceData out = y;
  out.noise_level = level;
  if (level == 0) return out;
  double power = 0;
  size_t count = 0;
  for (const auto& exc : y.y) {
    for (const auto& coil : exc) {
      for (const Complex& v : coil) power += std::norm(v);
      count += coil.size();
    }
  }
  if (count == 0) return out;
  const double rms = std::sqrt(power / count);
  const double sigma = level * rms / std::sqrt(2.0);
  Rng noise_rng = rng.substream(0xadd0);
  for (auto& exc : out.y) {
    for (auto& coil : exc) {
      for (Complex& v : coil) {
        v += Complex(sigma * noise_rng.normal(), sigma * noise_rng.normal());
      }
    }
  }
  return out;
}

}  // namespace moco
