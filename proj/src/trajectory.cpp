#include "trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace moco {

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;

bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

std::vector<int> bit_reversed_order(int n) {
  int bits = 0;
  while ((1 << bits) < n) ++bits;
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) {
    int r = 0;
    for (int b = 0; b < bits; ++b) r |= ((i >> b) & 1) << (bits - 1 - b);
    order[i] = r;
  }
  return order;
}

// Greedy coverage ordering on the pi-periodic circle of spoke angles: each
// step acquires the spoke farthest from everything acquired so far.
std::vector<int> greedy_gap_order(int n) {
  std::vector<int> order;
  order.reserve(n);
  std::vector<bool> taken(n, false);
  order.push_back(0);
  taken[0] = true;
  auto dist = [n](int a, int b) {
    const double d = std::fabs(a - b) * kPi / n;
    return std::min(d, kPi - d);
  };
  for (int step = 1; step < n; ++step) {
    int best = -1;
    double best_gap = -1.0;
    for (int cand = 0; cand < n; ++cand) {
      if (taken[cand]) continue;
      double gap = kPi;
      for (int got : order) gap = std::min(gap, dist(cand, got));
      if (gap > best_gap + 1e-15) {
        best_gap = gap;
        best = cand;
      }
    }
    order.push_back(best);
    taken[best] = true;
  }
  return order;
}

}  // namespace

std::vector<int> van_der_corput_order(int n_spokes) {
  if (n_spokes < 1) throw std::invalid_argument("need at least one spoke");
  if (is_pow2(n_spokes)) return bit_reversed_order(n_spokes);
  return greedy_gap_order(n_spokes);
}

Trajectory radial_trajectory(int n_spokes, int n_readout, Grid grid) {
  if (n_spokes < 1) throw std::invalid_argument("need at least one spoke");
  if (n_readout < 2) throw std::invalid_argument("need at least two readout samples");
  Trajectory t;
  t.n_spokes = n_spokes;
  t.n_readout = n_readout;
  t.angles.resize(n_spokes);
  t.kx.resize(static_cast<size_t>(n_spokes) * n_readout);
  t.ky.resize(t.kx.size());
  const double half = grid.half();
  for (int s = 0; s < n_spokes; ++s) {
    const double angle = s * kPi / n_spokes;
    t.angles[s] = angle;
    const double ca = std::cos(angle), sa = std::sin(angle);
    for (int r = 0; r < n_readout; ++r) {
      const double radius = -half + r * static_cast<double>(grid.n) / n_readout;
      const size_t idx = static_cast<size_t>(s) * n_readout + r;
      t.kx[idx] = radius * ca;
      t.ky[idx] = radius * sa;
    }
  }
  t.order = van_der_corput_order(n_spokes);
  return t;
}

int nearest_grid_index(double kx, double ky, Grid grid) {
  auto round_away = [](double v) {
    return v >= 0 ? std::floor(v + 0.5) : std::ceil(v - 0.5);
  };
  const int half = grid.n / 2;
  int u = static_cast<int>(round_away(kx));
  int v = static_cast<int>(round_away(ky));
  u = std::clamp(u, -half, half - 1);
  v = std::clamp(v, -half, half - 1);
  return (v + half) * grid.n + (u + half);
}

ExcitationMasks partition_excitations(const Trajectory& traj, int n_exc, Grid grid) {
  if (n_exc < 1) throw std::invalid_argument("n_exc must be >= 1");
  if (traj.n_spokes % n_exc != 0) {
    throw std::invalid_argument("spoke count must be divisible by the excitation count");
  }
  const int per_exc = traj.n_spokes / n_exc;
  ExcitationMasks masks;
  masks.n_exc = n_exc;
  masks.spokes.resize(n_exc);
  masks.sample_ids.resize(n_exc);
  masks.grid_points.resize(n_exc);
  masks.m.resize(n_exc);
  for (int i = 0; i < n_exc; ++i) {
    std::set<int> pts;
    for (int b = 0; b < per_exc; ++b) {
      const int spoke = traj.order[i * per_exc + b];
      masks.spokes[i].push_back(spoke);
      for (int r = 0; r < traj.n_readout; ++r) {
        const int sid = spoke * traj.n_readout + r;
        masks.sample_ids[i].push_back(sid);
        pts.insert(nearest_grid_index(traj.kx[sid], traj.ky[sid], grid));
      }
    }
    masks.grid_points[i].assign(pts.begin(), pts.end());
    masks.m[i] = static_cast<int>(masks.grid_points[i].size());
  }
  return masks;
}

}  // namespace moco
