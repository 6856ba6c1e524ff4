#pragma once

#include <vector>

#include "deform.hpp"

namespace moco {

struct EstimateConfig {
  int n_iter = 4;            // outer refine rounds
  int pyramid_levels = 4;    // refiner multiresolution depth
  double smooth_sigma = 1.0; // pyramid prefilter
  int steps_per_level = 60;
  double smoothness = 0.02;  // weight of |grad d|^2 inside the refiner
  double field_sigma = 1.0;  // per-step field diffusion at smoothness 0.02
  int temporal_window = 5;   // local quadratic regression window
  int threads = 1;
};

/// Produces an additive update to a deformation's parameter planes from the
/// current warp of the reference image and the target image. A learned
/// implementation can be dropped in behind this interface.
class Refiner {
 public:
  virtual ~Refiner() = default;
  virtual void refine(const Image& warped, const Image& target, std::vector<double>* dx,
                      std::vector<double>* dy) const = 0;
};

/// Multiresolution SSD registration: Gaussian pyramid, per-level
/// preconditioned gradient steps on the per-pixel displacement with a
/// smoothness penalty, coarse-to-fine prolongation.
class ClassicalRefiner : public Refiner {
 public:
  explicit ClassicalRefiner(const EstimateConfig& cfg) : cfg_(cfg) {}
  void refine(const Image& warped, const Image& target, std::vector<double>* dx,
              std::vector<double>* dy) const override;

 private:
  EstimateConfig cfg_;
};

/// First motion estimate from the per-excitation reconstructions: iterative
/// per-excitation refinement against the reference state plus a temporal
/// consistency pass; the first excitation stays pinned to the identity.
/// iter_mean_update, when given, records the mean |update| per outer round.
DeformationSequence estimate_motion(const std::vector<Image>& s_list, const EstimateConfig& cfg,
                                    const Refiner& refiner,
                                    std::vector<double>* iter_mean_update = nullptr);

/// Local quadratic regression over the excitation index, applied per pixel
/// and axis (no-op for windows narrower than 5).
void smooth_temporal(DeformationSequence& u, int window);

}  // namespace moco
