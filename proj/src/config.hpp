#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include "deform_synth.hpp"
#include "forward_op.hpp"
#include "phantom.hpp"

namespace moco {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Resolved experiment configuration. Parsed from a key = value file
/// (# comments); unknown keys are rejected and every value is validated
/// before any computation. The manifest written next to each run is this
/// struct serialized back, so reruns start from identical settings.
struct ExperimentConfig {
  std::string version = "0.1.0";
  std::string name = "run";

  int n = 64;
  int spokes = 64;
  int readout = 64;
  int n_exc = 8;
  int n_coils = 4;

  std::string phantom = "shepp_logan";
  double phantom_blur = 0.0;

  std::string motion = "rigid";
  double max_rot_deg = 10.0;
  double max_shift_frac = 0.03;
  double max_shear = 0.0;
  double ffd_amp_frac = 0.02;
  int ffd_nodes = 5;
  int spline_order = 3;

  double noise = 0.05;
  std::string sampling = "dfft";
  int nufft_width = 7;
  int dcf_iters = 10;

  uint64_t seed = 42;
  std::string out = "runs/run";
  int threads = 1;

  int cg_iters = 50;
  int sub_cg_iters = 10;
  double tol = 0.0;
  bool positivity = true;
  double tv_lambda = 0.0;
  int tv_iters = 100;

  int est_iters = 4;
  int est_pyramid = 4;
  int est_steps = 60;
  double est_smoothness = 0.02;
  int est_window = 5;

  int levels = 2;
  int cor_iters = 2;
  int cor_cg_iters = 10;
  int backtrack = 5;
  std::string projector = "spline";
  double projector_spacing = 8.0;
  bool baseline_rigid = false;

  MotionClass motion_class() const { return motion_class_from_string(motion); }
  SamplingPath sampling_path() const { return sampling_path_from_string(sampling); }
  PhantomKind phantom_kind() const { return phantom_kind_from_string(phantom); }
  double max_rot_rad() const;
  double max_shift_px() const { return max_shift_frac * n; }
  double ffd_amp_px() const { return ffd_amp_frac * n; }
  /// Output directory, honoring the MRMOCO_OUT_ROOT override for relative
  /// paths.
  std::filesystem::path out_dir() const;
};

ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig parse_config_file(const std::filesystem::path& path);
std::string serialize_config(const ExperimentConfig& cfg);
void validate(const ExperimentConfig& cfg);

}  // namespace moco
