#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "config.hpp"
#include "correct.hpp"
#include "estimate.hpp"
#include "metrics.hpp"
#include "rigid_refine.hpp"
#include "snfl.hpp"

namespace moco {

/// In-memory dataset: ground truth plus raw (unweighted) k-space samples.
struct Dataset {
  ExperimentConfig cfg;
  Image s_ref;
  DeformationSequence u_ref;
  CoilMaps coils;
  KSpaceData y_clean;
  KSpaceData y_noisy;
};

Dataset simulate(const ExperimentConfig& cfg);
void save_dataset(const Dataset& ds, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

/// Operator-matched problem (noisy data when use_noisy and noise > 0).
MotionProblem problem_from_dataset(const Dataset& ds, bool use_noisy);

struct MetricRow {
  std::string method;
  double res = 0.0;
  ImageMetrics im;
  std::optional<double> def_rmse;
  std::optional<double> static_incompat;
};

struct PipelineResult {
  std::vector<Image> s_i;
  DeformationSequence u_est, u_cor;
  Image s_static, s_est, s_cor, s_tv;
  std::vector<RigidParams> rigid_params;
  std::vector<MetricRow> rows;
  std::map<std::string, double> stage_seconds;
};

/// Full run: per-excitation reconstructions, motion estimate, correction,
/// final reconstruction (+TV), evaluation. Artifacts and reports are written
/// into the run directory when one is given.
PipelineResult run_pipeline(const Dataset& ds, const std::filesystem::path* out_dir);

/// Support mask (reference image > small fraction of its peak).
Image support_mask(const Image& s_ref);

std::string format_report_csv(const std::string& run_name, const std::vector<MetricRow>& rows);
std::string format_report_text(const std::string& run_name, const std::vector<MetricRow>& rows);
std::string format_timings_csv(const std::string& run_name,
                               const std::map<std::string, double>& seconds);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

/// Flat serialization helpers for per-excitation/coil sample blocks.
snfl::ComplexTensor flatten_kspace(const KSpaceData& y);
KSpaceData unflatten_kspace(const snfl::ComplexTensor& t, const std::vector<size_t>& block_sizes,
                            int n_coils, double noise_level);

}  // namespace moco
