#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "minaf/geometry/probe.hpp"
#include "minaf/training/train.hpp"

namespace minaf::training {

enum class Axis { DataFraction, ProbeRays, MeshNoise, Ablation };
std::string to_string(Axis a);
Axis axis_from_string(const std::string& s);
/// Default sweep values for an axis.
std::vector<std::string> default_axis_values(Axis a);

struct ExperimentConfig {
  Axis axis = Axis::DataFraction;
  std::vector<std::string> values;  // empty = default_axis_values(axis)
  TrainConfig train;
  /// Probe settings for the probe_rays and mesh_noise axes (rays are
  /// overridden by the axis value there).
  geometry::ProbeConfig probe;
  std::uint64_t noise_seed = 7;
  std::vector<ReconstructionMode> modes{ReconstructionMode::GTP, ReconstructionMode::PreP};
  sim::Split split = sim::Split::Test;
};

/// CSV columns, in order.
inline constexpr const char* kExperimentCsvHeader = "axis_value,t60_pct,c50_db,edt_s,spec_l1,mode";

struct ExperimentRow {
  std::string axis_value;
  double t60_pct = 0.0;
  double c50_db = 0.0;
  double edt_s = 0.0;
  double spec_l1 = 0.0;
  std::string mode;
};

/// One training run per axis value. Each run lives in
/// <out_dir>/<axis>_<value>/; contexts probed for the probe_rays and
/// mesh_noise axes go there too, so the dataset is never written. Writes
/// <out_dir>/results.csv and one SVG per metric.
std::vector<ExperimentRow> run_experiment_matrix(const std::filesystem::path& dataset_dir,
                                                 const ExperimentConfig& cfg, const std::filesystem::path& out_dir);

void write_experiment_csv(const std::vector<ExperimentRow>& rows, const std::filesystem::path& path);
std::vector<ExperimentRow> read_experiment_csv(const std::filesystem::path& path);

}  // namespace minaf::training
