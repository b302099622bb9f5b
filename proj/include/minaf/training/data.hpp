#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "minaf/dsp/spectrogram.hpp"
#include "minaf/geometry/probe.hpp"
#include "minaf/model/minaf.hpp"
#include "minaf/sim/dataset.hpp"

namespace minaf::training {

namespace fs = std::filesystem;
using nn::Mat;

/// Written next to the caches once a probe pass completes. A directory whose
/// stamp matches the requested settings is up to date.
struct ProbeStamp {
  geometry::ProbeConfig probe;
  double miss_distance = 0.0;  // resolved for the probed mesh
  double mesh_noise = 0.0;     // vertex noise sigma, meters
  std::uint64_t noise_seed = 0;
  std::string mesh_hash;       // FNV-1a of the mesh file bytes

  nlohmann::json to_json() const;
  static ProbeStamp from_json(const nlohmann::json& j);
};

inline constexpr const char* kProbeStampFile = "probe.json";
inline constexpr const char* kDefaultContextDir = "contexts";

nlohmann::json probe_config_json(const geometry::ProbeConfig& cfg);
geometry::ProbeConfig probe_config_from_json(const nlohmann::json& j);

struct ProbeStats {
  std::size_t probed = 0;
  std::size_t skipped = 0;
};

/// Probes every position of the manifest once into
/// <context_dir>/<position id>.mnfc. Skips the pass when the stamp and all
/// caches are present and match, unless forced. Results do not depend on the
/// worker count.
ProbeStats probe_positions(const fs::path& dataset_dir, const sim::DatasetManifest& manifest,
                           const fs::path& context_dir, const geometry::ProbeConfig& cfg, double mesh_noise,
                           std::uint64_t noise_seed, std::size_t workers, bool force = false);

fs::path context_path(const fs::path& context_dir, const sim::Position& p);
ProbeStamp read_probe_stamp(const fs::path& context_dir);

/// Frame-major training targets for one channel.
struct RirTarget {
  Mat<float> mag;  // T x F log-magnitude
  Mat<float> ifr;  // T x F instantaneous frequency, 0 where |S| < eps_mag
  Mat<float> edc;  // 1 x T frame-energy EDC of the target, dB
};

/// Targets for one complex spectrogram.
RirTarget make_target(const dsp::ComplexSpectrogram& s);

struct TrainingData {
  fs::path dir;
  sim::DatasetManifest manifest;
  ProbeStamp stamp;
  /// Probe-dependent model fields (n_rays, n_thresholds, scene bounds,
  /// distance scale, grid size).
  model::ModelConfig geometry_config;
  std::vector<model::ContextInput> contexts;                  // per position
  std::vector<std::array<dsp::Waveform, 2>> waves;            // per sample
  std::vector<std::array<dsp::ComplexSpectrogram, 2>> specs;  // per sample
  std::vector<std::array<RirTarget, 2>> targets;              // per sample

  std::size_t n_frames() const { return geometry_config.n_frames; }
  std::size_t n_freq() const { return geometry_config.n_freq; }
  model::RirQuery query(std::size_t sample, int channel) const;
  /// Architecture fields from `arch`, probe fields from the dataset.
  model::ModelConfig model_config(const model::ModelConfig& arch) const;
};

/// Loads the manifest, WAVs, and the caches under `context_dir` (relative
/// paths resolve against the dataset). Throws DataError on missing or
/// inconsistent files.
TrainingData load_training_data(const fs::path& dataset_dir, const fs::path& context_dir = kDefaultContextDir,
                                std::size_t workers = 1);

}  // namespace minaf::training
