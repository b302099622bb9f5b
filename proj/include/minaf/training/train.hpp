#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "minaf/metrics/acoustic.hpp"
#include "minaf/model/minaf.hpp"
#include "minaf/nn/tape.hpp"
#include "minaf/training/data.hpp"

namespace minaf::training {

using model::MinafModel;
using model::ReconstructionMode;
using nn::Tape;
using nn::Var;

struct TrainConfig {
  double lr0 = 5e-4;
  double lr_decay = 0.9;  // per epoch
  /// Frame queries per step; used to derive rirs_per_step when that is 0.
  std::size_t batch_frames = 256;
  /// Channel RIRs per step. Whole samples are drawn (both channels), so an
  /// odd count rounds up.
  std::size_t rirs_per_step = 4;
  double alpha = 0.1;
  int epochs = 50;
  std::uint64_t seed = 42;
  double data_fraction = 1.0;
  model::Ablation ablation;
  /// Keep the IF core from updating the shared front end.
  bool separate = false;
  std::string preset = "desk";
  std::size_t workers = 1;
  /// Stop after this many steps in total (0 = no cap).
  std::size_t max_steps = 0;
  /// Also write epoch_NNN.mnfw every this many epochs (0 = never).
  int checkpoint_every = 0;
  bool verbose = false;

  void validate() const;
  /// Whole samples per step for RIRs of n_frames frames.
  std::size_t samples_per_step(std::size_t n_frames) const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

/// Architecture preset by name: "paper", "desk", or "tiny".
model::ModelConfig preset_config(const std::string& name);

struct LossBreakdown {
  double l1_mag = 0.0;
  double l1_if = 0.0;
  double schroeder = 0.0;
  double total = 0.0;
};

/// Frames below this EDC level in the target are not compared.
inline constexpr double kEdcCompareDb = -90.0;

/// Targets for a batch of whole RIRs, rows grouped by RIR.
struct BatchTargets {
  Mat<float> mag;  // (n_rirs * T) x F
  Mat<float> ifr;
  Mat<float> edc;  // n_rirs x T
  std::size_t n_rirs = 0;
  std::size_t n_frames = 0;
};

BatchTargets gather_targets(const TrainingData& data, const std::vector<std::pair<std::size_t, int>>& items);

template <typename T>
struct LossVars {
  Var total;
  LossBreakdown values;
};

/// total = l1_mag + l1_if + alpha * schroeder on the tape. Throws
/// TrainingDiverged when any term is not finite.
template <typename T>
LossVars<T> compute_loss(Tape<T>& tape, Var mag, Var ifr, const Mat<T>& target_mag, const Mat<T>& target_if,
                         const Mat<T>& target_edc, std::size_t n_rirs, std::size_t n_frames, double alpha);

/// Same loss on plain grids (no tape).
LossBreakdown compute_loss(const Mat<float>& mag, const Mat<float>& ifr, const BatchTargets& targets, double alpha);

struct EpochSummary {
  int epoch = 0;
  double lr = 0.0;
  std::size_t steps = 0;
  LossBreakdown mean_loss;
  double val_spec_l1 = 0.0;  // NaN when there is no validation split
  double seconds = 0.0;
};

struct TrainResult {
  std::vector<EpochSummary> epochs;
  std::size_t steps = 0;
  int best_epoch = -1;
  double best_val = 0.0;
  std::filesystem::path best_checkpoint;
  std::filesystem::path last_checkpoint;
};

inline constexpr const char* kStepLogFile = "train_log.ndjson";
inline constexpr const char* kEpochLogFile = "epochs.ndjson";
inline constexpr const char* kBestCheckpoint = "best.mnfw";
inline constexpr const char* kLastCheckpoint = "last.mnfw";

/// Training sample indices after data_fraction: floor(f * |train|) samples
/// (at least one), a seeded subset in ascending order.
std::vector<std::size_t> training_subset(const sim::DatasetManifest& m, double fraction, std::uint64_t seed);

/// Mean |predicted - target| log-magnitude over the given samples, both channels.
double spec_l1_on(MinafModel<float>& model, const TrainingData& data, const std::vector<std::size_t>& samples);

/// Fresh model for the dataset under cfg (preset, ablation, seed).
MinafModel<float> make_model(const TrainingData& data, const TrainConfig& cfg);

/// Runs the optimization loop, writing logs and checkpoints under out_dir.
TrainResult train(MinafModel<float>& model, const TrainingData& data, const TrainConfig& cfg,
                  const std::filesystem::path& out_dir);

struct LoadedModel {
  MinafModel<float> model;
  nlohmann::json header;
};
LoadedModel load_model(const std::filesystem::path& checkpoint);

using Prediction = std::pair<dsp::MagSpec, dsp::IfSpec>;

struct EvalResult {
  std::string split;
  std::size_t n_rirs = 0;
  double pred_spec_l1 = 0.0;  // predicted vs target log-magnitude grids
  std::vector<std::pair<ReconstructionMode, metrics::AcousticReport>> reports;

  const metrics::AcousticReport& report(ReconstructionMode m) const;
  nlohmann::json to_json(bool include_samples = false) const;
};

/// Reconstructs each RIR of `samples` (both channels, in order) from the
/// given predictions and scores it against the ground truth.
EvalResult evaluate_predictions(const TrainingData& data, const std::vector<std::size_t>& samples,
                                const std::vector<Prediction>& predictions,
                                const std::vector<ReconstructionMode>& modes, std::uint64_t seed,
                                std::size_t workers);

EvalResult evaluate(MinafModel<float>& model, const TrainingData& data, sim::Split split,
                    const std::vector<ReconstructionMode>& modes, std::uint64_t seed = 42, std::size_t workers = 1);

/// Predicted grids for the given samples, both channels each, in order.
std::vector<Prediction> predict_samples(MinafModel<float>& model, const TrainingData& data,
                                        const std::vector<std::size_t>& samples);

}  // namespace minaf::training
