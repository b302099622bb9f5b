#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "minaf/dsp/spectrogram.hpp"
#include "minaf/geometry/mesh.hpp"
#include "minaf/geometry/probe.hpp"
#include "minaf/nn/layers.hpp"
#include "minaf/nn/tape.hpp"

namespace minaf::model {

using geometry::Vec3;
using nn::Mat;
using nn::Tape;
using nn::Var;

/// Latent-column ablations and the time-embedding variant.
struct Ablation {
  bool drop_context = false;   // zero all ten context columns
  bool drop_n = false;         // zero n' (Tx and Rx)
  bool drop_mu_sigma = false;  // zero mu' and sigma'
  bool drop_occ = false;       // zero occ'
  bool no_time_embed = false;  // concatenate gamma(t) instead of multiplying by t'

  bool any() const { return drop_context || drop_n || drop_mu_sigma || drop_occ || no_time_embed; }
  nlohmann::json to_json() const;
  static Ablation from_json(const nlohmann::json& j);
  /// Parses "none", "drop_context", "drop_n", "drop_mu_sigma", "drop_occ", "no_time_embed".
  static Ablation from_name(const std::string& name);
  std::string name() const;
};

struct ModelConfig {
  std::size_t n_rays = 1024;
  std::size_t n_thresholds = 8;
  std::size_t h = 64;
  std::size_t embed_dim = 64;
  int bands = 10;
  std::vector<std::size_t> widths{512, 362, 256, 181, 128};
  std::size_t n_freq = 257;
  std::size_t n_frames = 63;
  /// Scene bounds used to map positions to [-1, 1].
  Vec3 scene_lo = Vec3::Zero();
  Vec3 scene_hi = Vec3(4.0, 3.0, 2.5);
  /// Distances (d, mu, sigma) are divided by this before projection.
  double distance_scale = 10.0;
  Ablation ablation;

  /// Paper-scale core widths (2048, 1448, 1024, 724, 512).
  static ModelConfig paper();
  /// Paper widths divided by 4.
  static ModelConfig desk();
  /// h = 8, widths (32, 16), N = 16, N_tau = 4, L = 4.
  static ModelConfig tiny();

  void validate() const;
  std::size_t fused_width() const { return 12 * h; }
  std::size_t core_input_dim() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

/// Closed-form trainable parameter counts.
struct ParamCount {
  std::size_t heads = 0;
  std::size_t embeddings = 0;
  std::size_t core_mag = 0;
  std::size_t core_if = 0;
  std::size_t total() const { return heads + embeddings + core_mag + core_if; }
};
ParamCount parameter_count(const ModelConfig& cfg);

/// Probe features normalized for projection: distances by distance_scale,
/// occupancy by the ray count.
struct ContextInput {
  std::vector<double> d, n, mu, sigma, occ;
  static ContextInput from_raw(const geometry::ContextRaw& raw, const ModelConfig& cfg);
};

/// One RIR channel to predict.
struct RirQuery {
  const ContextInput* tx = nullptr;
  const ContextInput* rx = nullptr;
  Vec3 p_tx = Vec3::Zero();
  Vec3 p_rx = Vec3::Zero();
  int orientation = 0;  // quarter turns
  int channel = 0;      // 0 left, 1 right
};

template <typename T>
struct ForwardVars {
  Var mag;  // (n_rirs * n_frames) x n_freq, rows grouped by RIR
  Var ifr;
};

template <typename T>
class MinafModel {
 public:
  explicit MinafModel(ModelConfig cfg, std::uint64_t seed = 42);
  /// Adopts parameters (e.g. from a checkpoint), converting precision.
  template <typename U>
  MinafModel(ModelConfig cfg, const nn::ParamSet<U>& params);

  const ModelConfig& config() const { return cfg_; }
  nn::ParamSet<T>& params() { return params_; }
  const nn::ParamSet<T>& params() const { return params_; }

  /// Batched forward over every frame of every query. With detach_if the IF
  /// core sees a detached copy of the shared front end.
  ForwardVars<T> forward(Tape<T>& tape, const std::vector<RirQuery>& queries, bool detach_if = false);

  /// h x 5: columns (d', n', mu', sigma', occ').
  Mat<T> project_context(const ContextInput& ctx);
  /// h x 12: (C_Tx | p_Tx' | C_Rx | p_Rx').
  Mat<T> fuse(const ContextInput& tx, const ContextInput& rx, const Vec3& p_tx, const Vec3& p_rx);
  /// Column-wise product of the fused grid with t' = f_t(gamma(x_t)).
  Mat<T> embed_time(const Mat<T>& fused, std::size_t t);
  /// Time vector t' (h entries).
  Mat<T> time_vector(std::size_t t);
  /// (magnitude column, IF column) for one frame.
  std::pair<Mat<T>, Mat<T>> predict_column(const Mat<T>& fused_t, int orientation, int channel);
  /// Full grids for one query; every frame batched.
  std::pair<dsp::MagSpec, dsp::IfSpec> predict_spectrogram(const RirQuery& q);
  /// Many queries in one batched pass.
  std::vector<std::pair<dsp::MagSpec, dsp::IfSpec>> predict_many(const std::vector<RirQuery>& qs);

  /// Normalized time coordinate 2 (t + 0.5) / T - 1.
  double time_coordinate(std::size_t t) const;
  Vec3 normalize_position(const Vec3& p) const;

 private:
  void build_layers();
  Var context_rows(Tape<T>& tape, const std::vector<const ContextInput*>& ctx);
  Var position_rows(Tape<T>& tape, const nn::TwoLayer<T>& head, const std::vector<Vec3>& ps);
  Var fused_rows(Tape<T>& tape, const std::vector<RirQuery>& qs);
  Mat<T> column_mask() const;

  ModelConfig cfg_;
  nn::ParamSet<T> params_;
  nn::TwoLayer<T> head_d_, head_n_, head_mu_, head_sigma_, head_occ_, head_ptx_, head_prx_, head_t_;
  nn::Param<T>* emb_orientation_ = nullptr;
  nn::Param<T>* emb_channel_ = nullptr;
  std::vector<nn::Linear<T>> core_mag_, core_if_;
};

enum class ReconstructionMode { GTP, PreP, RanP, GLim, GTM_PreP };
std::string to_string(ReconstructionMode m);
ReconstructionMode mode_from_string(const std::string& s);
inline const std::vector<ReconstructionMode>& all_modes() {
  static const std::vector<ReconstructionMode> modes{ReconstructionMode::GTP, ReconstructionMode::PreP,
                                                     ReconstructionMode::RanP, ReconstructionMode::GLim,
                                                     ReconstructionMode::GTM_PreP};
  return modes;
}

inline constexpr std::size_t kGriffinLimIters = 60;

/// Time-domain RIR from predicted grids. Linear magnitude is exp(mag) - eps
/// clamped at 0. GTP and GTM_PreP need the ground-truth spectrogram.
dsp::Waveform reconstruct_rir(const dsp::MagSpec& mag, const dsp::IfSpec& ifr, ReconstructionMode mode,
                              const dsp::ComplexSpectrogram* gt, std::uint64_t seed, std::size_t n_samples,
                              double fs = 16000.0, const dsp::StftConfig& stft = {});

}  // namespace minaf::model
