#include "minaf/training/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>

#ifdef __GLIBC__
#include <malloc.h>
#endif

#include "minaf/common/error.hpp"
#include "minaf/common/parallel.hpp"
#include "minaf/common/rng.hpp"
#include "minaf/nn/adam.hpp"
#include "minaf/nn/checkpoint.hpp"

namespace minaf::training {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kSubsetStream = 0x46524143ULL;  // "FRAC"
constexpr std::uint64_t kEpochStream = 0x45504F43ULL;   // "EPOC"
constexpr std::size_t kPredictChunk = 16;

// Tape buffers are large and short-lived; keeping them on the heap instead of
// fresh mmap pages avoids a page-fault storm on every step.
void keep_large_allocations() {
#ifdef __GLIBC__
  static const bool done = [] {
    mallopt(M_MMAP_THRESHOLD, 256 << 20);
    mallopt(M_TRIM_THRESHOLD, 512 << 20);
    return true;
  }();
  (void)done;
#endif
}

bool finite(const LossBreakdown& l) {
  return std::isfinite(l.l1_mag) && std::isfinite(l.l1_if) && std::isfinite(l.schroeder) && std::isfinite(l.total);
}

void check_finite(const LossBreakdown& l) {
  if (!finite(l)) {
    throw TrainingDiverged("non-finite loss (l1_mag " + std::to_string(l.l1_mag) + ", l1_if " +
                           std::to_string(l.l1_if) + ", schroeder " + std::to_string(l.schroeder) + ")");
  }
}

json loss_json(const LossBreakdown& l) {
  return {{"l1_mag", l.l1_mag}, {"l1_if", l.l1_if}, {"schroeder", l.schroeder}, {"total", l.total}};
}

}  // namespace

void TrainConfig::validate() const {
  require(lr0 > 0.0 && std::isfinite(lr0), "lr0 must be positive");
  require(lr_decay > 0.0 && lr_decay <= 1.0, "lr_decay must be in (0, 1]");
  require(batch_frames > 0, "batch_frames must be positive");
  require(alpha >= 0.0 && std::isfinite(alpha), "alpha must be >= 0");
  require(epochs > 0, "epochs must be positive");
  require(data_fraction > 0.0 && data_fraction <= 1.0, "data_fraction must be in (0, 1]");
  require(workers > 0, "workers must be positive");
  require(checkpoint_every >= 0, "checkpoint_every must be >= 0");
  preset_config(preset);
}

std::size_t TrainConfig::samples_per_step(std::size_t n_frames) const {
  std::size_t rirs = rirs_per_step;
  if (rirs == 0) rirs = std::max<std::size_t>(1, (batch_frames + n_frames / 2) / std::max<std::size_t>(1, n_frames));
  return (rirs + 1) / 2;
}

json TrainConfig::to_json() const {
  return {{"lr0", lr0},
          {"lr_decay", lr_decay},
          {"batch_frames", batch_frames},
          {"rirs_per_step", rirs_per_step},
          {"alpha", alpha},
          {"epochs", epochs},
          {"seed", seed},
          {"data_fraction", data_fraction},
          {"ablation", ablation.to_json()},
          {"separate", separate},
          {"preset", preset},
          {"max_steps", max_steps},
          {"checkpoint_every", checkpoint_every}};
}

TrainConfig TrainConfig::from_json(const json& j) {
  try {
    TrainConfig c;
    c.lr0 = j.at("lr0").get<double>();
    c.lr_decay = j.at("lr_decay").get<double>();
    c.batch_frames = j.at("batch_frames").get<std::size_t>();
    c.rirs_per_step = j.at("rirs_per_step").get<std::size_t>();
    c.alpha = j.at("alpha").get<double>();
    c.epochs = j.at("epochs").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.data_fraction = j.at("data_fraction").get<double>();
    c.ablation = model::Ablation::from_json(j.at("ablation"));
    c.separate = j.at("separate").get<bool>();
    c.preset = j.at("preset").get<std::string>();
    c.max_steps = j.value("max_steps", std::size_t{0});
    c.checkpoint_every = j.value("checkpoint_every", 0);
    return c;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed training config: ") + e.what());
  }
}

model::ModelConfig preset_config(const std::string& name) {
  if (name == "desk") return model::ModelConfig::desk();
  if (name == "paper") return model::ModelConfig::paper();
  if (name == "tiny") return model::ModelConfig::tiny();
  throw InvalidArgument("unknown model preset '" + name + "' (expected desk, paper or tiny)");
}

BatchTargets gather_targets(const TrainingData& data, const std::vector<std::pair<std::size_t, int>>& items) {
  BatchTargets b;
  b.n_rirs = items.size();
  b.n_frames = data.n_frames();
  const auto T = static_cast<Eigen::Index>(b.n_frames);
  const auto F = static_cast<Eigen::Index>(data.n_freq());
  b.mag.resize(T * static_cast<Eigen::Index>(items.size()), F);
  b.ifr.resize(b.mag.rows(), F);
  b.edc.resize(static_cast<Eigen::Index>(items.size()), T);
  for (std::size_t i = 0; i < items.size(); ++i) {
    const RirTarget& t = data.targets[items[i].first][static_cast<std::size_t>(items[i].second)];
    const auto r = static_cast<Eigen::Index>(i) * T;
    b.mag.middleRows(r, T) = t.mag;
    b.ifr.middleRows(r, T) = t.ifr;
    b.edc.row(static_cast<Eigen::Index>(i)) = t.edc;
  }
  return b;
}

template <typename T>
LossVars<T> compute_loss(Tape<T>& tape, Var mag, Var ifr, const Mat<T>& target_mag, const Mat<T>& target_if,
                         const Mat<T>& target_edc, std::size_t n_rirs, std::size_t n_frames, double alpha) {
  require(alpha >= 0.0, "alpha must be >= 0");
  const Var l_mag = tape.l1_mean(mag, target_mag);
  const Var l_if = tape.l1_mean(ifr, target_if);
  const Var l_sch = tape.edc_l1(mag, n_rirs, n_frames, target_edc, static_cast<T>(dsp::kMagEpsilon),
                                static_cast<T>(dsp::kEdcFloorDb), static_cast<T>(kEdcCompareDb));
  LossVars<T> out;
  out.total = tape.weighted_sum({l_mag, l_if, l_sch}, {T(1), T(1), static_cast<T>(alpha)});
  out.values.l1_mag = static_cast<double>(tape.value(l_mag)(0, 0));
  out.values.l1_if = static_cast<double>(tape.value(l_if)(0, 0));
  out.values.schroeder = static_cast<double>(tape.value(l_sch)(0, 0));
  out.values.total = static_cast<double>(tape.value(out.total)(0, 0));
  check_finite(out.values);
  return out;
}

template LossVars<float> compute_loss(Tape<float>&, Var, Var, const Mat<float>&, const Mat<float>&,
                                      const Mat<float>&, std::size_t, std::size_t, double);
template LossVars<double> compute_loss(Tape<double>&, Var, Var, const Mat<double>&, const Mat<double>&,
                                       const Mat<double>&, std::size_t, std::size_t, double);

LossBreakdown compute_loss(const Mat<float>& mag, const Mat<float>& ifr, const BatchTargets& targets, double alpha) {
  Tape<float> tape(false);
  const Var m = tape.constant(mag);
  const Var f = tape.constant(ifr);
  return compute_loss<float>(tape, m, f, targets.mag, targets.ifr, targets.edc, targets.n_rirs, targets.n_frames,
                             alpha)
      .values;
}

std::vector<std::size_t> training_subset(const sim::DatasetManifest& m, double fraction, std::uint64_t seed) {
  require(fraction > 0.0 && fraction <= 1.0, "data_fraction must be in (0, 1]");
  std::vector<std::size_t> train = m.indices(sim::Split::Train);
  if (train.empty()) throw DataError("dataset has no training samples");
  if (fraction >= 1.0) return train;
  const auto keep = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(fraction * static_cast<double>(train.size()))));
  CounterRng rng(seed, kSubsetStream);
  shuffle(train, rng);
  train.resize(keep);
  std::sort(train.begin(), train.end());
  return train;
}

std::vector<Prediction> predict_samples(MinafModel<float>& model, const TrainingData& data,
                                        const std::vector<std::size_t>& samples) {
  keep_large_allocations();
  std::vector<model::RirQuery> queries;
  for (std::size_t s : samples) {
    for (int c = 0; c < 2; ++c) queries.push_back(data.query(s, c));
  }
  std::vector<Prediction> out;
  out.reserve(queries.size());
  for (std::size_t i = 0; i < queries.size(); i += kPredictChunk) {
    const std::vector<model::RirQuery> chunk(queries.begin() + static_cast<std::ptrdiff_t>(i),
                                             queries.begin() +
                                                 static_cast<std::ptrdiff_t>(std::min(queries.size(), i + kPredictChunk)));
    for (auto& p : model.predict_many(chunk)) out.push_back(std::move(p));
  }
  return out;
}

double spec_l1_on(MinafModel<float>& model, const TrainingData& data, const std::vector<std::size_t>& samples) {
  if (samples.empty()) return std::numeric_limits<double>::quiet_NaN();
  const std::vector<Prediction> preds = predict_samples(model, data, samples);
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const RirTarget& t = data.targets[samples[i / 2]][i % 2];
    const dsp::MagSpec& m = preds[i].first;
    for (std::size_t f = 0; f < m.rows(); ++f) {
      for (std::size_t k = 0; k < m.cols(); ++k) {
        sum += std::abs(m.at(f, k) -
                        static_cast<double>(t.mag(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(f))));
      }
    }
    count += m.rows() * m.cols();
  }
  return sum / static_cast<double>(count);
}

MinafModel<float> make_model(const TrainingData& data, const TrainConfig& cfg) {
  model::ModelConfig arch = preset_config(cfg.preset);
  arch.ablation = cfg.ablation;
  return MinafModel<float>(data.model_config(arch), cfg.seed);
}

namespace {

json checkpoint_header(const MinafModel<float>& model, const TrainConfig& cfg, const TrainingData& data, int epoch,
                       std::size_t step, double val) {
  return {{"format", "minaf-model"},
          {"model", model.config().to_json()},
          {"train", cfg.to_json()},
          {"probe", data.stamp.to_json()},
          {"dataset_seed", data.manifest.seed},
          {"epoch", epoch},
          {"step", step},
          {"val_spec_l1", val}};
}

}  // namespace

TrainResult train(MinafModel<float>& model, const TrainingData& data, const TrainConfig& cfg,
                  const fs::path& out_dir) {
  cfg.validate();
  keep_large_allocations();
  require(model.config().n_frames == data.n_frames() && model.config().n_freq == data.n_freq(),
          "model grid does not match the dataset");
  fs::create_directories(out_dir);

  const std::vector<std::size_t> subset = training_subset(data.manifest, cfg.data_fraction, cfg.seed);
  const std::vector<std::size_t> val = data.manifest.indices(sim::Split::Val);
  const std::size_t per_step = cfg.samples_per_step(data.n_frames());

  std::ofstream step_log(out_dir / kStepLogFile, std::ios::trunc);
  std::ofstream epoch_log(out_dir / kEpochLogFile, std::ios::trunc);
  if (!step_log || !epoch_log) throw DataError("cannot write logs under " + out_dir.string());

  nn::Adam<float> adam(model.params());
  TrainResult result;
  result.best_val = std::numeric_limits<double>::infinity();
  result.best_checkpoint = out_dir / kBestCheckpoint;
  result.last_checkpoint = out_dir / kLastCheckpoint;
  bool stop = false;

  for (int epoch = 0; epoch < cfg.epochs && !stop; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = nn::scheduled_lr(cfg.lr0, cfg.lr_decay, epoch);
    std::vector<std::size_t> order = subset;
    CounterRng rng(cfg.seed, kEpochStream + static_cast<std::uint64_t>(epoch));
    shuffle(order, rng);

    EpochSummary es;
    es.epoch = epoch;
    es.lr = lr;
    double ratio_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += per_step) {
      const std::size_t end = std::min(order.size(), start + per_step);
      std::vector<std::pair<std::size_t, int>> items;
      std::vector<model::RirQuery> queries;
      for (std::size_t i = start; i < end; ++i) {
        for (int c = 0; c < 2; ++c) {
          items.emplace_back(order[i], c);
          queries.push_back(data.query(order[i], c));
        }
      }
      const BatchTargets tg = gather_targets(data, items);

      Tape<float> tape;
      model.params().zero_grad();
      const model::ForwardVars<float> fv = model.forward(tape, queries, cfg.separate);
      const LossVars<float> loss =
          compute_loss<float>(tape, fv.mag, fv.ifr, tg.mag, tg.ifr, tg.edc, tg.n_rirs, tg.n_frames, cfg.alpha);
      tape.backward(loss.total);
      adam.step(model.params(), lr);

      ++result.steps;
      ++es.steps;
      es.mean_loss.l1_mag += loss.values.l1_mag;
      es.mean_loss.l1_if += loss.values.l1_if;
      es.mean_loss.schroeder += loss.values.schroeder;
      es.mean_loss.total += loss.values.total;
      const double l1 = loss.values.l1_mag + loss.values.l1_if;
      ratio_sum += l1 > 0.0 ? cfg.alpha * loss.values.schroeder / l1 : 0.0;

      json line = loss_json(loss.values);
      line["step"] = result.steps;
      line["epoch"] = epoch;
      line["lr"] = lr;
      step_log << line.dump() << "\n";
      if (cfg.max_steps > 0 && result.steps >= cfg.max_steps) {
        stop = true;
        break;
      }
    }
    step_log.flush();

    const double n = static_cast<double>(std::max<std::size_t>(1, es.steps));
    es.mean_loss.l1_mag /= n;
    es.mean_loss.l1_if /= n;
    es.mean_loss.schroeder /= n;
    es.mean_loss.total /= n;
    es.val_spec_l1 = spec_l1_on(model, data, val);
    es.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    json header = checkpoint_header(model, cfg, data, epoch, result.steps, es.val_spec_l1);
    // Without a validation split the latest epoch counts as best.
    const bool better = val.empty() || es.val_spec_l1 < result.best_val;
    if (better) {
      result.best_val = es.val_spec_l1;
      result.best_epoch = epoch;
      nn::save_checkpoint(result.best_checkpoint, header, model.params(), nullptr);
    }
    if (cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0) {
      char name[32];
      std::snprintf(name, sizeof name, "epoch_%03d.mnfw", epoch);
      nn::save_checkpoint(out_dir / name, header, model.params(), nullptr);
    }

    json eline = loss_json(es.mean_loss);
    eline["epoch"] = epoch;
    eline["lr"] = lr;
    eline["steps"] = es.steps;
    eline["val_spec_l1"] = es.val_spec_l1;
    eline["schroeder_to_l1_ratio"] = ratio_sum / n;
    eline["best"] = better;
    epoch_log << eline.dump() << "\n";
    epoch_log.flush();
    if (cfg.verbose) {
      std::clog << "epoch " << epoch << "  lr " << lr << "  loss " << es.mean_loss.total << "  val spec_l1 "
                << es.val_spec_l1 << "  (" << es.seconds << " s)\n";
    }
    result.epochs.push_back(es);
  }

  const EpochSummary& last = result.epochs.back();
  nn::save_checkpoint(result.last_checkpoint,
                      checkpoint_header(model, cfg, data, last.epoch, result.steps, last.val_spec_l1),
                      model.params(), &adam);
  return result;
}

LoadedModel load_model(const fs::path& checkpoint) {
  if (!fs::exists(checkpoint)) throw DataError("missing checkpoint " + checkpoint.string());
  nn::CheckpointData ck = nn::load_checkpoint(checkpoint);
  if (ck.header.value("format", std::string()) != "minaf-model" || !ck.header.contains("model")) {
    throw DataError(checkpoint.string() + " is not a model checkpoint");
  }
  const model::ModelConfig cfg = model::ModelConfig::from_json(ck.header.at("model"));
  try {
    return LoadedModel{MinafModel<float>(cfg, ck.params), ck.header};
  } catch (const InvalidArgument& e) {
    throw DataError(checkpoint.string() + ": " + e.what());
  }
}

const metrics::AcousticReport& EvalResult::report(ReconstructionMode m) const {
  for (const auto& [mode, r] : reports) {
    if (mode == m) return r;
  }
  throw InvalidArgument("mode " + model::to_string(m) + " was not evaluated");
}

json EvalResult::to_json(bool include_samples) const {
  json modes = json::object();
  for (const auto& [mode, r] : reports) modes[model::to_string(mode)] = r.to_json(include_samples);
  return {{"split", split}, {"n_rirs", n_rirs}, {"pred_spec_l1", pred_spec_l1}, {"modes", modes}};
}

EvalResult evaluate_predictions(const TrainingData& data, const std::vector<std::size_t>& samples,
                                const std::vector<Prediction>& predictions,
                                const std::vector<ReconstructionMode>& modes, std::uint64_t seed,
                                std::size_t workers) {
  require(predictions.size() == 2 * samples.size(), "need one prediction per channel of every sample");
  require(!modes.empty(), "no reconstruction modes requested");
  EvalResult out;
  out.n_rirs = predictions.size();

  double sum = 0.0;
  std::size_t count = 0;
  std::vector<dsp::Waveform> gt(predictions.size());
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const RirTarget& t = data.targets[samples[i / 2]][i % 2];
    const dsp::MagSpec& m = predictions[i].first;
    require(m.rows() == data.n_freq() && m.cols() == data.n_frames(), "prediction grid has the wrong shape");
    for (std::size_t f = 0; f < m.rows(); ++f) {
      for (std::size_t k = 0; k < m.cols(); ++k) {
        sum += std::abs(m.at(f, k) -
                        static_cast<double>(t.mag(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(f))));
      }
    }
    count += m.rows() * m.cols();
    gt[i] = data.waves[samples[i / 2]][i % 2];
  }
  out.pred_spec_l1 = count > 0 ? sum / static_cast<double>(count) : 0.0;

  for (ReconstructionMode mode : modes) {
    std::vector<dsp::Waveform> rec(predictions.size());
    parallel_for(predictions.size(), workers, [&](std::size_t i) {
      const dsp::Waveform& g = gt[i];
      const dsp::ComplexSpectrogram& spec = data.specs[samples[i / 2]][i % 2];
      rec[i] = model::reconstruct_rir(predictions[i].first, predictions[i].second, mode, &spec,
                                      seed * 1000003ULL + i, g.size(), g.fs, spec.config());
    });
    out.reports.emplace_back(mode, metrics::error_stats(rec, gt));
  }
  return out;
}

EvalResult evaluate(MinafModel<float>& model, const TrainingData& data, sim::Split split,
                    const std::vector<ReconstructionMode>& modes, std::uint64_t seed, std::size_t workers) {
  const std::vector<std::size_t> samples = data.manifest.indices(split);
  if (samples.empty()) throw DataError("split " + sim::to_string(split) + " is empty");
  EvalResult r = evaluate_predictions(data, samples, predict_samples(model, data, samples), modes, seed, workers);
  r.split = sim::to_string(split);
  return r;
}

}  // namespace minaf::training
