#include "minaf/pipeline/commands.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <fstream>
#include <iostream>

#include "minaf/common/error.hpp"
#include "minaf/dsp/wav.hpp"
#include "minaf/metrics/acoustic.hpp"
#include "minaf/pipeline/plot.hpp"
#include "minaf/sim/dataset.hpp"
#include "minaf/training/data.hpp"
#include "minaf/training/experiment.hpp"
#include "minaf/training/train.hpp"

namespace minaf::pipeline {

namespace fs = std::filesystem;
using model::ReconstructionMode;

namespace {

fs::path context_dir(const RunConfig& cfg, const char* key) {
  const std::string v = cfg.get(key);
  return v.empty() ? fs::path(training::kDefaultContextDir) : fs::path(v);
}

model::Ablation parse_ablation(const std::string& text) {
  model::Ablation a;
  std::string item;
  auto apply = [&](const std::string& name) {
    if (name.empty()) return;
    const model::Ablation one = model::Ablation::from_name(name);
    a.drop_context |= one.drop_context;
    a.drop_n |= one.drop_n;
    a.drop_mu_sigma |= one.drop_mu_sigma;
    a.drop_occ |= one.drop_occ;
    a.no_time_embed |= one.no_time_embed;
  };
  for (char c : text) {
    if (c == ',' || c == '+' || c == ' ') {
      apply(item);
      item.clear();
    } else {
      item += c;
    }
  }
  apply(item);
  return a;
}

std::vector<ReconstructionMode> parse_modes(const std::vector<std::string>& names) {
  std::vector<ReconstructionMode> out;
  for (const auto& n : names) out.push_back(model::mode_from_string(n));
  if (out.empty()) throw InvalidArgument("no reconstruction modes given");
  return out;
}

int quarter_turns(double degrees) {
  const double q = degrees / 90.0;
  const long r = std::lround(q);
  if (std::abs(q - static_cast<double>(r)) > 1e-9) {
    throw InvalidArgument("orientation must be a multiple of 90 degrees, got " + std::to_string(degrees));
  }
  return static_cast<int>(((r % 4) + 4) % 4);
}

void refuse_existing(const fs::path& p, bool force) {
  if (!force && fs::exists(p)) {
    throw InvalidArgument(p.string() + " already exists (use --force to overwrite)");
  }
}

void check_model_matches(const model::ModelConfig& m, const training::TrainingData& d) {
  const model::ModelConfig& g = d.geometry_config;
  if (m.n_rays != g.n_rays || m.n_thresholds != g.n_thresholds || m.n_frames != g.n_frames ||
      m.n_freq != g.n_freq) {
    throw DataError("checkpoint was trained on a different probe or RIR configuration than this dataset");
  }
}

training::TrainConfig train_config(const RunConfig& cfg) {
  training::TrainConfig tc;
  tc.lr0 = cfg.get_double("lr0");
  tc.lr_decay = cfg.get_double("lr_decay");
  tc.rirs_per_step = cfg.get_size("rirs_per_step");
  tc.alpha = cfg.get_double("alpha");
  tc.epochs = static_cast<int>(cfg.get_int("epochs"));
  tc.seed = cfg.get_u64("seed");
  tc.data_fraction = cfg.get_double("data_fraction");
  tc.ablation = parse_ablation(cfg.get("ablation"));
  tc.preset = cfg.get("preset");
  tc.workers = std::max<std::size_t>(1, cfg.get_size("workers"));
  tc.max_steps = cfg.get_size("max_steps");
  if (cfg.command() == "train") {
    tc.batch_frames = cfg.get_size("batch_frames");
    tc.separate = cfg.get_bool("separate");
    tc.checkpoint_every = static_cast<int>(cfg.get_int("checkpoint_every"));
    tc.verbose = cfg.get_bool("verbose");
  }
  tc.validate();
  return tc;
}

}  // namespace

void cmd_generate(const RunConfig& cfg, bool force) {
  sim::DatasetConfig dc;
  const std::vector<double> room = cfg.get_doubles("room");
  if (room.size() != 3) throw InvalidArgument("generate.room needs three values");
  dc.room.dims = geometry::Vec3(room[0], room[1], room[2]);
  const std::vector<double> beta = cfg.get_doubles("beta");
  if (beta.size() != 6) throw InvalidArgument("generate.beta needs six values");
  std::copy(beta.begin(), beta.end(), dc.room.beta.begin());
  dc.room.c_sound = cfg.get_double("c_sound");
  dc.room.fs = cfg.get_double("fs");
  dc.grid_spacing = cfg.get_double("grid_spacing");
  dc.grid_margin = cfg.get_double("grid_margin");
  dc.rx_height = cfg.get_double("rx_height");
  dc.n_tx = cfg.get_size("n_tx");
  dc.n_pairs = cfg.get_size("n_pairs");
  dc.orientations.clear();
  for (double d : cfg.get_doubles("orientations")) dc.orientations.push_back(quarter_turns(d));
  dc.max_order = static_cast<int>(cfg.get_int("max_order"));
  dc.length_s = cfg.get_double("length_s");
  dc.ear_offset = cfg.get_double("ear_offset");
  dc.gain_exponent = cfg.get_double("gain_exponent");
  dc.seed = cfg.get_u64("seed");
  dc.workers = std::max<std::size_t>(1, cfg.get_size("workers"));

  const fs::path out = cfg.get("out");
  if (fs::exists(out / sim::kManifestFile)) {
    refuse_existing(out / sim::kManifestFile, force);
    for (const char* name : {sim::kManifestFile, "mesh.obj", "config.ini", "rirs", training::kDefaultContextDir}) {
      fs::remove_all(out / name);
    }
  }
  fs::create_directories(out);
  const sim::DatasetManifest m = sim::generate_dataset(dc, out);
  cfg.write_effective(out / "config.ini");
  std::clog << "generated " << m.samples.size() << " samples (" << m.indices(sim::Split::Train).size() << " train, "
            << m.indices(sim::Split::Val).size() << " val, " << m.indices(sim::Split::Test).size() << " test) in "
            << out.string() << "\n";
}

void cmd_probe(const RunConfig& cfg, bool force) {
  const fs::path dataset = cfg.get("dataset");
  const sim::DatasetManifest m = sim::load_manifest(dataset);
  geometry::ProbeConfig pc;
  pc.n_rays = cfg.get_size("n_rays");
  pc.n_neighbors = cfg.get_size("n_neighbors");
  pc.n_thresholds = cfg.get_size("n_thresholds");
  pc.delta_min = cfg.get_double("delta_min");
  pc.delta_max = cfg.get_double("delta_max");
  if (!cfg.get("miss_distance").empty()) pc.miss_distance = cfg.get_double("miss_distance");
  const fs::path out = cfg.get("out").empty() ? dataset / training::kDefaultContextDir : fs::path(cfg.get("out"));
  const training::ProbeStats st =
      training::probe_positions(dataset, m, fs::absolute(out), pc, cfg.get_double("mesh_noise"), cfg.get_u64("seed"),
                                std::max<std::size_t>(1, cfg.get_size("workers")), force);
  cfg.write_effective(out / "config.ini");
  if (st.probed == 0) {
    std::clog << "all " << st.skipped << " context caches in " << out.string() << " are up to date; nothing to do\n";
  } else {
    std::clog << "probed " << st.probed << " positions into " << out.string() << "\n";
  }
}

void cmd_train(const RunConfig& cfg, bool force) {
  const fs::path dataset = cfg.get("dataset");
  const fs::path out = cfg.get("out");
  refuse_existing(out / training::kLastCheckpoint, force);
  const training::TrainConfig tc = train_config(cfg);
  const training::TrainingData data = training::load_training_data(dataset, context_dir(cfg, "contexts"), tc.workers);
  fs::create_directories(out);
  cfg.write_effective(out / "config.ini");

  model::MinafModel<float> net = training::make_model(data, tc);
  if (tc.verbose) {
    std::clog << "training " << tc.preset << " model (" << net.params().count() << " parameters) on "
              << training::training_subset(data.manifest, tc.data_fraction, tc.seed).size() << " samples\n";
  }
  const training::TrainResult r = training::train(net, data, tc, out);

  plot::LineChart chart;
  chart.title = "training loss";
  chart.x_label = "epoch";
  chart.y_label = "loss";
  plot::Series loss{"train total", {}, {}}, val{"val spec_l1", {}, {}};
  for (const auto& e : r.epochs) {
    loss.x.push_back(e.epoch);
    loss.y.push_back(e.mean_loss.total);
    val.x.push_back(e.epoch);
    val.y.push_back(e.val_spec_l1);
  }
  chart.series = {loss, val};
  plot::write_svg(chart, out / "loss.svg");
  std::clog << r.steps << " steps; best epoch " << r.best_epoch << " (val spec_l1 " << r.best_val << ")\n";
}

void cmd_eval(const RunConfig& cfg, bool force) {
  const fs::path out = cfg.get("out");
  refuse_existing(out / "report.json", force);
  const std::vector<ReconstructionMode> modes = parse_modes(cfg.get_list("modes"));
  const sim::Split split = sim::split_from_string(cfg.get("split"));
  const std::size_t workers = std::max<std::size_t>(1, cfg.get_size("workers"));
  training::LoadedModel lm = training::load_model(cfg.get("checkpoint"));
  const training::TrainingData data =
      training::load_training_data(cfg.get("dataset"), context_dir(cfg, "contexts"), workers);
  check_model_matches(lm.model.config(), data);

  const training::EvalResult ev = training::evaluate(lm.model, data, split, modes, cfg.get_u64("seed"), workers);
  fs::create_directories(out);
  cfg.write_effective(out / "config.ini");
  {
    std::ofstream f(out / "report.json");
    f << ev.to_json(cfg.get_bool("per_sample")).dump(2) << "\n";
    if (!f) throw DataError("cannot write report");
  }
  for (const auto& [mode, rep] : ev.reports) std::cout << rep.table(model::to_string(mode));
  std::cout << "predicted log-magnitude L1: " << ev.pred_spec_l1 << "\n";

  // EDC overlay for the first RIR of the split.
  const std::size_t s0 = data.manifest.indices(split).front();
  const auto preds = training::predict_samples(lm.model, data, {s0});
  for (ReconstructionMode mode : modes) {
    const dsp::Waveform& gt = data.waves[s0][0];
    const dsp::Waveform w = model::reconstruct_rir(preds[0].first, preds[0].second, mode, &data.specs[s0][0],
                                                   cfg.get_u64("seed"), gt.size(), gt.fs);
    plot::write_edc_svg(w, &gt, out / ("edc_" + model::to_string(mode) + ".svg"),
                        "EDC " + data.manifest.samples[s0].id + " left, " + model::to_string(mode));
  }
}

void cmd_predict(const RunConfig& cfg, bool force) {
  const fs::path out = cfg.get("out");
  refuse_existing(out / "pred.wav", force);
  training::LoadedModel lm = training::load_model(cfg.get("checkpoint"));
  const training::TrainingData data = training::load_training_data(cfg.get("dataset"), context_dir(cfg, "contexts"));
  check_model_matches(lm.model.config(), data);
  const ReconstructionMode mode = model::mode_from_string(cfg.get("mode"));

  const auto& m = data.manifest;
  std::optional<std::size_t> sample;
  model::RirQuery base;
  if (!cfg.get("sample").empty()) {
    for (std::size_t i = 0; i < m.samples.size(); ++i) {
      if (m.samples[i].id == cfg.get("sample")) sample = i;
    }
    if (!sample) throw DataError("no sample '" + cfg.get("sample") + "' in the manifest");
    base = data.query(*sample, 0);
  } else {
    auto find = [&](const std::string& id) {
      for (std::size_t i = 0; i < m.positions.size(); ++i) {
        if (m.positions[i].id == id) return i;
      }
      throw DataError("no position '" + id + "' in the manifest");
    };
    if (cfg.get("tx").empty() || cfg.get("rx").empty()) throw InvalidArgument("predict needs sample or tx and rx");
    const std::size_t tx = find(cfg.get("tx"));
    const std::size_t rx = find(cfg.get("rx"));
    const int orient = quarter_turns(cfg.get_double("orientation"));
    for (std::size_t i = 0; i < m.samples.size(); ++i) {
      if (m.samples[i].tx == tx && m.samples[i].rx == rx && m.samples[i].orientation == orient) sample = i;
    }
    base.tx = &data.contexts[tx];
    base.rx = &data.contexts[rx];
    base.p_tx = m.positions[tx].p;
    base.p_rx = m.positions[rx].p;
    base.orientation = orient;
  }
  if ((mode == ReconstructionMode::GTP || mode == ReconstructionMode::GTM_PreP) && !sample) {
    throw InvalidArgument(model::to_string(mode) + " needs a ground-truth sample; this pair is not in the dataset");
  }

  fs::create_directories(out);
  cfg.write_effective(out / "config.ini");
  const std::size_t n_samples = data.waves[0][0].size();
  const double fs_hz = data.waves[0][0].fs;
  std::vector<dsp::Waveform> channels;
  const char* names[2] = {"left", "right"};
  for (int c = 0; c < 2; ++c) {
    model::RirQuery q = base;
    q.channel = c;
    const auto [mag, ifr] = lm.model.predict_spectrogram(q);
    const dsp::ComplexSpectrogram* gt = sample ? &data.specs[*sample][static_cast<std::size_t>(c)] : nullptr;
    channels.push_back(model::reconstruct_rir(mag, ifr, mode, gt, cfg.get_u64("seed"), n_samples, fs_hz));
    plot::write_heatmap_png(mag, out / (std::string("mag_") + names[c] + ".png"));
    plot::write_heatmap_png(ifr, -1.0, 1.0, out / (std::string("if_") + names[c] + ".png"));
    const dsp::Waveform* gtw = sample ? &data.waves[*sample][static_cast<std::size_t>(c)] : nullptr;
    if (gt) {
      plot::write_heatmap_png(dsp::log_magnitude(*gt), out / (std::string("gt_mag_") + names[c] + ".png"));
      plot::write_heatmap_png(dsp::instantaneous_frequency(*gt), -1.0, 1.0,
                              out / (std::string("gt_if_") + names[c] + ".png"));
    }
    plot::write_edc_svg(channels.back(), gtw, out / (std::string("edc_") + names[c] + ".svg"),
                        std::string("EDC ") + names[c]);
  }
  dsp::write_wav(out / "pred.wav", channels);
  for (int c = 0; c < 2; ++c) {
    std::cout << names[c] << ": ";
    try {
      std::cout << "T60 " << metrics::t60(channels[static_cast<std::size_t>(c)]) << " s";
    } catch (const NotMeasurable&) {
      std::cout << "T60 not measurable";
    }
    if (sample) {
      try {
        std::cout << " (ground truth " << metrics::t60(data.waves[*sample][static_cast<std::size_t>(c)]) << " s)";
      } catch (const NotMeasurable&) {
      }
    }
    std::cout << "\n";
  }
}

void cmd_experiment(const RunConfig& cfg, bool force) {
  const fs::path out = cfg.get("out");
  refuse_existing(out / "results.csv", force);
  training::ExperimentConfig ec;
  ec.axis = training::axis_from_string(cfg.get("axis"));
  ec.values = cfg.get_list("values");
  ec.train = train_config(cfg);
  ec.modes = parse_modes(cfg.get_list("modes"));
  ec.split = sim::split_from_string(cfg.get("split"));
  ec.probe.n_rays = cfg.get_size("n_rays");
  ec.probe.n_neighbors = cfg.get_size("n_neighbors");
  ec.probe.n_thresholds = cfg.get_size("n_thresholds");
  ec.probe.delta_min = cfg.get_double("delta_min");
  ec.probe.delta_max = cfg.get_double("delta_max");
  ec.noise_seed = cfg.get_u64("noise_seed");
  fs::create_directories(out);
  cfg.write_effective(out / "config.ini");
  const auto rows = training::run_experiment_matrix(cfg.get("dataset"), ec, out);
  std::cout << training::kExperimentCsvHeader << "\n";
  for (const auto& r : rows) {
    std::cout << r.axis_value << "," << r.t60_pct << "," << r.c50_db << "," << r.edt_s << "," << r.spec_l1 << ","
              << r.mode << "\n";
  }
}

int run_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"minaf: geometry-context neural acoustic fields"};
  app.require_subcommand(1);
  struct Opts {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> sets;
    bool force = false;
  } o;
  const std::map<std::string, std::string> about{
      {"generate", "simulate the shoebox dataset"},
      {"probe", "probe geometric context for every dataset position"},
      {"train", "train a model"},
      {"eval", "score a checkpoint on a dataset split"},
      {"predict", "predict one binaural RIR with plots"},
      {"experiment", "sweep one axis: data_fraction, probe_rays, mesh_noise or ablation"}};
  for (const std::string& name : commands()) {
    CLI::App* sub = app.add_subcommand(name, about.at(name));
    sub->add_option("--config", o.config, "INI config file")->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "override the section's seed");
    sub->add_option("--out", o.out, "override the output directory");
    sub->add_option("--set", o.sets, "override a key: key=value or section.key=value")->take_all();
    sub->add_flag("--force", o.force, "overwrite existing outputs");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    RunConfig cfg(command);
    if (!o.config.empty()) cfg.load_file(o.config);
    for (const auto& s : o.sets) cfg.set_assignment(s);
    if (o.seed) cfg.set("seed", std::to_string(*o.seed));
    if (!o.out.empty()) cfg.set("out", o.out);

    if (command == "generate") cmd_generate(cfg, o.force);
    else if (command == "probe") cmd_probe(cfg, o.force);
    else if (command == "train") cmd_train(cfg, o.force);
    else if (command == "eval") cmd_eval(cfg, o.force);
    else if (command == "predict") cmd_predict(cfg, o.force);
    else cmd_experiment(cfg, o.force);
    return kExitOk;
  } catch (const TrainingDiverged& e) {
    std::cerr << "minaf " << command << ": training diverged: " << e.what() << "\n";
    return kExitDiverged;
  } catch (const InvalidArgument& e) {
    std::cerr << "minaf " << command << ": " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "minaf " << command << ": " << e.what() << "\n";
    return kExitData;
  }
}

}  // namespace minaf::pipeline
