#include "minaf/training/experiment.hpp"

#include <cstdio>
#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>

#include "minaf/common/error.hpp"
#include "minaf/pipeline/plot.hpp"

namespace minaf::training {

namespace fs = std::filesystem;

std::string to_string(Axis a) {
  switch (a) {
    case Axis::DataFraction: return "data_fraction";
    case Axis::ProbeRays: return "probe_rays";
    case Axis::MeshNoise: return "mesh_noise";
    case Axis::Ablation: return "ablation";
  }
  return "data_fraction";
}

Axis axis_from_string(const std::string& s) {
  for (Axis a : {Axis::DataFraction, Axis::ProbeRays, Axis::MeshNoise, Axis::Ablation}) {
    if (to_string(a) == s) return a;
  }
  throw InvalidArgument("unknown experiment axis '" + s +
                        "' (expected data_fraction, probe_rays, mesh_noise or ablation)");
}

std::vector<std::string> default_axis_values(Axis a) {
  switch (a) {
    case Axis::DataFraction: return {"0.05", "0.1", "0.25", "0.5", "0.75", "1.0"};
    case Axis::ProbeRays: return {"64", "128", "256", "512", "1024", "2048"};
    case Axis::MeshNoise: return {"0", "0.05", "0.1", "0.2", "0.3", "0.5"};
    case Axis::Ablation: return {"none", "drop_context", "drop_n", "drop_mu_sigma", "drop_occ", "no_time_embed"};
  }
  return {};
}

namespace {

double parse_number(const std::string& s) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  require(used == s.size() && !s.empty(), "axis value '" + s + "' is not a number");
  return v;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_plots(const std::vector<ExperimentRow>& rows, const ExperimentConfig& cfg,
                 const std::vector<std::string>& values, const fs::path& out_dir) {
  const bool numeric = cfg.axis != Axis::Ablation;
  struct Metric {
    const char* key;
    const char* label;
    double ExperimentRow::*field;
  };
  const Metric metrics[] = {{"t60_pct", "T60 error (%)", &ExperimentRow::t60_pct},
                            {"c50_db", "C50 error (dB)", &ExperimentRow::c50_db},
                            {"edt_s", "EDT error (s)", &ExperimentRow::edt_s},
                            {"spec_l1", "spectral L1", &ExperimentRow::spec_l1}};
  for (const Metric& m : metrics) {
    plot::LineChart chart;
    chart.title = std::string(m.label) + " vs " + to_string(cfg.axis);
    chart.x_label = numeric ? to_string(cfg.axis) : "ablation index";
    chart.y_label = m.label;
    chart.log_x = cfg.axis == Axis::ProbeRays;
    for (ReconstructionMode mode : cfg.modes) {
      plot::Series s;
      s.name = model::to_string(mode);
      for (const auto& r : rows) {
        if (r.mode != s.name) continue;
        std::size_t idx = 0;
        while (idx < values.size() && values[idx] != r.axis_value) ++idx;
        s.x.push_back(numeric ? parse_number(r.axis_value) : static_cast<double>(idx));
        s.y.push_back(r.*m.field);
      }
      chart.series.push_back(std::move(s));
    }
    plot::write_svg(chart, out_dir / (std::string(m.key) + ".svg"));
  }
}

}  // namespace

std::vector<ExperimentRow> run_experiment_matrix(const fs::path& dataset_dir, const ExperimentConfig& cfg,
                                                 const fs::path& out_dir) {
  cfg.train.validate();
  const std::vector<std::string> values = cfg.values.empty() ? default_axis_values(cfg.axis) : cfg.values;
  require(!values.empty(), "experiment needs at least one axis value");
  fs::create_directories(out_dir);

  std::optional<TrainingData> shared;
  const bool reprobe = cfg.axis == Axis::ProbeRays || cfg.axis == Axis::MeshNoise;
  if (!reprobe) shared = load_training_data(dataset_dir, kDefaultContextDir, cfg.train.workers);

  std::vector<ExperimentRow> rows;
  for (const std::string& value : values) {
    const fs::path run_dir = out_dir / (to_string(cfg.axis) + "_" + value);
    fs::create_directories(run_dir);
    TrainConfig tc = cfg.train;
    std::optional<TrainingData> local;
    if (cfg.axis == Axis::DataFraction) {
      tc.data_fraction = parse_number(value);
    } else if (cfg.axis == Axis::Ablation) {
      tc.ablation = model::Ablation::from_name(value);
    } else {
      geometry::ProbeConfig pc = cfg.probe;
      double noise = 0.0;
      if (cfg.axis == Axis::ProbeRays) {
        const double n = parse_number(value);
        require(n >= 2 && n == std::floor(n), "probe_rays values must be integers >= 2");
        pc.n_rays = static_cast<std::size_t>(n);
      } else {
        noise = parse_number(value);
      }
      const fs::path ctx_dir = fs::absolute(run_dir / kDefaultContextDir);
      const sim::DatasetManifest manifest = sim::load_manifest(dataset_dir);
      probe_positions(dataset_dir, manifest, ctx_dir, pc, noise, cfg.noise_seed, cfg.train.workers);
      local = load_training_data(dataset_dir, ctx_dir, cfg.train.workers);
    }
    const TrainingData& data = local ? *local : *shared;

    MinafModel<float> model = make_model(data, tc);
    train(model, data, tc, run_dir);
    LoadedModel best = load_model(run_dir / kBestCheckpoint);
    const EvalResult ev = evaluate(best.model, data, cfg.split, cfg.modes, tc.seed, tc.workers);
    {
      std::ofstream out(run_dir / "eval.json");
      out << ev.to_json().dump(2) << "\n";
    }
    for (const auto& [mode, r] : ev.reports) {
      rows.push_back({value, r.t60_err_percent, r.c50_err_db, r.edt_err_sec, r.spec_l1, model::to_string(mode)});
    }
  }
  write_experiment_csv(rows, out_dir / "results.csv");
  write_plots(rows, cfg, values, out_dir);
  return rows;
}

void write_experiment_csv(const std::vector<ExperimentRow>& rows, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << kExperimentCsvHeader << "\n";
  for (const auto& r : rows) {
    out << r.axis_value << "," << fmt(r.t60_pct) << "," << fmt(r.c50_db) << "," << fmt(r.edt_s) << ","
        << fmt(r.spec_l1) << "," << r.mode << "\n";
  }
}

std::vector<ExperimentRow> read_experiment_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != kExperimentCsvHeader) throw DataError(path.string() + ": unexpected CSV header");
  std::vector<ExperimentRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 6) throw DataError(path.string() + ": malformed row '" + line + "'");
    rows.push_back({f[0], std::stod(f[1]), std::stod(f[2]), std::stod(f[3]), std::stod(f[4]), f[5]});
  }
  return rows;
}

}  // namespace minaf::training
