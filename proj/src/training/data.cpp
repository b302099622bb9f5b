#include "minaf/training/data.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <sstream>

#include "minaf/common/error.hpp"
#include "minaf/common/parallel.hpp"
#include "minaf/dsp/wav.hpp"
#include "minaf/geometry/bvh.hpp"
#include "minaf/geometry/mesh.hpp"

namespace minaf::training {

using nlohmann::json;

namespace {

std::string file_hash(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 14];
  while (in) {
    in.read(buf, sizeof buf);
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

fs::path resolve(const fs::path& dataset_dir, const fs::path& p) { return p.is_absolute() ? p : dataset_dir / p; }

}  // namespace

json probe_config_json(const geometry::ProbeConfig& cfg) {
  json j{{"n_rays", cfg.n_rays},
         {"n_neighbors", cfg.n_neighbors},
         {"n_thresholds", cfg.n_thresholds},
         {"delta_min", cfg.delta_min},
         {"delta_max", cfg.delta_max}};
  j["miss_distance"] = cfg.miss_distance ? json(*cfg.miss_distance) : json(nullptr);
  return j;
}

geometry::ProbeConfig probe_config_from_json(const json& j) {
  geometry::ProbeConfig c;
  c.n_rays = j.at("n_rays").get<std::size_t>();
  c.n_neighbors = j.at("n_neighbors").get<std::size_t>();
  c.n_thresholds = j.at("n_thresholds").get<std::size_t>();
  c.delta_min = j.at("delta_min").get<double>();
  c.delta_max = j.at("delta_max").get<double>();
  if (j.contains("miss_distance") && !j.at("miss_distance").is_null()) c.miss_distance = j.at("miss_distance").get<double>();
  return c;
}

json ProbeStamp::to_json() const {
  return {{"probe", probe_config_json(probe)},
          {"miss_distance", miss_distance},
          {"mesh_noise", mesh_noise},
          {"noise_seed", noise_seed},
          {"mesh_hash", mesh_hash}};
}

ProbeStamp ProbeStamp::from_json(const json& j) {
  try {
    ProbeStamp s;
    s.probe = probe_config_from_json(j.at("probe"));
    s.miss_distance = j.at("miss_distance").get<double>();
    s.mesh_noise = j.at("mesh_noise").get<double>();
    s.noise_seed = j.at("noise_seed").get<std::uint64_t>();
    s.mesh_hash = j.at("mesh_hash").get<std::string>();
    return s;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed probe stamp: ") + e.what());
  }
}

fs::path context_path(const fs::path& context_dir, const sim::Position& p) { return context_dir / (p.id + ".mnfc"); }

ProbeStamp read_probe_stamp(const fs::path& context_dir) {
  const fs::path path = context_dir / kProbeStampFile;
  std::ifstream in(path);
  if (!in) throw DataError("missing context cache stamp " + path.string() + " (run `minaf probe` first)");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError("cannot parse " + path.string() + ": " + e.what());
  }
  return ProbeStamp::from_json(j);
}

ProbeStats probe_positions(const fs::path& dataset_dir, const sim::DatasetManifest& manifest,
                           const fs::path& context_dir_in, const geometry::ProbeConfig& cfg, double mesh_noise,
                           std::uint64_t noise_seed, std::size_t workers, bool force) {
  cfg.validate();
  require(mesh_noise >= 0.0 && std::isfinite(mesh_noise), "mesh noise must be a finite value >= 0");
  const fs::path context_dir = resolve(dataset_dir, context_dir_in);
  const fs::path mesh_path = dataset_dir / manifest.mesh;
  if (!fs::exists(mesh_path)) throw DataError("missing mesh " + mesh_path.string());

  geometry::TriangleMesh mesh = geometry::load_obj(mesh_path);
  if (mesh_noise > 0.0) mesh = geometry::add_vertex_noise(mesh, mesh_noise, noise_seed);

  ProbeStamp stamp;
  stamp.probe = cfg;
  stamp.miss_distance = cfg.resolved_miss_distance(mesh.bounds());
  stamp.mesh_noise = mesh_noise;
  stamp.noise_seed = mesh_noise > 0.0 ? noise_seed : 0;
  stamp.mesh_hash = file_hash(mesh_path);

  ProbeStats stats;
  const fs::path stamp_path = context_dir / kProbeStampFile;
  if (!force && fs::exists(stamp_path)) {
    bool current = false;
    try {
      current = read_probe_stamp(context_dir).to_json() == stamp.to_json();
    } catch (const DataError&) {
      current = false;
    }
    if (current) {
      for (const auto& p : manifest.positions) current = current && fs::exists(context_path(context_dir, p));
    }
    if (current) {
      stats.skipped = manifest.positions.size();
      return stats;
    }
  }

  fs::create_directories(context_dir);
  fs::remove(stamp_path);
  const geometry::Bvh bvh(mesh);
  const geometry::RayFan fan = geometry::RayFan::fibonacci(cfg.n_rays, cfg.n_neighbors);
  // Each position writes its own file, so the worker count cannot change any byte.
  parallel_for(manifest.positions.size(), workers, [&](std::size_t i) {
    const auto& p = manifest.positions[i];
    const geometry::ContextRaw raw = geometry::probe_context(bvh, mesh, p.p, fan, cfg);
    geometry::write_context_cache(raw, context_path(context_dir, p));
  });
  stats.probed = manifest.positions.size();

  const fs::path tmp = stamp_path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    out << stamp.to_json().dump(2) << "\n";
    if (!out) throw DataError("cannot write " + tmp.string());
  }
  fs::rename(tmp, stamp_path);
  return stats;
}

RirTarget make_target(const dsp::ComplexSpectrogram& s) {
  const dsp::MagSpec mag = dsp::log_magnitude(s);
  const dsp::IfSpec ifr = dsp::instantaneous_frequency(s);
  const dsp::RealGrid lin = dsp::linear_magnitude(mag);
  const std::vector<double> edc = dsp::frame_energy_edc(lin);
  const auto F = static_cast<Eigen::Index>(s.n_bins());
  const auto T = static_cast<Eigen::Index>(s.n_frames());
  RirTarget t;
  t.mag.resize(T, F);
  t.ifr.resize(T, F);
  t.edc.resize(1, T);
  for (Eigen::Index f = 0; f < F; ++f) {
    for (Eigen::Index k = 0; k < T; ++k) {
      const auto fu = static_cast<std::size_t>(f);
      const auto ku = static_cast<std::size_t>(k);
      t.mag(k, f) = static_cast<float>(mag.at(fu, ku));
      t.ifr(k, f) = std::abs(s.at(fu, ku)) < dsp::kMagEpsilon ? 0.0f : static_cast<float>(ifr.at(fu, ku));
    }
  }
  for (Eigen::Index k = 0; k < T; ++k) t.edc(0, k) = static_cast<float>(edc[static_cast<std::size_t>(k)]);
  return t;
}

model::RirQuery TrainingData::query(std::size_t sample, int channel) const {
  require(sample < manifest.samples.size(), "sample index out of range");
  require(channel == 0 || channel == 1, "channel must be 0 or 1");
  const sim::Sample& s = manifest.samples[sample];
  model::RirQuery q;
  q.tx = &contexts[s.tx];
  q.rx = &contexts[s.rx];
  q.p_tx = manifest.positions[s.tx].p;
  q.p_rx = manifest.positions[s.rx].p;
  q.orientation = s.orientation;
  q.channel = channel;
  return q;
}

model::ModelConfig TrainingData::model_config(const model::ModelConfig& arch) const {
  model::ModelConfig c = arch;
  c.n_rays = geometry_config.n_rays;
  c.n_thresholds = geometry_config.n_thresholds;
  c.n_freq = geometry_config.n_freq;
  c.n_frames = geometry_config.n_frames;
  c.scene_lo = geometry_config.scene_lo;
  c.scene_hi = geometry_config.scene_hi;
  c.distance_scale = geometry_config.distance_scale;
  c.validate();
  return c;
}

TrainingData load_training_data(const fs::path& dataset_dir, const fs::path& context_dir_in, std::size_t workers) {
  TrainingData d;
  d.dir = dataset_dir;
  d.manifest = sim::load_manifest(dataset_dir);
  require(!d.manifest.samples.empty(), "dataset has no samples");
  const fs::path context_dir = resolve(dataset_dir, context_dir_in);
  d.stamp = read_probe_stamp(context_dir);

  const fs::path mesh_path = dataset_dir / d.manifest.mesh;
  if (!fs::exists(mesh_path)) throw DataError("missing mesh " + mesh_path.string());
  if (file_hash(mesh_path) != d.stamp.mesh_hash) {
    throw DataError("context caches in " + context_dir.string() + " were probed from a different mesh");
  }
  const geometry::Aabb bounds = geometry::load_obj(mesh_path).bounds();

  model::ModelConfig& g = d.geometry_config;
  g.n_rays = d.stamp.probe.n_rays;
  g.n_thresholds = d.stamp.probe.n_thresholds;
  g.scene_lo = bounds.lo;
  g.scene_hi = bounds.hi;
  g.distance_scale = d.stamp.miss_distance;

  d.contexts.resize(d.manifest.positions.size());
  for (std::size_t i = 0; i < d.manifest.positions.size(); ++i) {
    const fs::path path = context_path(context_dir, d.manifest.positions[i]);
    if (!fs::exists(path)) throw DataError("missing context cache " + path.string() + " (run `minaf probe`)");
    geometry::ContextRaw raw;
    try {
      raw = geometry::read_context_cache(path);
    } catch (const InvalidArgument& e) {
      throw DataError(e.what());
    }
    if (raw.n_rays() != g.n_rays || raw.n_thresholds() != g.n_thresholds) {
      throw DataError("context cache " + path.string() + " does not match its probe stamp");
    }
    d.contexts[i] = model::ContextInput::from_raw(raw, g);
  }

  const std::size_t n = d.manifest.samples.size();
  d.waves.resize(n);
  d.specs.resize(n);
  d.targets.resize(n);
  const dsp::StftConfig stft;
  parallel_for(n, workers, [&](std::size_t i) {
    const fs::path path = dataset_dir / d.manifest.samples[i].wav;
    if (!fs::exists(path)) throw DataError("missing RIR " + path.string());
    std::vector<dsp::Waveform> ch = dsp::read_wav(path);
    if (ch.size() != 2) throw DataError(path.string() + " is not stereo");
    for (int c = 0; c < 2; ++c) {
      d.specs[i][c] = dsp::stft(ch[c], stft);
      d.targets[i][c] = make_target(d.specs[i][c]);
      d.waves[i][c] = std::move(ch[c]);
    }
  });
  const std::size_t frames = d.specs[0][0].n_frames();
  for (std::size_t i = 0; i < n; ++i) {
    for (int c = 0; c < 2; ++c) {
      if (d.specs[i][c].n_frames() != frames) throw DataError("RIRs in the dataset differ in length");
    }
  }
  g.n_freq = stft.n_bins();
  g.n_frames = frames;
  return d;
}

}  // namespace minaf::training
