#include "minaf/sim/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>

#include "minaf/common/error.hpp"
#include "minaf/common/parallel.hpp"
#include "minaf/common/rng.hpp"
#include "minaf/dsp/wav.hpp"

namespace minaf::sim {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "train";
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  throw DataError("unknown split tag '" + s + "'");
}

namespace {

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }
Vec3 json_vec(const json& j) { return Vec3(j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()); }

json room_json(const ShoeboxRoom& room) {
  return {{"dims", vec_json(room.dims)}, {"beta", room.beta}, {"c_sound", room.c_sound}, {"fs", room.fs}};
}

ShoeboxRoom json_room(const json& j) {
  ShoeboxRoom room;
  room.dims = json_vec(j.at("dims"));
  room.beta = j.at("beta").get<std::array<double, 6>>();
  room.c_sound = j.at("c_sound").get<double>();
  room.fs = j.at("fs").get<double>();
  return room;
}

std::string numbered(const char* prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%05zu", prefix, i);
  return buf;
}

}  // namespace

json DatasetConfig::to_json() const {
  return {{"room", room_json(room)},       {"grid_spacing", grid_spacing}, {"grid_margin", grid_margin},
          {"rx_height", rx_height},        {"n_tx", n_tx},                 {"n_pairs", n_pairs},
          {"orientations", orientations},  {"max_order", max_order},       {"length_s", length_s},
          {"ear_offset", ear_offset},      {"gain_exponent", gain_exponent}, {"seed", seed}};
}

std::vector<std::size_t> DatasetManifest::indices(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].split == s) out.push_back(i);
  }
  return out;
}

json DatasetManifest::to_json() const {
  json pos = json::array();
  for (const auto& p : positions) pos.push_back({{"id", p.id}, {"p", vec_json(p.p)}, {"context", p.context}});
  json smp = json::array();
  for (const auto& s : samples) {
    smp.push_back({{"id", s.id},
                   {"tx", positions[s.tx].id},
                   {"rx", positions[s.rx].id},
                   {"p_tx", vec_json(positions[s.tx].p)},
                   {"p_rx", vec_json(positions[s.rx].p)},
                   {"orientation_deg", 90 * s.orientation},
                   {"wav", s.wav},
                   {"channels", json::array({"left", "right"})},
                   {"tx_context", positions[s.tx].context},
                   {"rx_context", positions[s.rx].context},
                   {"split", to_string(s.split)}});
  }
  return {{"format", "minaf-dataset"}, {"version", 1},         {"room", room_json(room)},
          {"mesh", mesh},              {"length_s", length_s}, {"ear_offset", ear_offset},
          {"gain_exponent", gain_exponent}, {"max_order", max_order}, {"seed", seed},
          {"positions", pos},          {"samples", smp}};
}

DatasetManifest DatasetManifest::from_json(const json& j) {
  try {
    DatasetManifest m;
    m.room = json_room(j.at("room"));
    m.mesh = j.at("mesh").get<std::string>();
    m.length_s = j.at("length_s").get<double>();
    m.ear_offset = j.at("ear_offset").get<double>();
    m.gain_exponent = j.at("gain_exponent").get<double>();
    m.max_order = j.at("max_order").get<int>();
    m.seed = j.at("seed").get<std::uint64_t>();
    std::map<std::string, std::size_t> by_id;
    for (const auto& p : j.at("positions")) {
      by_id[p.at("id").get<std::string>()] = m.positions.size();
      m.positions.push_back({p.at("id").get<std::string>(), json_vec(p.at("p")), p.at("context").get<std::string>()});
    }
    std::set<std::string> ids;
    for (const auto& s : j.at("samples")) {
      Sample smp;
      smp.id = s.at("id").get<std::string>();
      if (!ids.insert(smp.id).second) throw DataError("duplicate sample id " + smp.id);
      const auto tx = by_id.find(s.at("tx").get<std::string>());
      const auto rx = by_id.find(s.at("rx").get<std::string>());
      if (tx == by_id.end() || rx == by_id.end()) throw DataError("sample " + smp.id + " references unknown position");
      smp.tx = tx->second;
      smp.rx = rx->second;
      const int deg = s.at("orientation_deg").get<int>();
      if (deg % 90 != 0 || deg < 0 || deg >= 360) throw DataError("sample " + smp.id + " has invalid orientation");
      smp.orientation = deg / 90;
      smp.wav = s.at("wav").get<std::string>();
      smp.split = split_from_string(s.at("split").get<std::string>());
      m.samples.push_back(std::move(smp));
    }
    return m;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed manifest: ") + e.what());
  }
}

DatasetManifest load_manifest(const fs::path& dataset_dir) {
  const fs::path path = dataset_dir / kManifestFile;
  std::ifstream in(path);
  if (!in) throw DataError("missing manifest " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError("unparseable manifest " + path.string() + ": " + e.what());
  }
  return DatasetManifest::from_json(j);
}

void save_manifest(const DatasetManifest& m, const fs::path& dataset_dir) {
  std::ofstream out(dataset_dir / kManifestFile);
  if (!out) throw DataError("cannot write manifest in " + dataset_dir.string());
  out << m.to_json().dump(2) << '\n';
}

std::vector<Vec3> receiver_grid(const DatasetConfig& cfg) {
  require(cfg.grid_spacing > 0.0, "receiver_grid: spacing must be positive");
  std::vector<Vec3> out;
  const Vec3& dims = cfg.room.dims;
  if (!(cfg.rx_height > 0.0 && cfg.rx_height < dims.z())) return out;
  const double tol = 1e-9;
  for (double x = cfg.grid_margin; x <= dims.x() - cfg.grid_margin + tol; x += cfg.grid_spacing) {
    for (double y = cfg.grid_margin; y <= dims.y() - cfg.grid_margin + tol; y += cfg.grid_spacing) {
      const Vec3 p(x, y, cfg.rx_height);
      // Both ears must stay inside for every orientation.
      if (x - cfg.ear_offset > 0 && x + cfg.ear_offset < dims.x() && y - cfg.ear_offset > 0 &&
          y + cfg.ear_offset < dims.y()) {
        out.push_back(p);
      }
    }
  }
  return out;
}

DatasetManifest generate_dataset(const DatasetConfig& cfg, const fs::path& out_dir) {
  cfg.room.validate();
  require(cfg.n_tx >= 1, "generate_dataset: need at least one transmitter");
  require(!cfg.orientations.empty(), "generate_dataset: need at least one orientation");
  for (int o : cfg.orientations) require(o >= 0 && o < 4, "generate_dataset: orientation index must be in 0..3");
  const std::vector<Vec3> grid = receiver_grid(cfg);
  require(!grid.empty(), "generate_dataset: receiver grid has no interior points");

  std::error_code ec;
  fs::create_directories(out_dir / "rirs", ec);
  if (ec) throw DataError("cannot create output directory " + out_dir.string() + ": " + ec.message());

  DatasetManifest m;
  m.room = cfg.room;
  m.mesh = "mesh.obj";
  m.length_s = cfg.length_s;
  m.ear_offset = cfg.ear_offset;
  m.gain_exponent = cfg.gain_exponent;
  m.max_order = cfg.max_order;
  m.seed = cfg.seed;

  // Transmitters: uniform in a 0.5 m inset box, rejected if closer than
  // 0.3 m to any receiver or 1 m to another transmitter.
  CounterRng rng(cfg.seed, 0x5458ULL);
  const Vec3& dims = cfg.room.dims;
  const double margin = std::min(0.5, 0.25 * dims.minCoeff());
  std::vector<Vec3> tx;
  for (int attempt = 0; tx.size() < cfg.n_tx; ++attempt) {
    if (attempt > 100000) throw InvalidArgument("generate_dataset: cannot place transmitters");
    const Vec3 p(rng.uniform(margin, dims.x() - margin), rng.uniform(margin, dims.y() - margin),
                 rng.uniform(margin, dims.z() - margin));
    bool clear = true;
    for (const Vec3& r : grid) clear = clear && (p - r).norm() >= 0.3;
    for (const Vec3& t : tx) clear = clear && (p - t).norm() >= (attempt < 50000 ? 1.0 : 0.3);
    if (clear) tx.push_back(p);
  }
  for (std::size_t i = 0; i < tx.size(); ++i) {
    m.positions.push_back({numbered("tx", i), tx[i], "contexts/" + numbered("tx", i) + ".mnfc"});
  }
  for (std::size_t i = 0; i < grid.size(); ++i) {
    m.positions.push_back({numbered("rx", i), grid[i], "contexts/" + numbered("rx", i) + ".mnfc"});
  }

  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t t = 0; t < tx.size(); ++t) {
    for (std::size_t r = 0; r < grid.size(); ++r) pairs.emplace_back(t, tx.size() + r);
  }
  if (cfg.n_pairs > 0 && cfg.n_pairs < pairs.size()) {
    std::vector<std::size_t> pick(pairs.size());
    for (std::size_t i = 0; i < pick.size(); ++i) pick[i] = i;
    CounterRng pair_rng(cfg.seed, 0x50414952ULL);
    shuffle(pick, pair_rng);
    pick.resize(cfg.n_pairs);
    std::sort(pick.begin(), pick.end());
    std::vector<std::pair<std::size_t, std::size_t>> kept;
    for (std::size_t i : pick) kept.push_back(pairs[i]);
    pairs = std::move(kept);
  }

  for (const auto& [t, r] : pairs) {
    for (int o : cfg.orientations) {
      Sample s;
      s.id = numbered("s", m.samples.size());
      s.tx = t;
      s.rx = r;
      s.orientation = o;
      s.wav = "rirs/" + s.id + ".wav";
      m.samples.push_back(s);
    }
  }

  // 80/5/15 split by seeded shuffle.
  const std::size_t n = m.samples.size();
  const auto n_train = static_cast<std::size_t>(std::llround(0.80 * static_cast<double>(n)));
  const auto n_val = std::min(n - n_train, static_cast<std::size_t>(std::llround(0.05 * static_cast<double>(n))));
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  CounterRng split_rng(cfg.seed, 0x53504C4954ULL);
  shuffle(order, split_rng);
  for (std::size_t k = 0; k < n; ++k) {
    m.samples[order[k]].split = k < n_train ? Split::Train : (k < n_train + n_val ? Split::Val : Split::Test);
  }

  std::vector<std::vector<ImageSource>> images(tx.size());
  for (std::size_t t = 0; t < tx.size(); ++t) images[t] = image_sources(cfg.room, tx[t], cfg.max_order);

  parallel_for(m.samples.size(), cfg.workers, [&](std::size_t i) {
    const Sample& s = m.samples[i];
    ReceiverSpec rx;
    rx.pos = m.positions[s.rx].p;
    rx.orientation = s.orientation;
    rx.ear_offset = cfg.ear_offset;
    rx.gain_exponent = cfg.gain_exponent;
    const auto rir = render_rir(cfg.room, images[s.tx], rx, cfg.length_s);
    dsp::write_wav(out_dir / s.wav, {rir[0], rir[1]});
  });

  geometry::save_obj(cfg.room.mesh(), out_dir / m.mesh);
  fs::create_directories(out_dir / "contexts", ec);
  save_manifest(m, out_dir);
  return m;
}

}  // namespace minaf::sim
