#include "minaf/pipeline/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "minaf/common/error.hpp"

namespace minaf::pipeline {

namespace {

using Table = std::vector<KeySpec>;

const std::map<std::string, Table>& tables() {
  static const std::map<std::string, Table> t{
      {"generate",
       {{"out", "data/shoebox", "dataset directory to create"},
        {"room", "4,3,2.5", "room dimensions x,y,z in meters (z vertical)"},
        {"beta", "0.9,0.9,0.9,0.9,0.8,0.8", "wall reflection coefficients x0,x1,y0,y1,z0,z1"},
        {"c_sound", "343", "speed of sound, m/s"},
        {"fs", "16000", "sample rate, Hz"},
        {"grid_spacing", "0.4", "receiver grid pitch, m"},
        {"grid_margin", "0.4", "receiver keep-out band along the walls, m"},
        {"rx_height", "1.5", "receiver height, m"},
        {"n_tx", "4", "number of transmitter positions"},
        {"n_pairs", "200", "transmitter/receiver pairs kept (0 = all)"},
        {"orientations", "0,90,180,270", "receiver headings in degrees"},
        {"max_order", "40", "image-source reflection order"},
        {"length_s", "0.5", "RIR length, s"},
        {"ear_offset", "0.09", "half the ear spacing, m"},
        {"gain_exponent", "1.0", "cardioid exponent of the ear gain"},
        {"seed", "42", "placement, pair and split seed"},
        {"workers", "1", "rendering threads"}}},
      {"probe",
       {{"dataset", "data/shoebox", "dataset directory"},
        {"out", "", "cache directory (empty = <dataset>/contexts)"},
        {"n_rays", "1024", "probe rays per position"},
        {"n_neighbors", "8", "neighbors for mu and sigma"},
        {"n_thresholds", "8", "occupancy thresholds"},
        {"delta_min", "0.5", "smallest occupancy threshold, m"},
        {"delta_max", "10", "largest occupancy threshold, m"},
        {"miss_distance", "", "distance for escaped rays (empty = automatic)"},
        {"mesh_noise", "0", "Gaussian vertex noise sigma, m"},
        {"seed", "7", "vertex noise seed"},
        {"workers", "1", "probing threads"}}},
      {"train",
       {{"dataset", "data/shoebox", "dataset directory"},
        {"contexts", "", "cache directory (empty = <dataset>/contexts)"},
        {"out", "runs/train", "run directory for logs and checkpoints"},
        {"preset", "desk", "model size: desk, paper or tiny"},
        {"lr0", "5e-4", "initial learning rate"},
        {"lr_decay", "0.9", "learning-rate factor per epoch"},
        {"batch_frames", "256", "frame queries per step when rirs_per_step = 0"},
        {"rirs_per_step", "4", "channel RIRs per step (whole samples, both channels)"},
        {"alpha", "0.1", "Schroeder loss weight"},
        {"epochs", "50", "training epochs"},
        {"seed", "42", "initialization and shuffling seed"},
        {"data_fraction", "1.0", "fraction of the training split used"},
        {"ablation", "none", "comma list of drop_context, drop_n, drop_mu_sigma, drop_occ, no_time_embed"},
        {"separate", "false", "train the IF core without updating the shared front end"},
        {"workers", "1", "threads for data loading"},
        {"max_steps", "0", "stop after this many steps (0 = no cap)"},
        {"checkpoint_every", "0", "keep a checkpoint every N epochs (0 = best and last only)"},
        {"verbose", "true", "print one line per epoch"}}},
      {"eval",
       {{"dataset", "data/shoebox", "dataset directory"},
        {"contexts", "", "cache directory (empty = <dataset>/contexts)"},
        {"checkpoint", "runs/train/best.mnfw", "model checkpoint"},
        {"out", "runs/eval", "output directory"},
        {"split", "test", "train, val or test"},
        {"modes", "GTP,PreP,RanP,GLim,GTM_PreP", "reconstruction modes"},
        {"per_sample", "false", "include per-RIR errors in the report"},
        {"seed", "42", "seed for random-phase and Griffin-Lim initialization"},
        {"workers", "1", "reconstruction threads"}}},
      {"predict",
       {{"dataset", "data/shoebox", "dataset directory"},
        {"contexts", "", "cache directory (empty = <dataset>/contexts)"},
        {"checkpoint", "runs/train/best.mnfw", "model checkpoint"},
        {"out", "runs/predict", "output directory"},
        {"sample", "", "sample id; overrides tx, rx and orientation"},
        {"tx", "", "transmitter position id"},
        {"rx", "", "receiver position id"},
        {"orientation", "0", "receiver heading in degrees (0, 90, 180, 270)"},
        {"mode", "PreP", "reconstruction mode (GTP and GTM_PreP need a dataset sample)"},
        {"seed", "42", "seed for random-phase and Griffin-Lim initialization"}}},
      {"experiment",
       {{"dataset", "data/shoebox", "dataset directory (probed for data_fraction and ablation)"},
        {"out", "runs/experiment", "output directory"},
        {"axis", "data_fraction", "data_fraction, probe_rays, mesh_noise or ablation"},
        {"values", "", "comma list of axis values (empty = the default sweep)"},
        {"modes", "GTP,PreP", "reconstruction modes scored per run"},
        {"split", "test", "evaluation split"},
        {"preset", "desk", "model size: desk, paper or tiny"},
        {"epochs", "50", "training epochs per run"},
        {"lr0", "5e-4", "initial learning rate"},
        {"lr_decay", "0.9", "learning-rate factor per epoch"},
        {"rirs_per_step", "4", "channel RIRs per step"},
        {"alpha", "0.1", "Schroeder loss weight"},
        {"data_fraction", "1.0", "training fraction when not the swept axis"},
        {"ablation", "none", "ablation when not the swept axis"},
        {"max_steps", "0", "stop each run after this many steps (0 = no cap)"},
        {"seed", "42", "training seed"},
        {"n_neighbors", "8", "probe neighbors (probe_rays and mesh_noise axes)"},
        {"n_thresholds", "8", "probe thresholds"},
        {"n_rays", "1024", "probe rays for the mesh_noise axis"},
        {"delta_min", "0.5", "smallest occupancy threshold, m"},
        {"delta_max", "10", "largest occupancy threshold, m"},
        {"noise_seed", "7", "vertex noise seed"},
        {"workers", "1", "threads for probing, loading and reconstruction"}}}};
  return t;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

const KeySpec* find_key(const std::string& section, const std::string& key) {
  for (const KeySpec& k : section_keys(section)) {
    if (k.key == key) return &k;
  }
  return nullptr;
}

}  // namespace

const std::vector<std::string>& commands() {
  static const std::vector<std::string> c{"generate", "probe", "train", "eval", "predict", "experiment"};
  return c;
}

const std::vector<KeySpec>& section_keys(const std::string& command) {
  const auto it = tables().find(command);
  if (it == tables().end()) throw InvalidArgument("unknown command or section '" + command + "'");
  return it->second;
}

RunConfig::RunConfig(std::string command) : command_(std::move(command)) {
  section_keys(command_);
  for (const auto& [section, keys] : tables()) {
    for (const KeySpec& k : keys) values_[section][k.key] = k.default_value;
  }
}

void RunConfig::load_file(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw InvalidArgument("config file " + path.string() + " does not exist");
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(path.string(), tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw InvalidArgument("cannot parse " + path.string() + ": " + e.what());
  }
  for (const auto& [section, body] : tree) {
    if (!tables().count(section)) {
      if (body.empty()) throw InvalidArgument(path.string() + ": key '" + section + "' is outside any section");
      throw InvalidArgument(path.string() + ": unknown section [" + section + "]");
    }
    for (const auto& [key, value] : body) {
      if (!find_key(section, key)) {
        throw InvalidArgument(path.string() + ": unknown key '" + key + "' in [" + section + "]");
      }
      values_[section][key] = trim(value.get_value<std::string>());
    }
  }
}

void RunConfig::set(const std::string& key, const std::string& value) {
  std::string section = command_;
  std::string name = key;
  if (const auto dot = key.find('.'); dot != std::string::npos) {
    section = key.substr(0, dot);
    name = key.substr(dot + 1);
  }
  if (!tables().count(section)) throw InvalidArgument("unknown section '" + section + "' in '" + key + "'");
  if (!find_key(section, name)) throw InvalidArgument("unknown key '" + name + "' for " + section);
  values_[section][name] = trim(value);
}

void RunConfig::set_assignment(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw InvalidArgument("expected key=value, got '" + assignment + "'");
  set(trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

const std::string& RunConfig::get(const std::string& key) const {
  const auto& sec = values_.at(command_);
  const auto it = sec.find(key);
  if (it == sec.end()) throw InvalidArgument("no key '" + key + "' for " + command_);
  return it->second;
}

std::string RunConfig::get(const std::string& section, const std::string& key) const {
  const auto s = values_.find(section);
  if (s == values_.end() || !s->second.count(key)) throw InvalidArgument("no key '" + section + "." + key + "'");
  return s->second.at(key);
}

double RunConfig::get_double(const std::string& key) const {
  const std::string& v = get(key);
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  throw InvalidArgument(command_ + "." + key + " = '" + v + "' is not a number");
}

std::int64_t RunConfig::get_int(const std::string& key) const {
  const std::string& v = get(key);
  std::int64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) {
    throw InvalidArgument(command_ + "." + key + " = '" + v + "' is not an integer");
  }
  return out;
}

std::size_t RunConfig::get_size(const std::string& key) const {
  const std::int64_t v = get_int(key);
  if (v < 0) throw InvalidArgument(command_ + "." + key + " must be >= 0");
  return static_cast<std::size_t>(v);
}

std::uint64_t RunConfig::get_u64(const std::string& key) const {
  const std::string& v = get(key);
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) {
    throw InvalidArgument(command_ + "." + key + " = '" + v + "' is not an unsigned integer");
  }
  return out;
}

bool RunConfig::get_bool(const std::string& key) const {
  std::string v = get(key);
  std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw InvalidArgument(command_ + "." + key + " = '" + v + "' is not a boolean");
}

std::vector<std::string> RunConfig::get_list(const std::string& key) const {
  std::vector<std::string> out;
  std::stringstream ss(get(key));
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<double> RunConfig::get_doubles(const std::string& key) const {
  std::vector<double> out;
  for (const std::string& s : get_list(key)) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(s, &used));
      if (used != s.size()) throw InvalidArgument("");
    } catch (const std::exception&) {
      throw InvalidArgument(command_ + "." + key + ": '" + s + "' is not a number");
    }
  }
  return out;
}

std::string RunConfig::effective_ini() const {
  std::ostringstream os;
  os << "[" << command_ << "]\n";
  for (const KeySpec& k : section_keys(command_)) {
    os << "; " << k.doc << " (default: " << (k.default_value.empty() ? "empty" : k.default_value) << ")\n";
    os << k.key << " = " << values_.at(command_).at(k.key) << "\n";
  }
  return os.str();
}

void RunConfig::write_effective(const std::filesystem::path& path) const {
  std::ofstream out(path);
  out << effective_ini();
  if (!out) throw DataError("cannot write " + path.string());
}

}  // namespace minaf::pipeline
