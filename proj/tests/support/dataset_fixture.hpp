#pragma once

#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <unistd.h>

#include "minaf/model/minaf.hpp"
#include "minaf/sim/dataset.hpp"
#include "minaf/training/data.hpp"

namespace minaf::testing {

namespace fs = std::filesystem;

/// Fresh directory under the system temp dir, removed on destruction.
struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name)
      : path(fs::temp_directory_path() / ("minaf_" + name + "_" + std::to_string(::getpid()))) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

inline std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline geometry::ProbeConfig probe_for(const model::ModelConfig& cfg) {
  geometry::ProbeConfig p;
  p.n_rays = cfg.n_rays;
  p.n_thresholds = cfg.n_thresholds;
  p.n_neighbors = std::min<std::size_t>(8, cfg.n_rays - 1);
  return p;
}

/// Small simulated dataset, probed for `arch`. Low reflection order keeps it fast.
inline sim::DatasetManifest make_dataset(const fs::path& dir, std::size_t n_pairs, std::vector<int> orientations,
                                         const model::ModelConfig& arch, int max_order = 12,
                                         bool all_train = false) {
  sim::DatasetConfig dc;
  dc.n_pairs = n_pairs;
  dc.orientations = std::move(orientations);
  dc.max_order = max_order;
  sim::DatasetManifest m = sim::generate_dataset(dc, dir);
  if (all_train) {
    for (auto& s : m.samples) s.split = sim::Split::Train;
    sim::save_manifest(m, dir);
  }
  training::probe_positions(dir, m, training::kDefaultContextDir, probe_for(arch), 0.0, 0, 1);
  return m;
}

}  // namespace minaf::testing
