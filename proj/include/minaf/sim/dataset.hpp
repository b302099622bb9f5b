#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "minaf/sim/image_source.hpp"

namespace minaf::sim {

enum class Split { Train, Val, Test };
std::string to_string(Split s);
Split split_from_string(const std::string& s);

struct DatasetConfig {
  ShoeboxRoom room;
  double grid_spacing = 0.4;   // receiver grid pitch, meters
  double grid_margin = 0.4;    // keep-out band along the walls
  double rx_height = 1.5;
  std::size_t n_tx = 4;
  /// Keep a seeded subset of this many (Tx, Rx) pairs; 0 keeps all.
  std::size_t n_pairs = 200;
  std::vector<int> orientations{0, 1, 2, 3};
  int max_order = 40;
  double length_s = 0.5;
  double ear_offset = 0.09;
  double gain_exponent = 1.0;
  std::uint64_t seed = 42;
  std::size_t workers = 1;

  nlohmann::json to_json() const;
};

struct Position {
  std::string id;
  Vec3 p;
  std::string context;  // relative path of the probe cache file
};

struct Sample {
  std::string id;
  std::size_t tx = 0;  // index into positions
  std::size_t rx = 0;
  int orientation = 0;
  std::string wav;     // stereo: channel 0 left, channel 1 right
  Split split = Split::Train;
};

struct DatasetManifest {
  ShoeboxRoom room;
  std::string mesh;  // relative path of the room OBJ
  double length_s = 0.5;
  double ear_offset = 0.09;
  double gain_exponent = 1.0;
  int max_order = 40;
  std::uint64_t seed = 42;
  std::vector<Position> positions;
  std::vector<Sample> samples;

  std::vector<std::size_t> indices(Split s) const;
  nlohmann::json to_json() const;
  static DatasetManifest from_json(const nlohmann::json& j);
};

inline constexpr const char* kManifestFile = "manifest.json";

/// Receivers on a grid at rx_height, n_tx seeded transmitters, every pair
/// rendered at every orientation; WAVs, mesh.obj and manifest.json written
/// to out_dir. Splits 80/5/15 by seeded shuffle.
DatasetManifest generate_dataset(const DatasetConfig& cfg, const std::filesystem::path& out_dir);

DatasetManifest load_manifest(const std::filesystem::path& dataset_dir);
void save_manifest(const DatasetManifest& m, const std::filesystem::path& dataset_dir);

/// Grid receiver positions (may be empty).
std::vector<Vec3> receiver_grid(const DatasetConfig& cfg);

}  // namespace minaf::sim
