#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "minaf/geometry/bvh.hpp"
#include "minaf/geometry/mesh.hpp"

namespace minaf::geometry {

/// N near-uniform unit directions: y = 1 - 2(i + 0.5)/N, r = sqrt(1 - y^2),
/// phi = i * pi * (3 - sqrt 5), direction = (r cos phi, y, r sin phi).
std::vector<Vec3> fibonacci_directions(std::size_t n);

/// Probe directions plus, for each ray, its `n_neighbors` angularly nearest
/// rays (self excluded, ties to the lower index).
class RayFan {
 public:
  RayFan(std::vector<Vec3> directions, std::size_t n_neighbors);
  static RayFan fibonacci(std::size_t n, std::size_t n_neighbors) {
    return RayFan(fibonacci_directions(n), n_neighbors);
  }

  std::size_t size() const { return directions_.size(); }
  std::size_t n_neighbors() const { return n_neighbors_; }
  const std::vector<Vec3>& directions() const { return directions_; }
  std::span<const std::uint32_t> neighbors(std::size_t ray) const {
    return {neighbors_.data() + ray * n_neighbors_, n_neighbors_};
  }

 private:
  std::vector<Vec3> directions_;
  std::size_t n_neighbors_;
  std::vector<std::uint32_t> neighbors_;
};

struct ProbeConfig {
  std::size_t n_rays = 1024;
  std::size_t n_neighbors = 8;
  std::size_t n_thresholds = 8;
  double delta_min = 0.5;
  double delta_max = 10.0;
  /// Distance assigned to escaped rays; unset means default_miss_distance().
  std::optional<double> miss_distance;

  void validate() const;
  /// max(1.5 * scene diagonal, 1.5 * delta_max), so misses never fall under a threshold.
  double default_miss_distance(const Aabb& scene) const;
  double resolved_miss_distance(const Aabb& scene) const {
    return miss_distance.value_or(default_miss_distance(scene));
  }
  /// delta_min .. delta_max, linearly spaced, n_thresholds entries.
  std::vector<double> thresholds() const;
};

/// Raw local geometry seen from one position.
struct ContextRaw {
  std::vector<double> distance;  // N
  std::vector<double> normal;    // N x 3, row-major
  std::vector<double> mean;      // N, neighbor-distance mean
  std::vector<double> stddev;    // N, neighbor-distance population std
  std::vector<double> occupancy; // N_tau, rays with distance <= delta_k
  std::size_t n_neighbors = 0;
  bool outside_scene = false;    // probe beyond the inflated mesh bounds

  std::size_t n_rays() const { return distance.size(); }
  std::size_t n_thresholds() const { return occupancy.size(); }
  bool operator==(const ContextRaw&) const = default;
};

ContextRaw probe_context(const Bvh& bvh, const TriangleMesh& mesh, const Vec3& position,
                         const RayFan& fan, const ProbeConfig& cfg);

/// One-record-per-position binary cache: "MNFC", version, N, N_theta, N_tau
/// (u32 LE) followed by d, n, mu, sigma, occ as f32 LE.
inline constexpr std::uint32_t kContextCacheVersion = 1;
void write_context_cache(const ContextRaw& ctx, const std::filesystem::path& path);
ContextRaw read_context_cache(const std::filesystem::path& path);

}  // namespace minaf::geometry
