#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "minaf/geometry/mesh.hpp"

namespace minaf::geometry {

/// Hits closer than this (meters) are ignored so probes sitting on a
/// surface do not report the surface itself.
inline constexpr double kSelfHitEpsilon = 1e-6;

struct RayHit {
  double distance = 0.0;
  std::uint32_t face = 0;
  /// Face normal oriented so that normal.dot(direction) <= 0.
  Vec3 normal = Vec3::Zero();
};

/// Moller-Trumbore intersection parameter t for one triangle, or nullopt.
/// Only t > kSelfHitEpsilon is reported.
std::optional<double> intersect_triangle(const TriangleMesh& mesh, std::size_t face,
                                         const Vec3& origin, const Vec3& direction);

/// Exhaustive nearest hit over every triangle. Ties on distance resolve to
/// the lower face id. Reference oracle for the BVH.
std::optional<RayHit> brute_force_first_hit(const TriangleMesh& mesh, const Vec3& origin,
                                            const Vec3& direction);

/// Binary bounding volume hierarchy over a mesh's triangles, built by median
/// split along the widest centroid axis. Immutable after construction and
/// safe for concurrent queries.
class Bvh {
 public:
  struct Node {
    Aabb box;
    std::uint32_t left = 0;   // child index (internal) or first slot in order (leaf)
    std::uint32_t right = 0;  // child index (internal)
    std::uint32_t count = 0;  // number of triangles; 0 for internal nodes
    bool is_leaf() const { return count > 0; }
  };

  /// Throws InvalidArgument for an empty mesh.
  explicit Bvh(const TriangleMesh& mesh, std::uint32_t leaf_size = 4);

  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<std::uint32_t>& order() const { return order_; }
  const Node& root() const { return nodes_.front(); }
  std::uint32_t leaf_size() const { return leaf_size_; }

  /// Nearest hit with the same tie rule as brute_force_first_hit. `mesh` must
  /// be the mesh the hierarchy was built from.
  std::optional<RayHit> first_hit(const TriangleMesh& mesh, const Vec3& origin,
                                  const Vec3& direction) const;

 private:
  std::uint32_t build(const TriangleMesh& mesh, std::vector<Vec3>& centroids, std::uint32_t begin,
                      std::uint32_t end);

  std::vector<Node> nodes_;
  std::vector<std::uint32_t> order_;
  std::uint32_t leaf_size_;
  std::size_t num_triangles_ = 0;
};

inline std::optional<RayHit> ray_first_hit(const Bvh& bvh, const TriangleMesh& mesh,
                                           const Vec3& origin, const Vec3& direction) {
  return bvh.first_hit(mesh, origin, direction);
}

}  // namespace minaf::geometry
