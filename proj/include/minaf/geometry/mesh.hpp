#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace minaf::geometry {

using Vec3 = Eigen::Vector3d;

struct Aabb {
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = Vec3::Constant(-std::numeric_limits<double>::infinity());

  void extend(const Vec3& p) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  void extend(const Aabb& b) {
    lo = lo.cwiseMin(b.lo);
    hi = hi.cwiseMax(b.hi);
  }
  bool empty() const { return (lo.array() > hi.array()).any(); }
  Vec3 extent() const { return hi - lo; }
  double diagonal() const { return empty() ? 0.0 : extent().norm(); }
  bool contains(const Vec3& p) const {
    return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all();
  }
  bool contains(const Aabb& b) const { return contains(b.lo) && contains(b.hi); }
};

using Triangle = std::array<std::uint32_t, 3>;

/// Triangle soup with unit face normals. Construct through `from_triangles`
/// so that indices are validated, zero-area faces dropped, and normals filled.
class TriangleMesh {
 public:
  TriangleMesh() = default;

  /// Validates indices, drops degenerate faces, computes unit normals.
  /// Throws InvalidArgument on out-of-range indices.
  static TriangleMesh from_triangles(std::vector<Vec3> vertices, std::vector<Triangle> triangles);

  const std::vector<Vec3>& vertices() const { return vertices_; }
  const std::vector<Triangle>& triangles() const { return triangles_; }
  const std::vector<Vec3>& normals() const { return normals_; }
  std::size_t num_triangles() const { return triangles_.size(); }
  bool empty() const { return triangles_.empty(); }

  const Vec3& vertex(std::size_t face, int corner) const {
    return vertices_[triangles_[face][static_cast<std::size_t>(corner)]];
  }
  Aabb bounds() const;
  Aabb triangle_bounds(std::size_t face) const;
  Vec3 centroid(std::size_t face) const;

 private:
  std::vector<Vec3> vertices_;
  std::vector<Triangle> triangles_;
  std::vector<Vec3> normals_;
};

/// Closed axis-aligned box as 12 triangles with outward-wound faces.
TriangleMesh box_mesh(const Vec3& lo, const Vec3& hi);

/// Wavefront OBJ reader: `v` and `f` records only; polygonal faces are
/// fan-triangulated; `f` entries may carry `/vt/vn` suffixes and negative
/// (relative) indices. Throws DataError on unreadable or malformed input.
TriangleMesh load_obj(const std::filesystem::path& path);
void save_obj(const TriangleMesh& mesh, const std::filesystem::path& path);

/// Displaces every vertex by an independent N(0, sigma^2 I) draw from a
/// stream keyed by `seed` and recomputes face normals.
TriangleMesh add_vertex_noise(const TriangleMesh& mesh, double sigma, std::uint64_t seed);

}  // namespace minaf::geometry
