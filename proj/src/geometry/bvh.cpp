#include "minaf/geometry/bvh.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "minaf/common/error.hpp"

namespace minaf::geometry {

std::optional<double> intersect_triangle(const TriangleMesh& mesh, std::size_t face,
                                         const Vec3& origin, const Vec3& direction) {
  const Vec3& a = mesh.vertex(face, 0);
  const Vec3 e1 = mesh.vertex(face, 1) - a;
  const Vec3 e2 = mesh.vertex(face, 2) - a;
  const Vec3 pvec = direction.cross(e2);
  const double det = e1.dot(pvec);
  if (det == 0.0) return std::nullopt;
  const double inv_det = 1.0 / det;
  const Vec3 tvec = origin - a;
  const double u = tvec.dot(pvec) * inv_det;
  if (u < 0.0 || u > 1.0) return std::nullopt;
  const Vec3 qvec = tvec.cross(e1);
  const double v = direction.dot(qvec) * inv_det;
  if (v < 0.0 || u + v > 1.0) return std::nullopt;
  const double t = e2.dot(qvec) * inv_det;
  if (!(t > kSelfHitEpsilon)) return std::nullopt;
  return t;
}

namespace {

RayHit make_hit(const TriangleMesh& mesh, std::uint32_t face, double t, const Vec3& direction) {
  RayHit hit;
  hit.distance = t;
  hit.face = face;
  hit.normal = mesh.normals()[face];
  if (hit.normal.dot(direction) > 0.0) hit.normal = -hit.normal;
  return hit;
}

bool better(double t, std::uint32_t face, double best_t, std::uint32_t best_face) {
  return t < best_t || (t == best_t && face < best_face);
}

// Slab test; returns entry distance or +inf when the box is missed.
double box_entry(const Aabb& box, const Vec3& origin, const Vec3& inv_dir, double t_max) {
  double t0 = 0.0;
  double t1 = t_max;
  for (int k = 0; k < 3; ++k) {
    double ta = (box.lo[k] - origin[k]) * inv_dir[k];
    double tb = (box.hi[k] - origin[k]) * inv_dir[k];
    if (std::isnan(ta) || std::isnan(tb)) {
      // Ray parallel to the slab and starting on its plane: inside iff within bounds.
      if (origin[k] < box.lo[k] || origin[k] > box.hi[k]) return std::numeric_limits<double>::infinity();
      continue;
    }
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) return std::numeric_limits<double>::infinity();
  }
  return t0;
}

}  // namespace

std::optional<RayHit> brute_force_first_hit(const TriangleMesh& mesh, const Vec3& origin,
                                            const Vec3& direction) {
  double best_t = std::numeric_limits<double>::infinity();
  std::uint32_t best_face = std::numeric_limits<std::uint32_t>::max();
  for (std::uint32_t f = 0; f < mesh.num_triangles(); ++f) {
    if (auto t = intersect_triangle(mesh, f, origin, direction); t && better(*t, f, best_t, best_face)) {
      best_t = *t;
      best_face = f;
    }
  }
  if (!std::isfinite(best_t)) return std::nullopt;
  return make_hit(mesh, best_face, best_t, direction);
}

Bvh::Bvh(const TriangleMesh& mesh, std::uint32_t leaf_size)
    : leaf_size_(std::max<std::uint32_t>(1, leaf_size)), num_triangles_(mesh.num_triangles()) {
  require(!mesh.empty(), "build_bvh: mesh has no triangles");
  const auto n = static_cast<std::uint32_t>(mesh.num_triangles());
  order_.resize(n);
  std::vector<Vec3> centroids(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    order_[i] = i;
    centroids[i] = mesh.centroid(i);
  }
  nodes_.reserve(2 * static_cast<std::size_t>(n) / leaf_size_ + 1);
  build(mesh, centroids, 0, n);
}

std::uint32_t Bvh::build(const TriangleMesh& mesh, std::vector<Vec3>& centroids, std::uint32_t begin,
                         std::uint32_t end) {
  const auto index = static_cast<std::uint32_t>(nodes_.size());
  nodes_.emplace_back();
  Aabb box;
  Aabb centroid_box;
  for (std::uint32_t i = begin; i < end; ++i) {
    box.extend(mesh.triangle_bounds(order_[i]));
    centroid_box.extend(centroids[order_[i]]);
  }
  // Pad slightly so boundary hits are never culled by rounding in the slab test.
  const double pad = 1e-9 * std::max(1.0, box.extent().cwiseAbs().maxCoeff());
  box.lo.array() -= pad;
  box.hi.array() += pad;
  nodes_[index].box = box;

  const Vec3 spread = centroid_box.extent();
  int axis = 0;
  spread.maxCoeff(&axis);
  if (end - begin <= leaf_size_ || spread[axis] <= 0.0) {
    nodes_[index].left = begin;
    nodes_[index].count = end - begin;
    return index;
  }
  const std::uint32_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](std::uint32_t a, std::uint32_t b) {
                     const double ca = centroids[a][axis];
                     const double cb = centroids[b][axis];
                     return ca < cb || (ca == cb && a < b);
                   });
  const std::uint32_t left = build(mesh, centroids, begin, mid);
  const std::uint32_t right = build(mesh, centroids, mid, end);
  nodes_[index].left = left;
  nodes_[index].right = right;
  nodes_[index].count = 0;
  return index;
}

std::optional<RayHit> Bvh::first_hit(const TriangleMesh& mesh, const Vec3& origin,
                                     const Vec3& direction) const {
  require(mesh.num_triangles() == num_triangles_, "Bvh::first_hit: mesh does not match hierarchy");
  const Vec3 inv_dir = direction.cwiseInverse();
  double best_t = std::numeric_limits<double>::infinity();
  std::uint32_t best_face = std::numeric_limits<std::uint32_t>::max();

  std::array<std::uint32_t, 128> stack{};
  std::size_t top = 0;
  stack[top++] = 0;
  while (top > 0) {
    const Node& node = nodes_[stack[--top]];
    // Equal entry distance is still explored so ties keep the lower face id.
    if (box_entry(node.box, origin, inv_dir, best_t) > best_t) continue;
    if (node.is_leaf()) {
      for (std::uint32_t i = node.left; i < node.left + node.count; ++i) {
        const std::uint32_t f = order_[i];
        if (auto t = intersect_triangle(mesh, f, origin, direction); t && better(*t, f, best_t, best_face)) {
          best_t = *t;
          best_face = f;
        }
      }
      continue;
    }
    const double tl = box_entry(nodes_[node.left].box, origin, inv_dir, best_t);
    const double tr = box_entry(nodes_[node.right].box, origin, inv_dir, best_t);
    // Push the farther child first so the nearer one is visited next.
    if (tl <= tr) {
      if (std::isfinite(tr)) stack[top++] = node.right;
      if (std::isfinite(tl)) stack[top++] = node.left;
    } else {
      if (std::isfinite(tl)) stack[top++] = node.left;
      if (std::isfinite(tr)) stack[top++] = node.right;
    }
  }
  if (!std::isfinite(best_t)) return std::nullopt;
  return make_hit(mesh, best_face, best_t, direction);
}

}  // namespace minaf::geometry
