#include "minaf/geometry/mesh.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

#include "minaf/common/error.hpp"
#include "minaf/common/rng.hpp"

namespace minaf::geometry {

TriangleMesh TriangleMesh::from_triangles(std::vector<Vec3> vertices,
                                          std::vector<Triangle> triangles) {
  TriangleMesh mesh;
  mesh.vertices_ = std::move(vertices);
  mesh.triangles_.reserve(triangles.size());
  mesh.normals_.reserve(triangles.size());
  for (const Triangle& tri : triangles) {
    for (std::uint32_t idx : tri) {
      if (idx >= mesh.vertices_.size()) {
        throw InvalidArgument("triangle references vertex " + std::to_string(idx) + " of " +
                              std::to_string(mesh.vertices_.size()));
      }
    }
    const Vec3& a = mesh.vertices_[tri[0]];
    const Vec3& b = mesh.vertices_[tri[1]];
    const Vec3& c = mesh.vertices_[tri[2]];
    const Vec3 cross = (b - a).cross(c - a);
    const double scale = std::max({(b - a).squaredNorm(), (c - a).squaredNorm(), (c - b).squaredNorm()});
    const double len = cross.norm();
    if (!(len > 1e-12 * scale) || !std::isfinite(len)) continue;  // zero-area
    mesh.triangles_.push_back(tri);
    mesh.normals_.push_back(cross / len);
  }
  return mesh;
}

Aabb TriangleMesh::bounds() const {
  Aabb box;
  for (const Triangle& tri : triangles_) {
    for (std::uint32_t idx : tri) box.extend(vertices_[idx]);
  }
  return box;
}

Aabb TriangleMesh::triangle_bounds(std::size_t face) const {
  Aabb box;
  for (int c = 0; c < 3; ++c) box.extend(vertex(face, c));
  return box;
}

Vec3 TriangleMesh::centroid(std::size_t face) const {
  return (vertex(face, 0) + vertex(face, 1) + vertex(face, 2)) / 3.0;
}

TriangleMesh box_mesh(const Vec3& lo, const Vec3& hi) {
  require((hi.array() > lo.array()).all(), "box_mesh: hi must exceed lo on every axis");
  std::vector<Vec3> v;
  for (int i = 0; i < 8; ++i) {
    v.emplace_back((i & 1) ? hi.x() : lo.x(), (i & 2) ? hi.y() : lo.y(), (i & 4) ? hi.z() : lo.z());
  }
  // Outward winding per face.
  std::vector<Triangle> t = {
      {0, 4, 6}, {0, 6, 2},  // x = lo
      {1, 3, 7}, {1, 7, 5},  // x = hi
      {0, 1, 5}, {0, 5, 4},  // y = lo
      {2, 6, 7}, {2, 7, 3},  // y = hi
      {0, 2, 3}, {0, 3, 1},  // z = lo
      {4, 5, 7}, {4, 7, 6},  // z = hi
  };
  return TriangleMesh::from_triangles(std::move(v), std::move(t));
}

namespace {

std::uint32_t resolve_index(const std::string& token, std::size_t n_vertices, std::size_t line_no) {
  const std::string head = token.substr(0, token.find('/'));
  long idx = 0;
  try {
    std::size_t used = 0;
    idx = std::stol(head, &used);
    if (used != head.size()) throw std::invalid_argument(head);
  } catch (const std::exception&) {
    throw DataError("OBJ line " + std::to_string(line_no) + ": bad face index '" + token + "'");
  }
  long resolved = idx > 0 ? idx - 1 : static_cast<long>(n_vertices) + idx;
  if (idx == 0 || resolved < 0 || resolved >= static_cast<long>(n_vertices)) {
    throw DataError("OBJ line " + std::to_string(line_no) + ": face index out of range");
  }
  return static_cast<std::uint32_t>(resolved);
}

}  // namespace

TriangleMesh load_obj(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open OBJ file " + path.string());
  std::vector<Vec3> vertices;
  std::vector<Triangle> triangles;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ss(line);
    std::string tag;
    if (!(ss >> tag)) continue;
    if (tag == "v") {
      double x, y, z;
      if (!(ss >> x >> y >> z)) {
        throw DataError("OBJ line " + std::to_string(line_no) + ": malformed vertex");
      }
      vertices.emplace_back(x, y, z);
    } else if (tag == "f") {
      std::vector<std::uint32_t> poly;
      std::string tok;
      while (ss >> tok) poly.push_back(resolve_index(tok, vertices.size(), line_no));
      if (poly.size() < 3) {
        throw DataError("OBJ line " + std::to_string(line_no) + ": face with fewer than 3 vertices");
      }
      for (std::size_t k = 1; k + 1 < poly.size(); ++k) {
        triangles.push_back({poly[0], poly[k], poly[k + 1]});
      }
    }
  }
  return TriangleMesh::from_triangles(std::move(vertices), std::move(triangles));
}

void save_obj(const TriangleMesh& mesh, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write OBJ file " + path.string());
  out << std::setprecision(17);
  for (const Vec3& v : mesh.vertices()) out << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  for (const Triangle& t : mesh.triangles()) {
    out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
  }
  if (!out) throw DataError("failed writing OBJ file " + path.string());
}

TriangleMesh add_vertex_noise(const TriangleMesh& mesh, double sigma, std::uint64_t seed) {
  require(sigma >= 0.0, "add_vertex_noise: sigma must be non-negative");
  std::vector<Vec3> vertices = mesh.vertices();
  if (sigma > 0.0) {
    CounterRng rng(seed, 0x6E6F697365ULL);
    for (Vec3& v : vertices) {
      const double dx = rng.normal(), dy = rng.normal(), dz = rng.normal();
      v += sigma * Vec3(dx, dy, dz);
    }
  }
  return TriangleMesh::from_triangles(std::move(vertices), mesh.triangles());
}

}  // namespace minaf::geometry
