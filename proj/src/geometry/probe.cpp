#include "minaf/geometry/probe.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <numeric>

#include "minaf/common/error.hpp"

namespace minaf::geometry {

std::vector<Vec3> fibonacci_directions(std::size_t n) {
  require(n >= 1, "fibonacci_directions: N must be >= 1");
  const double golden_angle = std::numbers::pi * (3.0 - std::sqrt(5.0));
  std::vector<Vec3> dirs(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double y = 1.0 - 2.0 * (static_cast<double>(i) + 0.5) / static_cast<double>(n);
    const double r = std::sqrt(std::max(0.0, 1.0 - y * y));
    const double phi = static_cast<double>(i) * golden_angle;
    dirs[i] = Vec3(r * std::cos(phi), y, r * std::sin(phi));
  }
  return dirs;
}

RayFan::RayFan(std::vector<Vec3> directions, std::size_t n_neighbors)
    : directions_(std::move(directions)), n_neighbors_(n_neighbors) {
  const std::size_t n = directions_.size();
  require(n >= n_neighbors_ + 1, "RayFan: need at least N_theta + 1 rays");
  for (const Vec3& d : directions_) {
    require(std::abs(d.norm() - 1.0) <= 1e-9, "RayFan: directions must be unit length");
  }
  neighbors_.resize(n * n_neighbors_);
  std::vector<std::uint32_t> candidates(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t k = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) candidates[k++] = static_cast<std::uint32_t>(j);
    }
    // Larger cosine means smaller angle.
    auto closer = [&](std::uint32_t a, std::uint32_t b) {
      const double ca = directions_[i].dot(directions_[a]);
      const double cb = directions_[i].dot(directions_[b]);
      return ca > cb || (ca == cb && a < b);
    };
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<long>(n_neighbors_),
                      candidates.end(), closer);
    std::copy_n(candidates.begin(), n_neighbors_, neighbors_.begin() + static_cast<long>(i * n_neighbors_));
  }
}

void ProbeConfig::validate() const {
  require(n_rays >= n_neighbors + 1, "ProbeConfig: N must be >= N_theta + 1");
  require(n_neighbors >= 1, "ProbeConfig: N_theta must be >= 1");
  require(n_thresholds >= 1, "ProbeConfig: N_tau must be >= 1");
  require(delta_min < delta_max, "ProbeConfig: delta_min must be < delta_max");
  if (miss_distance) require(*miss_distance > delta_max, "ProbeConfig: d_miss must exceed delta_max");
}

double ProbeConfig::default_miss_distance(const Aabb& scene) const {
  return std::max(1.5 * scene.diagonal(), 1.5 * delta_max);
}

std::vector<double> ProbeConfig::thresholds() const {
  std::vector<double> out(n_thresholds);
  if (n_thresholds == 1) {
    out[0] = delta_min;
    return out;
  }
  const double step = (delta_max - delta_min) / static_cast<double>(n_thresholds - 1);
  for (std::size_t k = 0; k < n_thresholds; ++k) out[k] = delta_min + step * static_cast<double>(k);
  out.back() = delta_max;
  return out;
}

ContextRaw probe_context(const Bvh& bvh, const TriangleMesh& mesh, const Vec3& position,
                         const RayFan& fan, const ProbeConfig& cfg) {
  cfg.validate();
  require(fan.size() == cfg.n_rays && fan.n_neighbors() == cfg.n_neighbors,
          "probe_context: ray fan does not match probe config");
  const Aabb scene = mesh.bounds();
  const double d_miss = cfg.resolved_miss_distance(scene);
  const std::size_t n = fan.size();

  ContextRaw ctx;
  ctx.n_neighbors = cfg.n_neighbors;
  ctx.distance.resize(n);
  ctx.normal.resize(3 * n);
  ctx.mean.resize(n);
  ctx.stddev.resize(n);

  Aabb inflated = scene;
  inflated.lo.array() -= d_miss;
  inflated.hi.array() += d_miss;
  ctx.outside_scene = !inflated.contains(position);

  for (std::size_t i = 0; i < n; ++i) {
    const Vec3& dir = fan.directions()[i];
    Vec3 normal;
    if (auto hit = bvh.first_hit(mesh, position, dir)) {
      ctx.distance[i] = hit->distance;
      normal = hit->normal;
    } else {
      ctx.distance[i] = d_miss;
      normal = -dir;
    }
    for (int c = 0; c < 3; ++c) ctx.normal[3 * i + static_cast<std::size_t>(c)] = normal[c];
  }

  const auto k = static_cast<double>(cfg.n_neighbors);
  for (std::size_t i = 0; i < n; ++i) {
    double sum = 0.0;
    for (std::uint32_t j : fan.neighbors(i)) sum += ctx.distance[j];
    const double mu = sum / k;
    double var = 0.0;
    for (std::uint32_t j : fan.neighbors(i)) var += (ctx.distance[j] - mu) * (ctx.distance[j] - mu);
    ctx.mean[i] = mu;
    ctx.stddev[i] = std::sqrt(var / k);
  }

  const std::vector<double> deltas = cfg.thresholds();
  ctx.occupancy.resize(deltas.size());
  for (std::size_t t = 0; t < deltas.size(); ++t) {
    ctx.occupancy[t] = static_cast<double>(
        std::count_if(ctx.distance.begin(), ctx.distance.end(), [&](double d) { return d <= deltas[t]; }));
  }
  return ctx;
}

namespace {

static_assert(std::endian::native == std::endian::little, "cache I/O assumes a little-endian host");

void put_u32(std::ofstream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }

void put_f32s(std::ofstream& out, const std::vector<double>& values) {
  std::vector<float> buf(values.begin(), values.end());
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 4));
}

std::uint32_t get_u32(std::ifstream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 4);
  return v;
}

std::vector<double> get_f32s(std::ifstream& in, std::size_t n) {
  std::vector<float> buf(n);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n * 4));
  return {buf.begin(), buf.end()};
}

}  // namespace

void write_context_cache(const ContextRaw& ctx, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write context cache " + path.string());
  out.write("MNFC", 4);
  put_u32(out, kContextCacheVersion);
  put_u32(out, static_cast<std::uint32_t>(ctx.n_rays()));
  put_u32(out, static_cast<std::uint32_t>(ctx.n_neighbors));
  put_u32(out, static_cast<std::uint32_t>(ctx.n_thresholds()));
  put_f32s(out, ctx.distance);
  put_f32s(out, ctx.normal);
  put_f32s(out, ctx.mean);
  put_f32s(out, ctx.stddev);
  put_f32s(out, ctx.occupancy);
  if (!out) throw DataError("failed writing context cache " + path.string());
}

ContextRaw read_context_cache(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("missing context cache " + path.string());
  char magic[4] = {};
  in.read(magic, 4);
  if (std::memcmp(magic, "MNFC", 4) != 0) throw DataError("bad context cache magic in " + path.string());
  if (get_u32(in) != kContextCacheVersion) throw DataError("unsupported context cache version in " + path.string());
  const std::size_t n = get_u32(in);
  ContextRaw ctx;
  ctx.n_neighbors = get_u32(in);
  const std::size_t n_tau = get_u32(in);
  ctx.distance = get_f32s(in, n);
  ctx.normal = get_f32s(in, 3 * n);
  ctx.mean = get_f32s(in, n);
  ctx.stddev = get_f32s(in, n);
  ctx.occupancy = get_f32s(in, n_tau);
  if (!in) throw DataError("truncated context cache " + path.string());
  return ctx;
}

}  // namespace minaf::geometry
