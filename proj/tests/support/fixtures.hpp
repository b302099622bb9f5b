#pragma once

#include "minaf/geometry/bvh.hpp"
#include "minaf/geometry/probe.hpp"
#include "minaf/model/minaf.hpp"
#include "minaf/sim/image_source.hpp"

namespace minaf::testing {

/// Probe contexts in the default shoebox for a given model configuration.
struct RoomProbe {
  sim::ShoeboxRoom room;
  geometry::TriangleMesh mesh;
  geometry::Bvh bvh;
  geometry::ProbeConfig probe;
  geometry::RayFan fan;

  explicit RoomProbe(const model::ModelConfig& cfg)
      : mesh(room.mesh()), bvh(mesh), probe(make_probe(cfg)), fan(geometry::RayFan::fibonacci(cfg.n_rays, probe.n_neighbors)) {}

  static geometry::ProbeConfig make_probe(const model::ModelConfig& cfg) {
    geometry::ProbeConfig p;
    p.n_rays = cfg.n_rays;
    p.n_thresholds = cfg.n_thresholds;
    p.n_neighbors = std::min<std::size_t>(8, cfg.n_rays - 1);
    return p;
  }

  model::ContextInput context(const geometry::Vec3& p, const model::ModelConfig& cfg) const {
    return model::ContextInput::from_raw(geometry::probe_context(bvh, mesh, p, fan, probe), cfg);
  }

  /// Model configuration whose scene bounds and distance scale match this room.
  static model::ModelConfig fit(model::ModelConfig cfg) {
    const sim::ShoeboxRoom room;
    cfg.scene_lo = geometry::Vec3::Zero();
    cfg.scene_hi = room.dims;
    cfg.distance_scale = make_probe(cfg).resolved_miss_distance(room.mesh().bounds());
    return cfg;
  }
};

}  // namespace minaf::testing
