// Small programmatic worlds: rigid cubes of particles with bonded Gaussians on a table.
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "gpw/model.hpp"

namespace gpw::testing {

struct CubeSpec {
  //! Center of the bottom face; the cube rests on z = 0 when center.z() == 0.
  Vec3 center = Vec3::Zero();
  int n = 4;
  double radius = 0.005;
  Vec3 color_a{0.85, 0.2, 0.15};
  Vec3 color_b{0.95, 0.85, 0.3};
};

struct WorldOptions {
  int width = 160;
  int height = 90;
  int cameras = 3;
  int gaussians_per_particle = 1;
  bool table = true;
  double table_half_extent = 0.15;
  double table_spacing = 0.008;
  std::uint64_t seed = 1;
};

struct World {
  EmbodiedModel model;
  std::vector<Camera> cameras;
};

World cube_world(std::span<const CubeSpec> cubes, const WorldOptions& options = {});

std::vector<View> render_views(const EmbodiedModel& model, std::span<const Camera> cameras);

//! Rigidly moves every particle of a body (and its bonded Gaussians).
void move_body(EmbodiedModel& model, int body, const Vec3& translation,
               const UnitQuat& rotation = UnitQuat(), const Vec3& pivot = Vec3::Zero());

Vec3 body_centroid(const EmbodiedModel& model, int body);

}  // namespace gpw::testing
