#include "worlds.hpp"

#include <cmath>
#include <random>

namespace gpw::testing {

World cube_world(std::span<const CubeSpec> cubes, const WorldOptions& opt) {
  World w;
  EmbodiedModel& m = w.model;
  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);

  if (opt.table) {
    const int k = static_cast<int>(std::floor(2.0 * opt.table_half_extent / opt.table_spacing));
    std::uniform_real_distribution<double> shade(0.35, 0.6);
    for (int i = 0; i <= k; ++i)
      for (int j = 0; j <= k; ++j) {
        Gaussian g;
        g.x = Vec3(-opt.table_half_extent + i * opt.table_spacing,
                   -opt.table_half_extent + j * opt.table_spacing, -0.001);
        g.scale = Vec3(0.6 * opt.table_spacing, 0.6 * opt.table_spacing, 0.0005);
        g.opacity = 1.0;
        g.color = Vec3::Constant(shade(rng));
        m.gaussians.push_back(g);
      }
  }

  for (std::size_t c = 0; c < cubes.size(); ++c) {
    const CubeSpec& cs = cubes[c];
    const double r = cs.radius;
    const int body = m.physics.add_body({});
    const int base = static_cast<int>(m.physics.particles.size());
    const double half = (cs.n - 1) * r;
    std::vector<int> members;
    for (int i = 0; i < cs.n; ++i)
      for (int j = 0; j < cs.n; ++j)
        for (int k = 0; k < cs.n; ++k) {
          Particle p;
          p.x = cs.center + Vec3(2 * r * i - half, 2 * r * j - half, r + 2 * r * k);
          p.rest_x = p.x;
          p.radius = r;
          p.body = body;
          members.push_back(static_cast<int>(m.physics.particles.size()));
          m.physics.particles.push_back(p);
        }
    m.physics.shapes.push_back(make_shape(m.physics.particles, members, 1.0));

    const double cell = 2.0 * r * std::max(1, cs.n / 3);
    for (int i = base; i < static_cast<int>(m.physics.particles.size()); ++i) {
      const Particle& p = m.physics.particles[i];
      for (int k = 0; k < opt.gaussians_per_particle; ++k) {
        Gaussian g;
        g.x = p.x;
        if (k > 0) g.x += 0.8 * r * Vec3(unit(rng), unit(rng), unit(rng));
        g.scale = Vec3::Constant(0.9 * r);
        g.opacity = 0.9;
        const Vec3 local = g.x - cs.center;
        const long parity = std::lround(std::floor(local.x() / cell) + std::floor(local.y() / cell) +
                                        std::floor(local.z() / cell));
        g.color = (parity % 2 == 0) ? cs.color_a : cs.color_b;
        g.segment = static_cast<int>(c);
        m.bonds.push_back({static_cast<int>(m.gaussians.size()), i, g.x - p.x, UnitQuat()});
        m.gaussians.push_back(g);
      }
    }
    ObjectInfo info;
    info.name = "cube" + std::to_string(c);
    info.body = body;
    info.segment = static_cast<int>(c);
    m.objects.push_back(info);
  }
  m.validate();

  const Vec3 target(0.0, 0.0, 0.02);
  const double fx = 1.1 * opt.width;
  for (int c = 0; c < opt.cameras; ++c) {
    const double a = 2.0 * M_PI * c / opt.cameras + 0.4;
    const Vec3 eye(0.4 * std::cos(a), 0.4 * std::sin(a), 0.25);
    w.cameras.push_back(Camera::look_at(eye, target, Vec3::UnitZ(), fx, fx, opt.width, opt.height));
  }
  return w;
}

std::vector<View> render_views(const EmbodiedModel& model, std::span<const Camera> cameras) {
  std::vector<View> out;
  for (const Camera& c : cameras) out.push_back({c, render(model.gaussians, c).rgb});
  return out;
}

void move_body(EmbodiedModel& model, int body, const Vec3& translation, const UnitQuat& rotation,
               const Vec3& pivot) {
  for (Particle& p : model.physics.particles) {
    if (p.body != body) continue;
    p.x = pivot + rotation.rotate(p.x - pivot) + translation;
    p.q = rotation * p.q;
  }
  apply_bonds(model);
}

Vec3 body_centroid(const EmbodiedModel& model, int body) {
  Vec3 c = Vec3::Zero();
  int n = 0;
  for (const Particle& p : model.physics.particles)
    if (p.body == body) {
      c += p.x;
      ++n;
    }
  return n ? Vec3(c / n) : c;
}

}  // namespace gpw::testing
