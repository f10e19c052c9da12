#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "gpw/pbd.hpp"
#include "oracles.hpp"

using namespace gpw;

namespace {

Particle at(const Vec3& x, double r = 0.01, double m = 0.1) {
  Particle p;
  p.x = x;
  p.rest_x = x;
  p.radius = r;
  p.mass = m;
  return p;
}

//! 2x2x2 box of touching particles with one rigid shape.
PhysicsState rigid_box(const Vec3& origin, double r = 0.01) {
  PhysicsState s;
  const int body = s.add_body({});
  std::vector<int> members;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      for (int k = 0; k < 2; ++k) {
        Particle p = at(origin + 2 * r * Vec3(i, j, k), r);
        p.body = body;
        members.push_back(static_cast<int>(s.particles.size()));
        s.particles.push_back(p);
      }
  s.shapes.push_back(make_shape(s.particles, members, 1.0));
  return s;
}

double max_rest_drift(const PhysicsState& s) {
  double worst = 0.0;
  for (std::size_t i = 0; i < s.particles.size(); ++i)
    for (std::size_t j = i + 1; j < s.particles.size(); ++j) {
      if (s.particles[i].body != s.particles[j].body) continue;
      const double d = (s.particles[i].x - s.particles[j].x).norm();
      const double d0 = (s.particles[i].rest_x - s.particles[j].rest_x).norm();
      worst = std::max(worst, std::abs(d - d0));
    }
  return worst;
}

}  // namespace

TEST_SUITE("pbd") {

TEST_CASE("ground_delta examples") {
  const Plane ground;
  CHECK(ground_delta(at({0, 0, 1}), ground, 1.0).norm() == 0.0);
  CHECK((ground_delta(at({0, 0, 0}), ground, 1.0) - Vec3(0, 0, 0.01)).norm() < 1e-15);
  CHECK((ground_delta(at({0, 0, -0.02}), ground, 0.5) - Vec3(0, 0, 0.015)).norm() < 1e-15);
}

TEST_CASE("collision_delta examples") {
  CHECK_FALSE(collision_delta(at({0, 0, 0}), at({1, 0, 0}), 1.0).active);
  const CollisionDelta eq = collision_delta(at({0, 0, 0}), at({0.01, 0, 0}), 1.0);
  CHECK((eq.di - Vec3(-0.005, 0, 0)).norm() < 1e-15);
  CHECK((eq.dj - Vec3(0.005, 0, 0)).norm() < 1e-15);
  const CollisionDelta uneq =
      collision_delta(at({0, 0, 0}, 0.01, 0.1), at({0.01, 0, 0}, 0.01, 0.3), 1.0);
  CHECK((uneq.di - Vec3(-0.0075, 0, 0)).norm() < 1e-15);
  CHECK((uneq.dj - Vec3(0.0025, 0, 0)).norm() < 1e-15);
}

TEST_CASE("collision_delta with kinematic and coincident particles") {
  Particle k = at({0, 0, 0});
  k.kinematic = true;
  const CollisionDelta d = collision_delta(k, at({0.01, 0, 0}), 1.0);
  CHECK(d.di.norm() == 0.0);
  CHECK((d.dj - Vec3(0.01, 0, 0)).norm() < 1e-15);
  const CollisionDelta c = collision_delta(at({0, 0, 0}), at({0, 0, 0}), 1.0);
  CHECK(c.active);
  CHECK(c.di.x() > 0.0);
  CHECK(c.dj.x() < 0.0);
  const CollisionDelta c2 = collision_delta(at({0, 0, 0}), at({0, 0, 0}), 1.0);
  CHECK(c.di == c2.di);
}

TEST_CASE("collision_delta momentum symmetry") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, 1);
  for (int i = 0; i < 1000; ++i) {
    const Particle a = at(0.02 * Vec3(u(rng), u(rng), u(rng)), 0.005 + 0.01 * u(rng), 0.05 + u(rng));
    const Particle b = at(0.02 * Vec3(u(rng), u(rng), u(rng)), 0.005 + 0.01 * u(rng), 0.05 + u(rng));
    const CollisionDelta d = collision_delta(a, b, 0.8);
    if (!d.active) continue;
    // exact up to the rounding of the two products
    const double scale = (a.mass * d.di).norm() + (b.mass * d.dj).norm();
    CHECK((a.mass * d.di + b.mass * d.dj).norm() <= 4 * std::numeric_limits<double>::epsilon() * scale);
    Particle c = b;
    c.mass = a.mass;
    const CollisionDelta e = collision_delta(a, c, 0.8);
    CHECK((a.mass * e.di + c.mass * e.dj).norm() == 0.0);
  }
}

TEST_CASE("shape_match rest and rigid motion") {
  PhysicsState s = rigid_box(Vec3(0.1, 0.2, 0.3));
  ShapeMatchResult r = shape_match(s.shapes[0], s.particles);
  for (const Vec3& d : r.deltas) CHECK(d.norm() < 1e-14);
  CHECK((r.rotation - Mat3::Identity()).norm() < 1e-12);

  const UnitQuat R0 = UnitQuat::from_axis_angle(Vec3(1, -2, 0.5), 0.8);
  for (Particle& p : s.particles) {
    p.x = R0.rotate(p.rest_x) + Vec3(0.5, 0, 0);
    p.q = R0 * p.rest_q;
  }
  r = shape_match(s.shapes[0], s.particles);
  for (const Vec3& d : r.deltas) CHECK(d.norm() < 1e-12);
  CHECK((r.rotation - R0.matrix()).norm() < 1e-12);
  for (const UnitQuat& q : r.orientations) CHECK((q.matrix() - R0.matrix()).norm() < 1e-12);
}

TEST_CASE("shape_match tetrahedron matches Horn oracle") {
  PhysicsState s;
  s.particles = {at({0, 0, 0}), at({0.03, 0, 0}), at({0, 0.03, 0}), at({0, 0, 0.03})};
  s.shapes.push_back(make_shape(s.particles, {0, 1, 2, 3}, 1.0));
  s.particles[2].x += Vec3(0.01, 0, 0);
  const ShapeMatchResult r = shape_match(s.shapes[0], s.particles);
  Mat3 R;
  const auto expect = oracle::shape_match_deltas(s.shapes[0], s.particles, &R);
  for (int i = 0; i < 4; ++i) CHECK((r.deltas[i] - expect[i]).norm() < 1e-10);
  CHECK((r.rotation - R).norm() < 1e-9);
}

TEST_CASE("make_shape validation") {
  std::vector<Particle> ps{at({0, 0, 0}), at({1, 0, 0})};
  CHECK_THROWS_AS(make_shape(ps, {0}, 1.0), Error);
  CHECK_THROWS_AS(make_shape(ps, {0, 1}, 0.0), Error);
  CHECK_THROWS_AS(make_shape(ps, {0, 1}, 1.5), Error);
  const Shape sh = make_shape(ps, {0, 1}, 0.5);
  CHECK((sh.rest_centroid - Vec3(0.5, 0, 0)).norm() < 1e-15);
  CHECK(sh.total_mass == doctest::Approx(0.2));
}

TEST_CASE("broad_phase") {
  std::vector<Particle> two{at({0, 0, 0}), at({1, 0, 0})};
  CHECK(broad_phase(two).empty());
  std::vector<Particle> three{at({0, 0, 0}), at({0.02, 0, 0}), at({0.01, 0.017, 0})};
  const auto pairs = broad_phase(three);
  REQUIRE(pairs.size() == 3);
  CHECK(pairs[0] == std::make_pair(0, 1));
  CHECK(pairs[1] == std::make_pair(0, 2));
  CHECK(pairs[2] == std::make_pair(1, 2));

  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-0.1, 0.1), r(0.003, 0.015);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Particle> ps;
    for (int i = 0; i < 100; ++i) ps.push_back(at({u(rng), u(rng), u(rng)}, r(rng)));
    CHECK(broad_phase(ps) == oracle::brute_pairs(ps));
  }
}

TEST_CASE("broad_phase body filtering") {
  PhysicsState s;
  const int b0 = s.add_body({});
  Body kin;
  kin.kinematic = true;
  const int b1 = s.add_body(kin);
  std::vector<Particle> ps{at({0, 0, 0}), at({0.015, 0, 0}), at({0.03, 0, 0}), at({0.045, 0, 0})};
  ps[0].body = ps[1].body = b0;
  ps[2].body = ps[3].body = b1;
  ps[2].kinematic = ps[3].kinematic = true;
  const auto pairs = broad_phase(ps, {s.bodies});
  CHECK(pairs == std::vector<std::pair<int, int>>{{1, 2}});
}

TEST_CASE("free particle advances and damps") {
  PhysicsState s;
  Particle p = at({0, 0, 1});
  p.v = Vec3(1, 0, 0);
  s.particles.push_back(p);
  PhysicsConfig cfg;
  cfg.gravity = Vec3::Zero();
  physics_step(s, cfg);
  CHECK(s.particles[0].x.x() == doctest::Approx(1.0 / 30).epsilon(1e-12));
  CHECK((s.particles[0].v - Vec3(0.9, 0, 0)).norm() < 1e-12);
}

TEST_CASE("damping is exact") {
  PhysicsState s;
  Particle p = at({0, 0, 1});
  p.v = Vec3(0.3, -0.2, 0.1);
  p.w = Vec3(1, 2, 3);
  s.particles.push_back(p);
  PhysicsConfig cfg;
  cfg.gravity = Vec3::Zero();
  cfg.substeps = 1;
  // undamped reference
  PhysicsState ref = s;
  PhysicsConfig nodamp = cfg;
  nodamp.damping = 1.0;
  physics_step(ref, nodamp);
  physics_step(s, cfg);
  CHECK(s.particles[0].v.norm() == doctest::Approx(0.9 * ref.particles[0].v.norm()).epsilon(1e-15));
  CHECK(s.particles[0].w.norm() == doctest::Approx(0.9 * ref.particles[0].w.norm()).epsilon(1e-15));
}

TEST_CASE("external force is consumed and cleared") {
  PhysicsState s;
  s.particles.push_back(at({0, 0, 1}));
  s.particles[0].f = Vec3(0.1, 0, 0);
  PhysicsConfig cfg;
  cfg.gravity = Vec3::Zero();
  physics_step(s, cfg);
  CHECK(s.particles[0].x.x() > 0.0);
  CHECK(s.particles[0].f.norm() == 0.0);
}

TEST_CASE("particle resting on ground stays above it") {
  PhysicsState s;
  s.particles.push_back(at({0, 0, 0.01}));
  PhysicsConfig cfg;
  for (int i = 0; i < 100; ++i) {
    physics_step(s, cfg);
    CHECK(s.ground.distance(s.particles[0].x) - 0.01 >= -1e-4);
  }
}

TEST_CASE("rigid box drop preserves rest distances") {
  PhysicsState s = rigid_box(Vec3(0, 0, 0.2));
  PhysicsConfig cfg;
  for (int i = 0; i < 300; ++i) {
    physics_step(s, cfg);
    CHECK(max_rest_drift(s) < 1e-3);
    for (const Particle& p : s.particles) CHECK(s.ground.distance(p.x) - p.radius >= -1e-3);
  }
  for (const Particle& p : s.particles) CHECK(p.x.z() < 0.04);
}

TEST_CASE("symmetric pair penetration reduced in one step") {
  PhysicsState s;
  s.particles = {at({0, 0, 1}), at({0.01, 0, 1})};
  PhysicsConfig cfg;
  cfg.gravity = Vec3::Zero();
  physics_step(s, cfg);
  const double pen = std::max(0.0, 0.02 - (s.particles[0].x - s.particles[1].x).norm());
  CHECK(pen <= 0.1 * 0.01);
}

TEST_CASE("kinematic targets") {
  PhysicsState s;
  Body kin;
  kin.kinematic = true;
  const int dyn = s.add_body({});
  const int k = s.add_body(kin);
  Particle pusher = at({0, 0, 0.01});
  pusher.kinematic = true;
  pusher.body = k;
  s.particles.push_back(pusher);
  CHECK_THROWS_AS(set_kinematic_targets(s, dyn, {}), Error);
  CHECK_THROWS_AS(set_kinematic_targets(s, 7, {}), Error);
  CHECK_THROWS_AS(set_kinematic_targets(s, k, {}), Error);
  set_kinematic_targets(s, k, {{Vec3(0, 0, 0.01), UnitQuat()}});
  physics_step(s, {});
  CHECK(s.particles[0].v.norm() == 0.0);
  CHECK(s.particles[0].x == Vec3(0, 0, 0.01));
  set_kinematic_targets(s, k, {{Vec3(0.001, 0, 0.01), UnitQuat()}});
  physics_step(s, {});
  CHECK((s.particles[0].v - Vec3(0.03, 0, 0)).norm() < 1e-12);
  CHECK(s.particles[0].x == Vec3(0.001, 0, 0.01));
}

TEST_CASE("pusher moves a box") {
  PhysicsState s = rigid_box(Vec3(0.03, 0, 0.01));
  Body kin;
  kin.kinematic = true;
  const int k = s.add_body(kin);
  Particle pusher = at({0.0, 0.01, 0.02});
  pusher.kinematic = true;
  pusher.body = k;
  s.particles.push_back(pusher);
  const int pi = static_cast<int>(s.particles.size()) - 1;
  PhysicsConfig cfg;
  for (int i = 0; i < 30; ++i) physics_step(s, cfg);  // settle
  const auto box_x = [&] {
    double c = 0.0;
    for (int i = 0; i < 8; ++i) c += s.particles[i].x.x();
    return c / 8;
  };
  double contact_box = 0.0, contact_push = 0.0, prev = box_x();
  bool touching = false;
  for (int step = 1; step <= 80; ++step) {
    Vec3 target = s.particles[pi].x + Vec3(0.001, 0, 0);
    set_kinematic_targets(s, k, {{target, UnitQuat()}});
    physics_step(s, cfg);
    const double bx = box_x();
    CHECK(bx >= prev - 1e-6);
    prev = bx;
    if (!touching && bx > 0.04 + 0.0005) {
      touching = true;
      contact_box = bx;
      contact_push = target.x();
    }
  }
  REQUIRE(touching);
  const double travel = s.particles[pi].x.x() - contact_push;
  CHECK(box_x() - contact_box >= 0.8 * travel);
}

TEST_CASE("non-finite state rolls back") {
  PhysicsState s;
  s.particles.push_back(at({0, 0, 1}));
  s.particles[0].f = Vec3(std::nan(""), 0, 0);
  const PhysicsState before = s;
  try {
    physics_step(s, {});
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NonFiniteState);
  }
  CHECK(s.particles[0].x == before.particles[0].x);
}

TEST_CASE("physics is deterministic") {
  auto run = [] {
    PhysicsState s = rigid_box(Vec3(0, 0, 0.1));
    PhysicsState b = rigid_box(Vec3(0.01, 0.005, 0.16));
    for (Particle p : b.particles) {
      p.body = s.add_body({}) * 0 + 1;
      s.particles.push_back(p);
    }
    for (int i = 0; i < 60; ++i) physics_step(s, {});
    return s;
  };
  const PhysicsState a = run(), b = run();
  for (std::size_t i = 0; i < a.particles.size(); ++i) CHECK(a.particles[i].x == b.particles[i].x);
}

TEST_CASE("physics config validation") {
  PhysicsConfig cfg;
  cfg.substeps = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = {};
  cfg.damping = 0.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = {};
  cfg.dt = -1;
  CHECK_THROWS_AS(cfg.validate(), Error);
}

}  // TEST_SUITE
