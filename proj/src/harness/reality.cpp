#include "gpw/harness/reality.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

namespace gpw::harness {

namespace {

constexpr double kSurfaceSpacing = 0.003;

//! Rotation whose local z axis is `n`.
UnitQuat frame_from_normal(const Vec3& n) {
  return UnitQuat::from_matrix(Eigen::Quaterniond::FromTwoVectors(Vec3::UnitZ(), n).toRotationMatrix());
}

std::uint64_t hash3(long a, long b, long c) {
  std::uint64_t h = 1469598103934665603ull;
  for (long v : {a, b, c}) {
    h ^= static_cast<std::uint64_t>(v) + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    h *= 1099511628211ull;
  }
  return h;
}

Gaussian surface_disk(const Vec3& x, const Vec3& n, const Vec3& color, double spacing) {
  Gaussian g;
  g.x = x;
  g.q = frame_from_normal(n);
  g.scale = Vec3(0.65 * spacing, 0.65 * spacing, 0.15 * spacing);
  g.opacity = 0.95;
  g.color = color;
  return g;
}

//! Lets an object that starts in ground contact sink into its contact equilibrium
//! (simulated alone), so a resting scene is static from the first frame.
void settle_on_ground(PhysicsState& state, int begin, int end, const PhysicsConfig& cfg) {
  double gap = std::numeric_limits<double>::infinity();
  for (int i = begin; i < end; ++i)
    gap = std::min(gap, state.ground.distance(state.particles[i].x) - state.particles[i].radius);
  if (gap > 1e-6) return;
  PhysicsState alone;
  alone.ground = state.ground;
  alone.add_body(state.bodies[state.particles[begin].body]);
  for (int i = begin; i < end; ++i) {
    Particle p = state.particles[i];
    p.body = 0;
    alone.particles.push_back(p);
  }
  for (const Shape& sh : state.shapes) {
    if (sh.members.empty() || sh.members.front() < begin || sh.members.front() >= end) continue;
    Shape c = sh;
    for (int& m : c.members) m -= begin;
    if (c.owner >= 0) c.owner -= begin;
    alone.shapes.push_back(c);
  }
  for (int k = 0; k < 200; ++k) {
    const std::vector<Particle> before = alone.particles;
    physics_step(alone, cfg);
    bool moved = false;
    for (std::size_t i = 0; i < before.size(); ++i) moved |= alone.particles[i].x != before[i].x;
    if (!moved) break;
  }
  for (int i = begin; i < end; ++i) {
    Particle& p = state.particles[i];
    p.x = alone.particles[i - begin].x;
    p.q = alone.particles[i - begin].q;
    p.v = Vec3::Zero();
    p.w = Vec3::Zero();
  }
}

}  // namespace

// ----------------------------------------------------------------------------
// Geometry

bool ObjectGeometry::contains(const Vec3& p) const {
  const Vec3& s = spec.size;
  if (spec.shape == "box")
    return std::abs(p.x()) <= 0.5 * s.x() && std::abs(p.y()) <= 0.5 * s.y() && p.z() >= 0.0 &&
           p.z() <= s.z();
  if (spec.shape == "cylinder")
    return p.head<2>().norm() <= 0.5 * s.x() && p.z() >= 0.0 && p.z() <= s.z();
  if (spec.shape == "tblock") {
    if (p.z() < 0.0 || p.z() > s.z()) return false;
    const double L = s.x(), w = s.y();
    const bool bar = std::abs(p.x()) <= 0.5 * L && p.y() <= 0.5 * L && p.y() >= 0.5 * L - w;
    const bool stem = std::abs(p.x()) <= 0.5 * w && p.y() >= -0.5 * L && p.y() <= 0.5 * L - w;
    return bar || stem;
  }
  // rope: capsule along x
  const double r = 0.5 * s.y();
  const double half = std::max(0.0, 0.5 * s.x() - r);
  const Vec3 axis_pt(std::clamp(p.x(), -half, half), 0.0, r);
  return (p - axis_pt).norm() <= r;
}

Aabb ObjectGeometry::local_bounds() const {
  const Vec3& s = spec.size;
  if (spec.shape == "tblock") return {Vec3(-0.5 * s.x(), -0.5 * s.x(), 0), Vec3(0.5 * s.x(), 0.5 * s.x(), s.z())};
  if (spec.shape == "rope") return {Vec3(-0.5 * s.x(), -0.5 * s.y(), 0), Vec3(0.5 * s.x(), 0.5 * s.y(), s.y())};
  return {Vec3(-0.5 * s.x(), -0.5 * s.y(), 0), Vec3(0.5 * s.x(), 0.5 * s.y(), s.z())};
}

void ObjectGeometry::sample_surface(double spacing, std::vector<Vec3>& pts,
                                    std::vector<Vec3>& nrm) const {
  const Vec3& s = spec.size;
  if (spec.shape == "cylinder") {
    const double r = 0.5 * s.x();
    const int na = std::max(8, static_cast<int>(std::ceil(2 * std::numbers::pi * r / spacing)));
    const int nz = std::max(1, static_cast<int>(std::ceil(s.z() / spacing)));
    for (int a = 0; a < na; ++a)
      for (int k = 0; k < nz; ++k) {
        const double t = 2 * std::numbers::pi * (a + 0.5) / na;
        const Vec3 n(std::cos(t), std::sin(t), 0.0);
        pts.push_back(r * n + Vec3(0, 0, s.z() * (k + 0.5) / nz));
        nrm.push_back(n);
      }
    const int ng = static_cast<int>(std::ceil(2 * r / spacing));
    for (int i = 0; i < ng; ++i)
      for (int j = 0; j < ng; ++j) {
        const Vec2 xy(-r + spacing * (i + 0.5), -r + spacing * (j + 0.5));
        if (xy.norm() > r) continue;
        pts.emplace_back(xy.x(), xy.y(), s.z());
        nrm.push_back(Vec3::UnitZ());
        pts.emplace_back(xy.x(), xy.y(), 0.0);
        nrm.push_back(-Vec3::UnitZ());
      }
    return;
  }
  if (spec.shape == "rope") {
    const double r = 0.5 * s.y();
    const double half = std::max(0.0, 0.5 * s.x() - r);
    const int na = std::max(8, static_cast<int>(std::ceil(2 * std::numbers::pi * r / spacing)));
    const int nx = std::max(1, static_cast<int>(std::ceil(2 * half / spacing)));
    for (int i = 0; i < nx; ++i)
      for (int a = 0; a < na; ++a) {
        const double t = 2 * std::numbers::pi * (a + 0.5) / na;
        const Vec3 n(0.0, std::cos(t), std::sin(t));
        pts.push_back(Vec3(-half + 2 * half * (i + 0.5) / nx, 0, r) + r * n);
        nrm.push_back(n);
      }
    // end caps as hemispheres (Fibonacci samples)
    const int nc = std::max(8, static_cast<int>(std::ceil(2 * std::numbers::pi * r * r / (spacing * spacing))));
    for (int side : {-1, 1})
      for (int k = 0; k < nc; ++k) {
        const double z = 1.0 - (k + 0.5) / nc;
        const double rho = std::sqrt(std::max(0.0, 1 - z * z));
        const double phi = k * std::numbers::pi * (3.0 - std::sqrt(5.0));
        const Vec3 n(side * z, rho * std::cos(phi), rho * std::sin(phi));
        pts.push_back(Vec3(side * half, 0, r) + r * n);
        nrm.push_back(n);
      }
    return;
  }
  // Axis-aligned solids: boundary faces of an occupancy grid.
  const Aabb b = local_bounds();
  const Vec3 ext = b.hi - b.lo;
  int n[3];
  Vec3 cell;
  for (int k = 0; k < 3; ++k) {
    n[k] = std::max(1, static_cast<int>(std::lround(ext[k] / spacing)));
    cell[k] = ext[k] / n[k];
  }
  auto center = [&](int i, int j, int k) -> Vec3 {
    return b.lo + Vec3((i + 0.5) * cell.x(), (j + 0.5) * cell.y(), (k + 0.5) * cell.z());
  };
  auto inside = [&](int i, int j, int k) {
    if (i < 0 || j < 0 || k < 0 || i >= n[0] || j >= n[1] || k >= n[2]) return false;
    return contains(center(i, j, k));
  };
  const int dirs[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
  for (int i = 0; i < n[0]; ++i)
    for (int j = 0; j < n[1]; ++j)
      for (int k = 0; k < n[2]; ++k) {
        if (!inside(i, j, k)) continue;
        for (const auto& d : dirs) {
          if (inside(i + d[0], j + d[1], k + d[2])) continue;
          const Vec3 dv(d[0], d[1], d[2]);
          pts.push_back(center(i, j, k) + 0.5 * dv.cwiseProduct(cell));
          nrm.push_back(dv);
        }
      }
}

Vec3 ObjectGeometry::color(const Vec3& local) const {
  const Texture& t = spec.texture;
  if (t.kind == "solid") return t.color_a;
  const Vec3 p = local - local_bounds().lo;
  const long i = static_cast<long>(std::floor(p.x() / t.cell + 1e-9));
  const long j = static_cast<long>(std::floor(p.y() / t.cell + 1e-9));
  const long k = static_cast<long>(std::floor(p.z() / t.cell + 1e-9));
  if (t.kind == "checker") return ((i + j + k) & 1) ? t.color_b : t.color_a;
  const double u = static_cast<double>(hash3(i, j, k) >> 11) * 0x1.0p-53;
  return t.color_a + u * (t.color_b - t.color_a);
}

RigidTransform ObjectGeometry::pose() const {
  return {UnitQuat::from_axis_angle(Vec3::UnitZ(), spec.yaw), spec.position};
}

Aabb ObjectGeometry::world_bounds() const {
  const Aabb l = local_bounds();
  const RigidTransform T = pose();
  Aabb out{Vec3::Constant(1e300), Vec3::Constant(-1e300)};
  for (int c = 0; c < 8; ++c) {
    const Vec3 p((c & 1) ? l.hi.x() : l.lo.x(), (c & 2) ? l.hi.y() : l.lo.y(),
                 (c & 4) ? l.hi.z() : l.lo.z());
    const Vec3 w = T.apply(p);
    out.lo = out.lo.cwiseMin(w);
    out.hi = out.hi.cwiseMax(w);
  }
  return out;
}

std::vector<Vec3> ObjectGeometry::default_queries() const {
  const Aabb b = local_bounds();
  const Vec3 e = b.hi - b.lo;
  const Vec3 c = 0.5 * (b.lo + b.hi);
  std::vector<Vec3> out;
  // top face
  for (double sx : {-0.3, 0.3})
    for (double sy : {-0.3, 0.3}) {
      const Vec3 p(c.x() + sx * e.x(), c.y() + sy * e.y(), b.hi.z());
      if (contains(p - Vec3(0, 0, 1e-6))) out.push_back(p);
    }
  // side centers at mid height
  for (const Vec3& d : {Vec3(1, 0, 0), Vec3(-1, 0, 0), Vec3(0, 1, 0), Vec3(0, -1, 0)}) {
    Vec3 p = c;
    // march outward to the surface
    const double step = 1e-4;
    while (contains(p + step * d)) p += step * d;
    out.push_back(p);
  }
  return out;
}

// ----------------------------------------------------------------------------
// Reality

Reality::Reality(const Scenario& scenario) : sc_(scenario) {
  sc_.validate();
  cameras_ = sc_.train_rig();
  train_count_ = static_cast<int>(cameras_.size());
  for (const Camera& c : sc_.eval_rig()) cameras_.push_back(c);
  state_.ground = sc_.ground;

  // Table disks covering the ground around the origin.
  {
    const Vec3 n = sc_.ground.normal;
    const Vec3 origin = -sc_.ground.offset * n;
    Vec3 t1 = n.cross(Vec3::UnitX());
    if (t1.norm() < 1e-6) t1 = n.cross(Vec3::UnitY());
    t1.normalize();
    const Vec3 t2 = n.cross(t1);
    const double sp = sc_.table.spacing;
    const int nx = static_cast<int>(std::lround(sc_.table.size.x() / sp));
    const int ny = static_cast<int>(std::lround(sc_.table.size.y() / sp));
    std::mt19937_64 rng(sc_.seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int i = 0; i < nx; ++i)
      for (int j = 0; j < ny; ++j) {
        const Vec3 x = origin + (-0.5 * sc_.table.size.x() + (i + 0.5) * sp) * t1 +
                       (-0.5 * sc_.table.size.y() + (j + 0.5) * sp) * t2 - 0.001 * n;
        const Vec3 col = (sc_.table.color + Vec3::Constant(sc_.table.noise * u(rng))).cwiseMax(0.0).cwiseMin(1.0);
        Gaussian g = surface_disk(x, n, col, sp);
        g.opacity = 1.0;
        gaussians_.push_back(g);
      }
    background_count_ = static_cast<int>(gaussians_.size());
  }

  const double r = sc_.reality_particle_radius;
  for (int oi = 0; oi < static_cast<int>(sc_.objects.size()); ++oi) {
    const ObjectSpec& spec = sc_.objects[oi];
    ObjectGeometry geo{spec};
    geometry_.push_back(geo);
    const RigidTransform T = geo.pose();
    Body body;
    body.rigid = spec.rigid;
    body.self_collide = !spec.rigid;
    const int bid = state_.add_body(body);
    const int pbase = static_cast<int>(state_.particles.size());

    const Aabb lb = geo.local_bounds();
    const Vec3 ext = lb.hi - lb.lo;
    int cnt[3];
    Vec3 start;
    for (int k = 0; k < 3; ++k) {
      cnt[k] = std::max(1, static_cast<int>(std::floor(ext[k] / (2 * r) + 1e-9)));
      start[k] = lb.lo[k] + 0.5 * (ext[k] - (cnt[k] - 1) * 2 * r);
    }
    for (int i = 0; i < cnt[0]; ++i)
      for (int j = 0; j < cnt[1]; ++j)
        for (int k = 0; k < cnt[2]; ++k) {
          const Vec3 local = start + 2 * r * Vec3(i, j, k);
          if (!geo.contains(local)) continue;
          Particle p;
          p.x = T.apply(local);
          p.rest_x = p.x;
          p.radius = r;
          p.mass = 0.1;
          p.body = bid;
          state_.particles.push_back(p);
        }
    const int pend = static_cast<int>(state_.particles.size());
    if (pend - pbase < 2) throw Error(ErrorCode::Config, "object " + spec.name + " is too small");
    Vec3 com = Vec3::Zero();
    for (int i = pbase; i < pend; ++i) com += state_.particles[i].x;
    com /= (pend - pbase);
    for (int i = pbase; i < pend; ++i) {
      Particle& p = state_.particles[i];
      p.v = spec.reality_velocity + spec.reality_angular_velocity.cross(p.x - com);
      p.w = spec.reality_angular_velocity;
    }
    if (spec.rigid) {
      std::vector<int> members;
      for (int i = pbase; i < pend; ++i) members.push_back(i);
      state_.shapes.push_back(make_shape(state_.particles, members, 1.0));
    } else {
      for (int i = pbase; i < pend; ++i) {
        std::vector<int> members;
        for (int j = pbase; j < pend; ++j)
          if ((state_.particles[j].x - state_.particles[i].x).norm() <= 2.5 * r + 1e-12)
            members.push_back(j);
        if (members.size() >= 2) state_.shapes.push_back(make_shape(state_.particles, members, 0.3, i));
      }
    }

    if (spec.reality_velocity.isZero() && spec.reality_angular_velocity.isZero())
      settle_on_ground(state_, pbase, pend, sc_.reality_physics);

    // Surface Gaussians bonded to the nearest particle of this object.
    std::vector<Vec3> pts, nrm;
    geo.sample_surface(kSurfaceSpacing, pts, nrm);
    const std::span<const Particle> own(state_.particles.data() + pbase, pend - pbase);
    std::vector<Gaussian> gs;
    for (std::size_t k = 0; k < pts.size(); ++k) {
      Gaussian g = surface_disk(T.apply(pts[k]), T.rotation.rotate(nrm[k]), geo.color(pts[k]),
                                kSurfaceSpacing);
      g.segment = oi;
      gs.push_back(g);
    }
    const AttachResult ar = attach_bonds(gs, own);
    for (const Bond& b : ar.bonds) {
      bonds_.push_back({static_cast<int>(gaussians_.size()), b.particle + pbase, b.offset, b.rotation});
      gaussians_.push_back(gs[b.gaussian]);
    }

    std::vector<Vec3> queries = spec.query_points.empty() ? geo.default_queries() : spec.query_points;
    for (const Vec3& q : queries) {
      const Vec3 w = T.apply(q);
      int best = pbase;
      for (int i = pbase + 1; i < pend; ++i)
        if ((state_.particles[i].x - w).norm() < (state_.particles[best].x - w).norm()) best = i;
      query_bindings_.push_back({best, w - state_.particles[best].x});
      query_object_.push_back(oi);
    }
  }

  if (sc_.pusher) {
    Body kin;
    kin.kinematic = true;
    pusher_body_ = state_.add_body(kin);
    const auto targets = pusher_targets(0);
    std::vector<Vec3> dirs;
    const double pr = sc_.pusher->radius;
    const int nd = std::max(12, static_cast<int>(std::ceil(4 * std::numbers::pi * pr * pr /
                                                           (kSurfaceSpacing * kSurfaceSpacing))));
    for (int k = 0; k < nd; ++k) {
      const double z = 1.0 - 2.0 * (k + 0.5) / nd;
      const double rho = std::sqrt(std::max(0.0, 1 - z * z));
      const double phi = k * std::numbers::pi * (3.0 - std::sqrt(5.0));
      dirs.emplace_back(rho * std::cos(phi), rho * std::sin(phi), z);
    }
    for (std::size_t s = 0; s < targets.size(); ++s) {
      Particle p;
      p.x = targets[s].x;
      p.rest_x = p.x;
      p.radius = pr;
      p.kinematic = true;
      p.body = pusher_body_;
      const int pid = static_cast<int>(state_.particles.size());
      state_.particles.push_back(p);
      for (const Vec3& d : dirs) {
        pusher_gaussians_.push_back(static_cast<int>(gaussians_.size()));
        bonds_.push_back({static_cast<int>(gaussians_.size()), pid, pr * d, frame_from_normal(d)});
        Gaussian g = surface_disk(p.x + pr * d, d, sc_.pusher->color, kSurfaceSpacing);
        g.segment = static_cast<int>(sc_.objects.size());
        gaussians_.push_back(g);
      }
    }
  }
  sync_gaussians();
}

std::vector<KinematicTarget> Reality::pusher_targets(int step) const {
  std::vector<KinematicTarget> out;
  if (!sc_.pusher) return out;
  const Vec3 base = sc_.pusher->position_at(step);
  for (const Vec3& off : sc_.pusher->spheres) out.push_back({base + off, UnitQuat()});
  return out;
}

void Reality::sync_gaussians() {
  for (const Bond& b : bonds_) {
    const Particle& p = state_.particles[b.particle];
    Gaussian& g = gaussians_[b.gaussian];
    g.x = p.x + p.q.rotate(b.offset);
    g.q = p.q * b.rotation;
  }
}

void Reality::advance() {
  ++step_;
  if (pusher_body_ >= 0) set_kinematic_targets(state_, pusher_body_, pusher_targets(step_));
  physics_step(state_, sc_.reality_physics);
  sync_gaussians();
}

Frame Reality::frame() const {
  Frame f;
  f.step = step_;
  RenderOptions opt;
  opt.seg_channels = static_cast<int>(sc_.objects.size()) + (sc_.pusher ? 1 : 0);
  f.rgb.resize(cameras_.size());
  f.seg.resize(cameras_.size());
  for (std::size_t c = 0; c < cameras_.size(); ++c) {
    RenderedImage img = render(gaussians_, cameras_[c], opt);
    f.rgb[c] = std::move(img.rgb);
    f.seg[c] = std::move(img.seg);
  }
  for (const QueryBinding& q : query_bindings_) {
    const Particle& p = state_.particles[q.particle];
    f.queries.push_back(p.x + p.q.rotate(q.offset));
  }
  return f;
}

std::vector<Gaussian> Reality::background() const {
  return {gaussians_.begin(), gaussians_.begin() + background_count_};
}

std::vector<Reality::PusherPart> Reality::pusher_parts() const {
  std::vector<PusherPart> out;
  for (const Bond& b : bonds_) {
    if (state_.particles[b.particle].body != pusher_body_ || pusher_body_ < 0) continue;
    const int first = static_cast<int>(state_.particles.size()) -
                      static_cast<int>(sc_.pusher->spheres.size());
    out.push_back({gaussians_[b.gaussian], b.particle - first});
  }
  return out;
}

}  // namespace gpw::harness
