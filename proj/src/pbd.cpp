#include "gpw/pbd.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <unordered_map>

namespace gpw {

void PhysicsConfig::validate() const {
  if (!(dt > 0.0)) throw Error(ErrorCode::Config, "dt must be positive");
  if (substeps < 1) throw Error(ErrorCode::Config, "substeps must be >= 1");
  if (jacobi_iterations < 1) throw Error(ErrorCode::Config, "jacobi_iterations must be >= 1");
  if (!(damping > 0.0 && damping <= 1.0)) throw Error(ErrorCode::Config, "damping must be in (0, 1]");
}

std::vector<int> PhysicsState::body_particles(int body) const {
  std::vector<int> out;
  for (int i = 0; i < static_cast<int>(particles.size()); ++i)
    if (particles[i].body == body) out.push_back(i);
  return out;
}

int PhysicsState::add_body(const Body& body) {
  bodies.push_back(body);
  pending_targets.emplace_back();
  return static_cast<int>(bodies.size()) - 1;
}

Shape make_shape(std::span<const Particle> particles, std::vector<int> members,
                 double stiffness, int owner) {
  if (members.size() < 2) throw Error(ErrorCode::Config, "a shape needs at least two particles");
  if (!(stiffness > 0.0 && stiffness <= 1.0))
    throw Error(ErrorCode::Config, "shape stiffness must be in (0, 1]");
  Shape s;
  s.members = std::move(members);
  s.stiffness = stiffness;
  s.owner = owner;
  for (int i : s.members) {
    s.total_mass += particles[i].mass;
    s.rest_centroid += particles[i].mass * particles[i].rest_x;
  }
  s.rest_centroid /= s.total_mass;
  return s;
}

Vec3 ground_delta(const Particle& p, const Plane& plane, double relaxation) {
  const double c = std::min(plane.distance(p.x) - p.radius, 0.0);
  if (c == 0.0) return Vec3::Zero();
  return -relaxation * c * plane.normal;
}

CollisionDelta collision_delta(const Particle& pi, const Particle& pj, double relaxation) {
  CollisionDelta out;
  const double wi = pi.inv_mass();
  const double wj = pj.inv_mass();
  if (wi + wj == 0.0) return out;
  const Vec3 d = pi.x - pj.x;
  const double dist = d.norm();
  const double c = std::min(dist - pi.radius - pj.radius, 0.0);
  if (c == 0.0) return out;
  const Vec3 n = dist < 1e-9 ? Vec3::UnitX() : Vec3(d / dist);
  const Vec3 push = n * (-c * relaxation);
  // For two dynamic particles w_i / (w_i + w_j) == m_j / (m_i + m_j); the mass form
  // keeps m_i di + m_j dj at rounding level.
  double si, sj;
  if (pi.kinematic) {
    si = 0.0;
    sj = 1.0;
  } else if (pj.kinematic) {
    si = 1.0;
    sj = 0.0;
  } else {
    const double m = pi.mass + pj.mass;
    si = pj.mass / m;
    sj = pi.mass / m;
  }
  out.di = si * push;
  out.dj = -sj * push;
  out.active = true;
  return out;
}

ShapeMatchResult shape_match(const Shape& shape, std::span<const Particle> particles) {
  ShapeMatchResult out;
  Vec3 c = Vec3::Zero();
  for (int i : shape.members) c += particles[i].mass * particles[i].x;
  c /= shape.total_mass;

  // Centered form of sum m x xbar^T - M c cbar^T.
  Mat3 A = Mat3::Zero();
  for (int i : shape.members) {
    const Particle& p = particles[i];
    A += p.mass * (p.x - c) * (p.rest_x - shape.rest_centroid).transpose();
    const Mat3 rel = (p.q * p.rest_q.inverse()).matrix();
    A += (0.2 * p.mass * p.radius * p.radius) * rel;
  }
  out.rotation = polar_decompose(A, shape.rotation, &out.degenerate);

  out.deltas.reserve(shape.members.size());
  out.orientations.reserve(shape.members.size());
  const UnitQuat rq = UnitQuat::from_matrix(out.rotation);
  for (int i : shape.members) {
    const Particle& p = particles[i];
    const Vec3 goal = out.rotation * (p.rest_x - shape.rest_centroid) + c;
    out.deltas.push_back(shape.stiffness * (goal - p.x));
    out.orientations.push_back(rq * p.rest_q);
  }
  return out;
}

namespace {

std::int64_t cell_key(std::int64_t x, std::int64_t y, std::int64_t z) {
  constexpr std::int64_t kOff = 1 << 20;
  return ((x + kOff) << 42) | ((y + kOff) << 21) | (z + kOff);
}

bool pair_allowed(const Particle& a, const Particle& b, std::span<const Body> bodies) {
  if (bodies.empty()) return true;
  if (a.kinematic && b.kinematic) return false;
  if (a.body == b.body && a.body >= 0 && a.body < static_cast<int>(bodies.size()) &&
      !bodies[a.body].self_collide)
    return false;
  return true;
}

}  // namespace

std::vector<std::pair<int, int>> broad_phase(std::span<const Particle> particles,
                                             const BroadPhaseOptions& options) {
  std::vector<std::pair<int, int>> pairs;
  const int n = static_cast<int>(particles.size());
  if (n < 2) return pairs;
  double max_r = 0.0;
  for (const auto& p : particles) max_r = std::max(max_r, p.radius);
  const double margin = max_r;
  const double cell = 2.0 * max_r + margin;
  const double inv_cell = 1.0 / cell;

  struct Entry {
    std::int64_t key;
    int index;
    int cx, cy, cz;
  };
  std::vector<Entry> entries(n);
  for (int i = 0; i < n; ++i) {
    const Vec3& x = particles[i].x;
    const int cx = static_cast<int>(std::floor(x.x() * inv_cell));
    const int cy = static_cast<int>(std::floor(x.y() * inv_cell));
    const int cz = static_cast<int>(std::floor(x.z() * inv_cell));
    entries[i] = {cell_key(cx, cy, cz), i, cx, cy, cz};
  }
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    return a.key != b.key ? a.key < b.key : a.index < b.index;
  });
  std::unordered_map<std::int64_t, std::pair<int, int>> ranges;
  ranges.reserve(entries.size());
  for (int k = 0; k < n;) {
    int e = k;
    while (e < n && entries[e].key == entries[k].key) ++e;
    ranges.emplace(entries[k].key, std::make_pair(k, e));
    k = e;
  }

  for (const Entry& a : entries) {
    const Particle& pa = particles[a.index];
    for (int dx = -1; dx <= 1; ++dx)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dz = -1; dz <= 1; ++dz) {
          auto it = ranges.find(cell_key(a.cx + dx, a.cy + dy, a.cz + dz));
          if (it == ranges.end()) continue;
          for (int k = it->second.first; k < it->second.second; ++k) {
            const int j = entries[k].index;
            if (j <= a.index) continue;
            const Particle& pb = particles[j];
            const double reach = pa.radius + pb.radius + margin;
            if ((pa.x - pb.x).squaredNorm() >= reach * reach) continue;
            if (!pair_allowed(pa, pb, options.bodies)) continue;
            pairs.emplace_back(a.index, j);
          }
        }
  }
  std::sort(pairs.begin(), pairs.end());
  return pairs;
}

void set_kinematic_targets(PhysicsState& state, int body, std::vector<KinematicTarget> poses) {
  if (body < 0 || body >= static_cast<int>(state.bodies.size()) || !state.bodies[body].kinematic)
    throw Error(ErrorCode::UnknownBody, "body " + std::to_string(body) + " is not a kinematic body");
  const auto members = state.body_particles(body);
  if (members.size() != poses.size())
    throw Error(ErrorCode::ShapeMismatch, "kinematic target count does not match body particles");
  if (state.pending_targets.size() < state.bodies.size())
    state.pending_targets.resize(state.bodies.size());
  state.pending_targets[body] = std::move(poses);
}

namespace {

struct JacobiScratch {
  std::vector<Vec3> sum;
  std::vector<int> count;

  void reset(std::size_t n) {
    sum.assign(n, Vec3::Zero());
    count.assign(n, 0);
  }
  void add(int i, const Vec3& d) {
    sum[i] += d;
    ++count[i];
  }
};

void accumulate_contacts(const std::vector<Particle>& ps, const Plane& plane,
                         std::span<const std::pair<int, int>> pairs, bool ground,
                         bool collisions, const Relaxation& relax, JacobiScratch& acc) {
  if (ground) {
    for (int i = 0; i < static_cast<int>(ps.size()); ++i) {
      if (ps[i].kinematic) continue;
      const Vec3 d = ground_delta(ps[i], plane, relax.ground);
      if (d.x() != 0.0 || d.y() != 0.0 || d.z() != 0.0) acc.add(i, d);
    }
  }
  if (collisions) {
    for (const auto& [i, j] : pairs) {
      const CollisionDelta cd = collision_delta(ps[i], ps[j], relax.collision);
      if (!cd.active) continue;
      if (!ps[i].kinematic) acc.add(i, cd.di);
      if (!ps[j].kinematic) acc.add(j, cd.dj);
    }
  }
}

void apply_average(std::vector<Particle>& ps, const JacobiScratch& acc) {
  for (std::size_t i = 0; i < ps.size(); ++i)
    if (acc.count[i] > 0) ps[i].x += acc.sum[i] / static_cast<double>(acc.count[i]);
}

bool state_finite(const PhysicsState& s) {
  for (const auto& p : s.particles) {
    if (!p.x.allFinite() || !p.v.allFinite() || !p.w.allFinite()) return false;
    if (!std::isfinite(p.q.w()) || !std::isfinite(p.q.x()) || !std::isfinite(p.q.y()) ||
        !std::isfinite(p.q.z()))
      return false;
  }
  return true;
}

}  // namespace

void physics_step(PhysicsState& state, const PhysicsConfig& cfg) {
  cfg.validate();
  const PhysicsState snapshot = state;
  auto& ps = state.particles;
  const std::size_t n = ps.size();
  const double h = cfg.dt / cfg.substeps;

  // Kinematic bodies snap to their queued targets; velocities follow the displacement.
  state.pending_targets.resize(state.bodies.size());
  for (std::size_t b = 0; b < state.bodies.size(); ++b) {
    if (!state.bodies[b].kinematic) continue;
    const auto members = state.body_particles(static_cast<int>(b));
    auto& targets = state.pending_targets[b];
    for (std::size_t k = 0; k < members.size(); ++k) {
      Particle& p = ps[members[k]];
      if (targets) {
        const KinematicTarget& t = (*targets)[k];
        p.v = (t.x - p.x) / cfg.dt;
        p.w = quat_to_axis_angle_rate(t.q, p.q, cfg.dt);
        p.x = t.x;
        p.q = t.q;
      } else {
        p.v.setZero();
        p.w.setZero();
      }
    }
    targets.reset();
  }

  const BroadPhaseOptions bp{state.bodies};
  JacobiScratch acc;
  std::vector<Vec3> x0(n);
  std::vector<UnitQuat> q0(n);
  std::vector<std::pair<int, int>> pairs;

  for (int sub = 0; sub < cfg.substeps; ++sub) {
    for (std::size_t i = 0; i < n; ++i) {
      Particle& p = ps[i];
      x0[i] = p.x;
      q0[i] = p.q;
      if (p.kinematic) continue;
      p.x += h * p.v + (h * h / p.mass) * p.f + (h * h) * cfg.gravity;
      p.q = quat_integrate(p.q, p.w, h);
    }

    if (cfg.collisions_enabled) pairs = broad_phase(ps, bp);
    else pairs.clear();

    for (int it = 0; it < cfg.jacobi_iterations; ++it) {
      acc.reset(n);
      accumulate_contacts(ps, state.ground, pairs, cfg.ground_enabled, cfg.collisions_enabled,
                          cfg.relaxation, acc);
      if (cfg.shapes_enabled) {
        for (Shape& shape : state.shapes) {
          ShapeMatchResult r = shape_match(shape, ps);
          if (!r.degenerate) shape.rotation = r.rotation;
          for (std::size_t k = 0; k < shape.members.size(); ++k) {
            const int i = shape.members[k];
            if (ps[i].kinematic) continue;
            acc.add(i, cfg.relaxation.shape * r.deltas[k]);
            if (shape.owner < 0 || shape.owner == i) ps[i].q = r.orientations[k];
          }
        }
      }
      apply_average(ps, acc);
    }

    for (std::size_t i = 0; i < n; ++i) {
      Particle& p = ps[i];
      if (p.kinematic) continue;
      p.v = (p.x - x0[i]) / h;
      p.w = quat_to_axis_angle_rate(p.q, q0[i], h);
    }
  }

  for (Particle& p : ps) {
    if (!p.kinematic) {
      p.v *= cfg.damping;
      p.w *= cfg.damping;
    }
    p.f.setZero();
  }

  if (!state_finite(state)) {
    state = snapshot;
    throw Error(ErrorCode::NonFiniteState, "physics step produced a non-finite state");
  }
}

void solve_contacts(std::vector<Particle>& particles, const Plane& plane,
                    const ContactSolveOptions& options) {
  JacobiScratch acc;
  std::vector<std::pair<int, int>> pairs;
  if (options.collisions) pairs = broad_phase(particles);
  for (int it = 0; it < options.iterations; ++it) {
    acc.reset(particles.size());
    accumulate_contacts(particles, plane, pairs, options.ground, options.collisions,
                        options.relaxation, acc);
    apply_average(particles, acc);
  }
}

}  // namespace gpw
