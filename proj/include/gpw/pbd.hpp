#pragma once

#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "gpw/geom.hpp"

namespace gpw {

struct Particle {
  Vec3 x = Vec3::Zero();
  Vec3 v = Vec3::Zero();
  UnitQuat q;
  Vec3 w = Vec3::Zero();
  //! External force, consumed and cleared by the next physics step.
  Vec3 f = Vec3::Zero();
  double radius = 0.005;
  double mass = 0.1;
  Vec3 rest_x = Vec3::Zero();
  UnitQuat rest_q;
  bool kinematic = false;
  int body = -1;

  double inv_mass() const { return kinematic ? 0.0 : 1.0 / mass; }
};

//! Shape-matching group. Cached quantities are computed by make_shape.
struct Shape {
  std::vector<int> members;
  double stiffness = 1.0;
  Vec3 rest_centroid = Vec3::Zero();
  double total_mass = 0.0;
  //! Particle whose orientation this shape drives; -1 drives every member.
  int owner = -1;
  //! Last non-degenerate rotation, reused when the fit degenerates.
  Mat3 rotation = Mat3::Identity();
};

//! Throws Error(Config) for fewer than two members or stiffness outside (0, 1].
Shape make_shape(std::span<const Particle> particles, std::vector<int> members,
                 double stiffness, int owner = -1);

struct Body {
  bool kinematic = false;
  bool rigid = true;
  //! Whether particles of this body collide with each other.
  bool self_collide = false;
};

struct Relaxation {
  double ground = 1.0;
  double collision = 0.8;
  double shape = 1.0;
};

struct PhysicsConfig {
  double dt = 1.0 / 30.0;
  int substeps = 20;
  int jacobi_iterations = 4;
  double damping = 0.9;
  //! Applied as an acceleration, independent of the external force field.
  Vec3 gravity{0.0, 0.0, -9.81};
  Relaxation relaxation;
  bool ground_enabled = true;
  bool collisions_enabled = true;
  bool shapes_enabled = true;

  void validate() const;
};

struct KinematicTarget {
  Vec3 x = Vec3::Zero();
  UnitQuat q;
};

struct PhysicsState {
  std::vector<Particle> particles;
  std::vector<Shape> shapes;
  std::vector<Body> bodies;
  Plane ground;
  //! Targets queued by set_kinematic_targets, indexed by body.
  std::vector<std::optional<std::vector<KinematicTarget>>> pending_targets;

  //! Particle indices of a body in ascending order.
  std::vector<int> body_particles(int body) const;
  int add_body(const Body& body);
};

//! Correction pushing a particle out of the ground plane (zero when not penetrating).
Vec3 ground_delta(const Particle& p, const Plane& plane, double relaxation);

struct CollisionDelta {
  Vec3 di = Vec3::Zero();
  Vec3 dj = Vec3::Zero();
  bool active = false;
};

//! Pairwise separation split by inverse mass. Coincident centers separate along +x
//! (i moves toward +x).
CollisionDelta collision_delta(const Particle& pi, const Particle& pj, double relaxation);

struct ShapeMatchResult {
  //! Position correction per member, in member order.
  std::vector<Vec3> deltas;
  Mat3 rotation = Mat3::Identity();
  //! New orientation per member (R_S * rest_q).
  std::vector<UnitQuat> orientations;
  bool degenerate = false;
};

//! Oriented-particle shape matching. A_S = sum m x xbar^T + sum (m r^2 / 5) R_i Rbar_i^T
//! - M c cbar^T; the rotation comes from its polar decomposition.
ShapeMatchResult shape_match(const Shape& shape, std::span<const Particle> particles);

struct BroadPhaseOptions {
  //! When non-empty, pairs inside a body without self_collide are dropped, and
  //! pairs of two kinematic particles are dropped.
  std::span<const Body> bodies;
};

//! All pairs (i < j) with |xi - xj| < ri + rj + max radius, sorted by (i, j).
std::vector<std::pair<int, int>> broad_phase(std::span<const Particle> particles,
                                             const BroadPhaseOptions& options = {});

//! Queues poses (one per body particle, ascending index order) applied at the
//! start of the next physics step. Throws Error(UnknownBody) for unknown or
//! non-kinematic bodies and Error(ShapeMismatch) for a wrong pose count.
void set_kinematic_targets(PhysicsState& state, int body, std::vector<KinematicTarget> poses);

//! One step of oriented-particle PBD with Jacobi constraint averaging. Throws
//! Error(NonFiniteState) and restores the previous state when the result is
//! not finite.
void physics_step(PhysicsState& state, const PhysicsConfig& config);

struct ContactSolveOptions {
  int iterations = 4;
  Relaxation relaxation;
  bool ground = true;
  bool collisions = true;
};

//! Jacobi ground/collision projection on positions only (no integration, no
//! velocity update). Used when Gaussians temporarily act as particles.
void solve_contacts(std::vector<Particle>& particles, const Plane& plane,
                    const ContactSolveOptions& options);

}  // namespace gpw
