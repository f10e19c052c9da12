#pragma once

#include <vector>

#include "gpw/harness/scenario.hpp"

namespace gpw::harness {

//! Object geometry in the object frame (origin at the bottom-face center, z up).
struct ObjectGeometry {
  ObjectSpec spec;

  bool contains(const Vec3& p) const;
  Aabb local_bounds() const;
  //! Surface samples with outward normals at roughly `spacing`.
  void sample_surface(double spacing, std::vector<Vec3>& points, std::vector<Vec3>& normals) const;
  Vec3 color(const Vec3& local) const;
  RigidTransform pose() const;
  //! World-space axis-aligned bounds at the initial pose.
  Aabb world_bounds() const;
  std::vector<Vec3> default_queries() const;
};

struct Frame {
  int step = 0;
  //! One image per camera: training cameras first, then evaluation cameras.
  std::vector<Image> rgb;
  //! Per-camera segmentation, one channel per object followed by one for the
  //! pusher when the scenario has one.
  std::vector<Image> seg;
  //! Ground-truth world positions of all query points.
  std::vector<Vec3> queries;
};

//! Reference scene driven by a physics rollout with the scenario's reality parameters.
class Reality {
 public:
  explicit Reality(const Scenario& scenario);

  int step() const { return step_; }
  void advance();
  Frame frame() const;

  const std::vector<Camera>& cameras() const { return cameras_; }
  int train_count() const { return train_count_; }
  const std::vector<Gaussian>& gaussians() const { return gaussians_; }
  //! Table Gaussians (static, unbonded).
  std::vector<Gaussian> background() const;
  //! Pusher Gaussians with their offsets relative to the pusher sphere centers.
  struct PusherPart {
    Gaussian gaussian;
    int sphere = 0;
  };
  std::vector<PusherPart> pusher_parts() const;
  //! Query point ownership: object index per query.
  const std::vector<int>& query_objects() const { return query_object_; }
  const PhysicsState& physics() const { return state_; }
  int pusher_body() const { return pusher_body_; }
  //! Pusher sphere poses for a step (used by both reality and the model).
  std::vector<KinematicTarget> pusher_targets(int step) const;

 private:
  void sync_gaussians();

  Scenario sc_;
  std::vector<ObjectGeometry> geometry_;
  std::vector<Camera> cameras_;
  int train_count_ = 0;
  PhysicsState state_;
  int pusher_body_ = -1;
  std::vector<Gaussian> gaussians_;
  std::vector<Bond> bonds_;
  int background_count_ = 0;
  std::vector<int> pusher_gaussians_;
  struct QueryBinding {
    int particle;
    Vec3 offset;
  };
  std::vector<QueryBinding> query_bindings_;
  std::vector<int> query_object_;
  int step_ = 0;
};

inline Reality generate_reality(const Scenario& scenario) { return Reality(scenario); }

}  // namespace gpw::harness
