#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "gpw/image.hpp"
#include "gpw/pbd.hpp"
#include "gpw/splat.hpp"

namespace gpw {

//! Rigid link from a Gaussian to its parent particle, expressed in the particle frame.
struct Bond {
  int gaussian = -1;
  int particle = -1;
  Vec3 offset = Vec3::Zero();
  UnitQuat rotation;
};

struct ObjectInfo {
  std::string name;
  int body = -1;
  int segment = -1;
  bool rigid = true;
  bool kinematic = false;
};

//! Particles (physics) plus Gaussians (appearance) coupled by bonds. Background
//! Gaussians are unbonded and static.
struct EmbodiedModel {
  PhysicsState physics;
  std::vector<Gaussian> gaussians;
  //! Sorted by Gaussian index.
  std::vector<Bond> bonds;
  std::vector<ObjectInfo> objects;

  //! Parent particle per Gaussian, -1 for unbonded ones.
  std::vector<int> parents() const;
  //! True for Gaussians bonded to a non-kinematic particle.
  std::vector<std::uint8_t> object_gaussian_mask() const;
  int segment_channels() const;
  //! Throws Error(Config) when a bond references a missing Gaussian or particle.
  void validate() const;
};

//! Camera image used by the correction step.
struct View {
  Camera camera;
  Image rgb;
};

struct CorrectionConfig {
  double kp = 60.0;
  int adam_iterations = 5;
  double displacement_threshold = 0.002;
  double lr_position = 1e-3;
  double lr_rotation = 1e-4;
  double lr_color = 5e-4;
  double lr_opacity = 5e-4;
  bool scale_frozen = true;
  double lr_scale = 1e-3;
  //! Weight each Gaussian displacement by its opacity when summing forces.
  bool opacity_weighting = true;

  void validate() const;
};

struct AttachResult {
  std::vector<Bond> bonds;
  std::vector<int> unbonded;
};

//! Bonds each Gaussian to its nearest particle (ties to the lowest index). Gaussians
//! farther than `threshold` stay unbonded.
AttachResult attach_bonds(std::span<const Gaussian> gaussians, std::span<const Particle> particles,
                          double threshold = std::numeric_limits<double>::infinity());

//! Moves bonded Gaussians to parent pose composed with the bond transform.
void apply_bonds(EmbodiedModel& model);

struct VisualForceResult {
  std::vector<Vec3> forces;
  double loss_first = 0.0;
  double loss_last = 0.0;
  int contributing_gaussians = 0;
};

//! Photometric optimization of the Gaussians against the observations; returns
//! per-particle forces K_p * sum o_j (x_j - x_j0). Positions and rotations are
//! restored afterwards while color and opacity changes persist.
VisualForceResult compute_visual_forces(EmbodiedModel& model, std::span<const View> observations,
                                        const CorrectionConfig& cfg, std::uint64_t seed);

struct KinematicCommand {
  int body = -1;
  std::vector<KinematicTarget> targets;
};

struct StepStats {
  double physics_ms = 0.0;
  double correction_ms = 0.0;
  double max_force = 0.0;
};

//! Prediction (kinematics, physics step, bond transport) followed by correction,
//! whose forces are consumed by the next step. `correct == false` skips correction.
StepStats predict_correct_step(EmbodiedModel& model, std::span<const View> observations,
                               std::span<const KinematicCommand> kinematics,
                               const PhysicsConfig& physics, const CorrectionConfig& correction,
                               std::uint64_t seed, bool correct = true);

// ----------------------------------------------------------------------------
// Initialization

struct InitView {
  Camera camera;
  Image rgb;
  //! Single-channel instance mask for the object being initialized.
  Image mask;
  //! Optional single-channel mask of pixels covered by other objects. Such pixels
  //! may hide this object, so they neither prune Gaussians nor enter the
  //! segmentation loss. Empty means no occluders.
  Image occluded;
};

struct Aabb {
  Vec3 lo = Vec3::Zero();
  Vec3 hi = Vec3::Zero();
};

struct ObjectMeta {
  std::string name;
  bool rigid = true;
  //! Overrides InitConfig::particle_mass when positive.
  double mass = 0.0;
  int segment = 0;
  double deformable_stiffness = 0.3;
  //! Neighborhood radius of deformable shapes in particle radii.
  double neighbor_factor = 2.5;
};

struct InitConfig {
  int joint_iterations = 80;
  int refine_iterations = 250;
  double opacity_prune = 0.3;
  double gaussian_radius = 0.005;
  double particle_mass = 0.1;
  int jacobi_iterations = 4;
  double lr_position = 1e-4;
  double lr_color = 2.5e-3;
  double lr_scale = 1e-3;
  double lr_opacity = 1e-2;
  double lr_rotation = 1e-3;
  double initial_opacity = 0.5;
  //! Bond threshold in particle radii.
  double bond_threshold_factor = 3.0;
  int densify_interval = 50;
  //! Mean |dL/d screen position| above which a Gaussian is cloned or split.
  double densify_grad_threshold = 1.0;
  double split_scale_divisor = 1.6;
  //! Upper bound on Gaussians as a multiple of the particle count.
  double max_gaussians_factor = 4.0;
  std::uint64_t seed = 7;

  void validate() const;
};

struct InitReport {
  int filled = 0;
  int after_mask_prune = 0;
  int after_opacity_prune = 0;
  int densified = 0;
  int discarded_unbonded = 0;
  double final_loss = 0.0;
};

//! Particles, shapes, Gaussians and bonds of one object with object-local indices.
struct ObjectBuild {
  std::vector<Particle> particles;
  std::vector<Shape> shapes;
  std::vector<Gaussian> gaussians;
  std::vector<Bond> bonds;
  InitReport report;
};

//! Grid fill, mask pruning, joint photometric/contact optimization, opacity pruning,
//! particle and shape creation, refinement with densification and bonding.
//! Throws Error(NoViews) and Error(EmptyObject).
ObjectBuild initialize_object(std::span<const InitView> views, const Aabb& bbox,
                              const ObjectMeta& meta, const InitConfig& cfg, const Plane& ground);

//! Appends an object to the model as a new body; returns the object index.
int add_object(EmbodiedModel& model, ObjectBuild build, const ObjectMeta& meta);

// ----------------------------------------------------------------------------
// Serialization

inline constexpr int kModelFormatVersion = 1;

//! JSON document with flat per-field arrays. Throws Error(Config) on a missing or
//! unsupported version and on malformed content.
std::string model_to_json(const EmbodiedModel& model);
EmbodiedModel model_from_json(const std::string& text);
//! Throws Error(Io) when the file cannot be written or read.
void save_model(const EmbodiedModel& model, const std::string& path);
EmbodiedModel load_model(const std::string& path);

}  // namespace gpw
