#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gpw/model.hpp"

namespace gpw::harness {

inline constexpr int kScenarioVersion = 1;

struct Texture {
  //! "checker", "noise" or "solid".
  std::string kind = "checker";
  Vec3 color_a{0.85, 0.2, 0.15};
  Vec3 color_b{0.95, 0.85, 0.3};
  double cell = 0.02;
};

struct ObjectSpec {
  std::string name;
  //! "box", "cylinder", "tblock" or "rope".
  std::string shape = "box";
  //! box: edge lengths; cylinder: (diameter, diameter, height); tblock: bar
  //! (length, width, height) with a stem of the same width; rope: (length, diameter, diameter).
  Vec3 size{0.06, 0.06, 0.06};
  //! Center of the bottom face in world coordinates.
  Vec3 position = Vec3::Zero();
  double yaw = 0.0;
  Texture texture;
  bool rigid = true;
  //! Per-particle mass used by the model.
  double mass = 0.1;
  //! Initial velocity of the object in reality.
  Vec3 reality_velocity = Vec3::Zero();
  Vec3 reality_angular_velocity = Vec3::Zero();
  //! Object-frame query points (relative to the bottom center); defaults are generated.
  std::vector<Vec3> query_points;
};

struct Waypoint {
  int step = 0;
  Vec3 position = Vec3::Zero();
};

//! Scripted kinematic body made of spheres; positions are linearly interpolated between waypoints.
struct PusherSpec {
  double radius = 0.008;
  //! Sphere centers relative to the pusher position.
  std::vector<Vec3> spheres{Vec3::Zero()};
  Vec3 color{0.2, 0.25, 0.3};
  std::vector<Waypoint> waypoints;

  Vec3 position_at(int step) const;
};

struct CameraSpec {
  Vec3 eye = Vec3::Zero();
  Vec3 target = Vec3::Zero();
  //! Focal length as a multiple of the image width.
  double focal = 1.1;
};

struct TableSpec {
  Vec2 size{0.5, 0.5};
  double spacing = 0.008;
  Vec3 color{0.55, 0.55, 0.58};
  double noise = 0.04;
};

struct Scenario {
  std::string name;
  std::uint64_t seed = 1;
  int duration = 90;
  int width = 160;
  int height = 90;
  Plane ground;
  TableSpec table;
  std::vector<CameraSpec> train_cameras;
  std::vector<CameraSpec> eval_cameras;
  std::vector<ObjectSpec> objects;
  std::optional<PusherSpec> pusher;
  PhysicsConfig reality_physics;
  double reality_particle_radius = 0.005;
  PhysicsConfig model_physics;
  CorrectionConfig correction;
  InitConfig init;

  //! Throws Error(Config) when the scenario is inconsistent.
  void validate() const;
  std::vector<Camera> train_rig() const;
  std::vector<Camera> eval_rig() const;
};

Scenario parse_scenario(const std::string& json_text);
Scenario load_scenario(const std::string& path);
std::string scenario_to_json(const Scenario& s);

//! Synthetic analogues: "single_push", "two_object_push", "gravity_drop", "static".
Scenario builtin_scenario(const std::string& name);
std::vector<std::string> builtin_scenario_names();

//! Resolution change keeping the field of view.
void set_resolution(Scenario& s, int width, int height);
//! Keeps the first n training cameras (n >= 1).
void set_train_cameras(Scenario& s, int n);

}  // namespace gpw::harness
