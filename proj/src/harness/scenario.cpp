#include "gpw/harness/scenario.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <json.hpp>

namespace gpw::harness {

using nlohmann::json;

Vec3 PusherSpec::position_at(int step) const {
  if (waypoints.empty()) return Vec3::Zero();
  if (step <= waypoints.front().step) return waypoints.front().position;
  for (std::size_t k = 1; k < waypoints.size(); ++k) {
    const Waypoint& a = waypoints[k - 1];
    const Waypoint& b = waypoints[k];
    if (step <= b.step) {
      const double t = static_cast<double>(step - a.step) / (b.step - a.step);
      return a.position + t * (b.position - a.position);
    }
  }
  return waypoints.back().position;
}

namespace {

std::vector<Camera> make_rig(const std::vector<CameraSpec>& specs, int w, int h) {
  std::vector<Camera> out;
  for (const CameraSpec& c : specs)
    out.push_back(Camera::look_at(c.eye, c.target, Vec3::UnitZ(), c.focal * w, c.focal * w, w, h));
  return out;
}

void fail(const std::string& msg) { throw Error(ErrorCode::Config, msg); }

}  // namespace

std::vector<Camera> Scenario::train_rig() const { return make_rig(train_cameras, width, height); }
std::vector<Camera> Scenario::eval_rig() const { return make_rig(eval_cameras, width, height); }

void Scenario::validate() const {
  if (duration < 1) fail("duration must be >= 1");
  if (width < 8 || height < 8 || width > 4096 || height > 4096) fail("resolution out of range");
  if (train_cameras.empty()) fail("at least one training camera is required");
  if (eval_cameras.empty()) fail("at least one evaluation camera is required");
  if (objects.empty()) fail("scenario has no objects");
  if (std::abs(ground.normal.norm() - 1.0) > 1e-9) fail("ground normal must be unit length");
  for (const auto& c : train_cameras)
    if ((c.eye - c.target).norm() < 1e-6 || !(c.focal > 0.0)) fail("invalid camera");
  for (const auto& c : eval_cameras)
    if ((c.eye - c.target).norm() < 1e-6 || !(c.focal > 0.0)) fail("invalid camera");
  for (const auto& o : objects) {
    if (o.shape != "box" && o.shape != "cylinder" && o.shape != "tblock" && o.shape != "rope")
      fail("unknown object shape: " + o.shape);
    if (!(o.size.minCoeff() > 0.0)) fail("object size must be positive");
    if (!(o.mass > 0.0)) fail("object mass must be positive");
    if (o.texture.kind != "checker" && o.texture.kind != "noise" && o.texture.kind != "solid")
      fail("unknown texture: " + o.texture.kind);
  }
  if (pusher) {
    if (!(pusher->radius > 0.0) || pusher->spheres.empty()) fail("invalid pusher");
    for (std::size_t k = 1; k < pusher->waypoints.size(); ++k)
      if (pusher->waypoints[k].step <= pusher->waypoints[k - 1].step)
        fail("pusher waypoints must have increasing steps");
  }
  if (!(reality_particle_radius > 0.0)) fail("reality particle radius must be positive");
  reality_physics.validate();
  model_physics.validate();
  correction.validate();
  init.validate();
}

// ----------------------------------------------------------------------------
// JSON

namespace {

Vec3 vec3(const json& j) {
  if (!j.is_array() || j.size() != 3) fail("expected a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

json arr(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

template <class T>
void opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void opt_vec(const json& j, const char* key, Vec3& out) {
  if (j.contains(key)) out = vec3(j.at(key));
}

PhysicsConfig physics_from(const json& j, PhysicsConfig p) {
  opt(j, "dt", p.dt);
  opt(j, "substeps", p.substeps);
  opt(j, "jacobi_iterations", p.jacobi_iterations);
  opt(j, "damping", p.damping);
  opt_vec(j, "gravity", p.gravity);
  if (j.contains("relaxation")) {
    const json& r = j["relaxation"];
    opt(r, "ground", p.relaxation.ground);
    opt(r, "collision", p.relaxation.collision);
    opt(r, "shape", p.relaxation.shape);
  }
  return p;
}

json physics_to(const PhysicsConfig& p) {
  return {{"dt", p.dt},
          {"substeps", p.substeps},
          {"jacobi_iterations", p.jacobi_iterations},
          {"damping", p.damping},
          {"gravity", arr(p.gravity)},
          {"relaxation",
           {{"ground", p.relaxation.ground},
            {"collision", p.relaxation.collision},
            {"shape", p.relaxation.shape}}}};
}

CameraSpec camera_from(const json& j) {
  CameraSpec c;
  c.eye = vec3(j.at("eye"));
  c.target = vec3(j.at("target"));
  opt(j, "focal", c.focal);
  return c;
}

}  // namespace

Scenario parse_scenario(const std::string& text) {
  Scenario s;
  try {
    const json j = json::parse(text);
    if (!j.contains("version")) fail("scenario has no version");
    if (j["version"].get<int>() != kScenarioVersion) fail("unsupported scenario version");
    s.name = j.at("name").get<std::string>();
    opt(j, "seed", s.seed);
    opt(j, "duration", s.duration);
    if (j.contains("resolution")) {
      s.width = j["resolution"].at(0).get<int>();
      s.height = j["resolution"].at(1).get<int>();
    }
    if (j.contains("ground")) {
      opt_vec(j["ground"], "normal", s.ground.normal);
      opt(j["ground"], "offset", s.ground.offset);
    }
    if (j.contains("table")) {
      const json& t = j["table"];
      if (t.contains("size")) s.table.size = Vec2(t["size"].at(0), t["size"].at(1));
      opt(t, "spacing", s.table.spacing);
      opt_vec(t, "color", s.table.color);
      opt(t, "noise", s.table.noise);
    }
    for (const json& c : j.at("cameras").at("train")) s.train_cameras.push_back(camera_from(c));
    for (const json& c : j.at("cameras").at("eval")) s.eval_cameras.push_back(camera_from(c));
    for (const json& o : j.at("objects")) {
      ObjectSpec spec;
      spec.name = o.at("name").get<std::string>();
      opt(o, "shape", spec.shape);
      opt_vec(o, "size", spec.size);
      opt_vec(o, "position", spec.position);
      opt(o, "yaw", spec.yaw);
      opt(o, "rigid", spec.rigid);
      opt(o, "mass", spec.mass);
      opt_vec(o, "reality_velocity", spec.reality_velocity);
      opt_vec(o, "reality_angular_velocity", spec.reality_angular_velocity);
      if (o.contains("texture")) {
        const json& t = o["texture"];
        opt(t, "kind", spec.texture.kind);
        if (t.contains("colors")) {
          spec.texture.color_a = vec3(t["colors"].at(0));
          spec.texture.color_b = vec3(t["colors"].at(1));
        }
        opt(t, "cell", spec.texture.cell);
      }
      if (o.contains("query_points"))
        for (const json& q : o["query_points"]) spec.query_points.push_back(vec3(q));
      s.objects.push_back(spec);
    }
    if (j.contains("pusher") && !j["pusher"].is_null()) {
      const json& p = j["pusher"];
      PusherSpec ps;
      opt(p, "radius", ps.radius);
      if (p.contains("spheres")) {
        ps.spheres.clear();
        for (const json& c : p["spheres"]) ps.spheres.push_back(vec3(c));
      }
      opt_vec(p, "color", ps.color);
      for (const json& w : p.at("waypoints"))
        ps.waypoints.push_back({w.at("step").get<int>(), vec3(w.at("position"))});
      s.pusher = ps;
    }
    if (j.contains("reality")) {
      const json& r = j["reality"];
      s.reality_physics = physics_from(r, s.reality_physics);
      opt(r, "particle_radius", s.reality_particle_radius);
    }
    if (j.contains("model")) {
      const json& m = j["model"];
      if (m.contains("physics")) s.model_physics = physics_from(m["physics"], s.model_physics);
      if (m.contains("correction")) {
        const json& c = m["correction"];
        CorrectionConfig& cc = s.correction;
        opt(c, "kp", cc.kp);
        opt(c, "adam_iterations", cc.adam_iterations);
        opt(c, "displacement_threshold", cc.displacement_threshold);
        opt(c, "lr_position", cc.lr_position);
        opt(c, "lr_rotation", cc.lr_rotation);
        opt(c, "lr_color", cc.lr_color);
        opt(c, "lr_opacity", cc.lr_opacity);
        opt(c, "opacity_weighting", cc.opacity_weighting);
        opt(c, "scale_frozen", cc.scale_frozen);
      }
      if (m.contains("init")) {
        const json& c = m["init"];
        InitConfig& ic = s.init;
        opt(c, "joint_iterations", ic.joint_iterations);
        opt(c, "refine_iterations", ic.refine_iterations);
        opt(c, "opacity_prune", ic.opacity_prune);
        opt(c, "gaussian_radius", ic.gaussian_radius);
        opt(c, "particle_mass", ic.particle_mass);
        opt(c, "densify_grad_threshold", ic.densify_grad_threshold);
        opt(c, "seed", ic.seed);
      }
    }
  } catch (const json::exception& e) {
    fail(std::string("malformed scenario: ") + e.what());
  }
  s.validate();
  return s;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorCode::Config, "cannot read scenario " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_scenario(ss.str());
}

std::string scenario_to_json(const Scenario& s) {
  json j;
  j["version"] = kScenarioVersion;
  j["name"] = s.name;
  j["seed"] = s.seed;
  j["duration"] = s.duration;
  j["resolution"] = {s.width, s.height};
  j["ground"] = {{"normal", arr(s.ground.normal)}, {"offset", s.ground.offset}};
  j["table"] = {{"size", {s.table.size.x(), s.table.size.y()}},
                {"spacing", s.table.spacing},
                {"color", arr(s.table.color)},
                {"noise", s.table.noise}};
  auto cams = [](const std::vector<CameraSpec>& v) {
    json a = json::array();
    for (const auto& c : v) a.push_back({{"eye", arr(c.eye)}, {"target", arr(c.target)}, {"focal", c.focal}});
    return a;
  };
  j["cameras"] = {{"train", cams(s.train_cameras)}, {"eval", cams(s.eval_cameras)}};
  json objs = json::array();
  for (const ObjectSpec& o : s.objects) {
    json q = json::array();
    for (const Vec3& p : o.query_points) q.push_back(arr(p));
    objs.push_back({{"name", o.name},
                    {"shape", o.shape},
                    {"size", arr(o.size)},
                    {"position", arr(o.position)},
                    {"yaw", o.yaw},
                    {"rigid", o.rigid},
                    {"mass", o.mass},
                    {"reality_velocity", arr(o.reality_velocity)},
                    {"reality_angular_velocity", arr(o.reality_angular_velocity)},
                    {"texture",
                     {{"kind", o.texture.kind},
                      {"colors", {arr(o.texture.color_a), arr(o.texture.color_b)}},
                      {"cell", o.texture.cell}}},
                    {"query_points", q}});
  }
  j["objects"] = objs;
  if (s.pusher) {
    json sph = json::array(), wps = json::array();
    for (const Vec3& c : s.pusher->spheres) sph.push_back(arr(c));
    for (const Waypoint& w : s.pusher->waypoints)
      wps.push_back({{"step", w.step}, {"position", arr(w.position)}});
    j["pusher"] = {{"radius", s.pusher->radius},
                   {"spheres", sph},
                   {"color", arr(s.pusher->color)},
                   {"waypoints", wps}};
  }
  json reality = physics_to(s.reality_physics);
  reality["particle_radius"] = s.reality_particle_radius;
  j["reality"] = reality;
  const CorrectionConfig& c = s.correction;
  const InitConfig& ic = s.init;
  j["model"] = {{"physics", physics_to(s.model_physics)},
                {"correction",
                 {{"kp", c.kp},
                  {"adam_iterations", c.adam_iterations},
                  {"displacement_threshold", c.displacement_threshold},
                  {"lr_position", c.lr_position},
                  {"lr_rotation", c.lr_rotation},
                  {"lr_color", c.lr_color},
                  {"lr_opacity", c.lr_opacity},
                  {"opacity_weighting", c.opacity_weighting},
                  {"scale_frozen", c.scale_frozen}}},
                {"init",
                 {{"joint_iterations", ic.joint_iterations},
                  {"refine_iterations", ic.refine_iterations},
                  {"opacity_prune", ic.opacity_prune},
                  {"gaussian_radius", ic.gaussian_radius},
                  {"particle_mass", ic.particle_mass},
                  {"densify_grad_threshold", ic.densify_grad_threshold},
                  {"seed", ic.seed}}}};
  return j.dump(2);
}

// ----------------------------------------------------------------------------
// Built-in scenarios

namespace {

Scenario base_scenario(const std::string& name) {
  Scenario s;
  s.name = name;
  const Vec3 target(0.0, 0.0, 0.02);
  s.train_cameras = {{{0.30, -0.26, 0.24}, target, 1.1},
                     {{-0.32, -0.22, 0.26}, target, 1.1},
                     {{0.02, 0.36, 0.28}, target, 1.1}};
  s.eval_cameras = {{{0.36, 0.14, 0.22}, target, 1.1}, {{-0.26, 0.28, 0.30}, target, 1.1}};
  s.reality_physics.damping = 0.97;
  return s;
}

ObjectSpec box(const std::string& name, const Vec3& pos, double edge, const Vec3& ca,
               const Vec3& cb) {
  ObjectSpec o;
  o.name = name;
  o.shape = "box";
  o.size = Vec3::Constant(edge);
  o.position = pos;
  o.texture.color_a = ca;
  o.texture.color_b = cb;
  return o;
}

}  // namespace

std::vector<std::string> builtin_scenario_names() {
  return {"single_push", "two_object_push", "gravity_drop", "static"};
}

Scenario builtin_scenario(const std::string& name) {
  Scenario s = base_scenario(name);
  if (name == "single_push") {
    s.duration = 120;
    s.objects = {box("box", {0.0, 0.0, 0.0}, 0.06, {0.85, 0.2, 0.15}, {0.95, 0.85, 0.3})};
    PusherSpec p;
    p.spheres = {Vec3::Zero(), Vec3(0, 0, 0.016)};
    p.waypoints = {{0, {-0.05, 0.012, 0.009}}, {5, {-0.05, 0.012, 0.009}},
                   {40, {0.02, 0.012, 0.009}}, {120, {0.02, 0.012, 0.009}}};
    s.pusher = p;
  } else if (name == "two_object_push") {
    s.duration = 90;
    s.objects = {box("box_a", {-0.085, 0.0, 0.0}, 0.05, {0.85, 0.2, 0.15}, {0.95, 0.85, 0.3}),
                 box("box_b", {-0.015, 0.008, 0.0}, 0.05, {0.15, 0.35, 0.85}, {0.9, 0.9, 0.95})};
    // a fast push so that box_b is driven mostly through the contact
    PusherSpec p;
    p.spheres = {Vec3::Zero(), Vec3(0, 0, 0.016)};
    p.waypoints = {{0, {-0.13, 0.0, 0.02}}, {5, {-0.13, 0.0, 0.02}},
                   {25, {-0.05, 0.0, 0.02}}, {90, {-0.05, 0.0, 0.02}}};
    s.pusher = p;
    s.reality_physics.damping = 0.95;
  } else if (name == "gravity_drop") {
    s.duration = 90;
    // aim higher so the box is fully in view at release
    for (auto* rig : {&s.train_cameras, &s.eval_cameras})
      for (CameraSpec& c : *rig) c.target.z() = 0.05;
    ObjectSpec o = box("box", {-0.03, 0.0, 0.06}, 0.05, {0.2, 0.7, 0.3}, {0.95, 0.95, 0.8});
    o.reality_velocity = Vec3(0.15, 0.05, 0.0);
    o.reality_angular_velocity = Vec3(0.0, 0.0, 1.5);
    s.objects = {o};
    s.reality_physics.damping = 0.93;
    s.model_physics.gravity = Vec3(0.0, 0.0, -9.0);
  } else if (name == "static") {
    s.duration = 30;
    s.objects = {box("box", {0.0, 0.0, 0.0}, 0.06, {0.85, 0.2, 0.15}, {0.95, 0.85, 0.3})};
    s.reality_physics = s.model_physics;
  } else {
    fail("unknown scenario: " + name);
  }
  s.validate();
  return s;
}

void set_resolution(Scenario& s, int width, int height) {
  s.width = width;
  s.height = height;
  s.validate();
}

void set_train_cameras(Scenario& s, int n) {
  if (n < 1) fail("at least one training camera is required");
  if (n <= static_cast<int>(s.train_cameras.size())) {
    s.train_cameras.resize(n);
    return;
  }
  // Extra cameras on a ring at the mean distance and height of the existing ones.
  double radius = 0.0, height = 0.0;
  for (const CameraSpec& c : s.train_cameras) {
    radius += (c.eye - c.target).head<2>().norm();
    height += c.eye.z();
  }
  radius /= s.train_cameras.size();
  height /= s.train_cameras.size();
  const CameraSpec ref = s.train_cameras.front();
  const int extra = n - static_cast<int>(s.train_cameras.size());
  for (int k = 0; k < extra; ++k) {
    const double a = 2.0 * std::numbers::pi * (k + 0.5) / extra + 0.3;
    CameraSpec c = ref;
    c.eye = Vec3(ref.target.x() + radius * std::cos(a), ref.target.y() + radius * std::sin(a), height);
    s.train_cameras.push_back(c);
  }
}

}  // namespace gpw::harness
