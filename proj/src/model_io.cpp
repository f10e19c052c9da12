#include <fstream>
#include <sstream>

#include <json.hpp>

#include "gpw/model.hpp"

namespace gpw {

using nlohmann::json;

namespace {

void put3(json& arr, const Vec3& v) {
  for (int k = 0; k < 3; ++k) arr.push_back(v[k]);
}

void put4(json& arr, const UnitQuat& q) {
  const Vec4 c = q.wxyz();
  for (int k = 0; k < 4; ++k) arr.push_back(c[k]);
}

Vec3 get3(const json& arr, std::size_t i) {
  return {arr.at(3 * i).get<double>(), arr.at(3 * i + 1).get<double>(),
          arr.at(3 * i + 2).get<double>()};
}

UnitQuat get4(const json& arr, std::size_t i) {
  return UnitQuat::from_wxyz(arr.at(4 * i).get<double>(), arr.at(4 * i + 1).get<double>(),
                             arr.at(4 * i + 2).get<double>(), arr.at(4 * i + 3).get<double>());
}

void check_length(const json& arr, std::size_t n, std::size_t stride, const char* what) {
  if (!arr.is_array() || arr.size() != n * stride)
    throw Error(ErrorCode::Config, std::string("model field has wrong length: ") + what);
}

}  // namespace

std::string model_to_json(const EmbodiedModel& model) {
  json j;
  j["version"] = kModelFormatVersion;
  const auto& ps = model.physics.particles;
  json px = json::array(), pv = json::array(), pq = json::array(), pw = json::array(),
       pf = json::array(), pr = json::array(), pm = json::array(), prx = json::array(),
       prq = json::array(), pk = json::array(), pb = json::array();
  for (const Particle& p : ps) {
    put3(px, p.x);
    put3(pv, p.v);
    put4(pq, p.q);
    put3(pw, p.w);
    put3(pf, p.f);
    pr.push_back(p.radius);
    pm.push_back(p.mass);
    put3(prx, p.rest_x);
    put4(prq, p.rest_q);
    pk.push_back(p.kinematic ? 1 : 0);
    pb.push_back(p.body);
  }
  j["particles"] = {{"count", ps.size()}, {"x", px}, {"v", pv}, {"q", pq}, {"w", pw},
                    {"f", pf}, {"radius", pr}, {"mass", pm}, {"rest_x", prx},
                    {"rest_q", prq}, {"kinematic", pk}, {"body", pb}};

  json shapes = json::array();
  for (const Shape& s : model.physics.shapes) {
    json rot = json::array();
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) rot.push_back(s.rotation(r, c));
    shapes.push_back({{"members", s.members}, {"stiffness", s.stiffness}, {"owner", s.owner},
                      {"rotation", rot}});
  }
  j["shapes"] = shapes;

  json bodies = json::array();
  for (const Body& b : model.physics.bodies)
    bodies.push_back({{"kinematic", b.kinematic}, {"rigid", b.rigid},
                      {"self_collide", b.self_collide}});
  j["bodies"] = bodies;
  const Vec3& n = model.physics.ground.normal;
  j["ground"] = {{"normal", {n.x(), n.y(), n.z()}}, {"offset", model.physics.ground.offset}};

  const auto& gs = model.gaussians;
  json gx = json::array(), gq = json::array(), gsc = json::array(), go = json::array(),
       gc = json::array(), gseg = json::array();
  for (const Gaussian& g : gs) {
    put3(gx, g.x);
    put4(gq, g.q);
    put3(gsc, g.scale);
    go.push_back(g.opacity);
    put3(gc, g.color);
    gseg.push_back(g.segment);
  }
  j["gaussians"] = {{"count", gs.size()}, {"x", gx}, {"q", gq}, {"scale", gsc},
                    {"opacity", go}, {"color", gc}, {"segment", gseg}};

  json bg = json::array(), bp = json::array(), bo = json::array(), br = json::array();
  for (const Bond& b : model.bonds) {
    bg.push_back(b.gaussian);
    bp.push_back(b.particle);
    put3(bo, b.offset);
    put4(br, b.rotation);
  }
  j["bonds"] = {{"count", model.bonds.size()}, {"gaussian", bg}, {"particle", bp},
                {"offset", bo}, {"rotation", br}};

  json objects = json::array();
  for (const ObjectInfo& o : model.objects)
    objects.push_back({{"name", o.name}, {"body", o.body}, {"segment", o.segment},
                       {"rigid", o.rigid}, {"kinematic", o.kinematic}});
  j["objects"] = objects;
  return j.dump(1);
}

EmbodiedModel model_from_json(const std::string& text) {
  EmbodiedModel m;
  try {
    const json j = json::parse(text);
    if (!j.contains("version")) throw Error(ErrorCode::Config, "model document has no version");
    if (j.at("version").get<int>() != kModelFormatVersion)
      throw Error(ErrorCode::Config, "unsupported model version");

    const json& P = j.at("particles");
    const std::size_t np = P.at("count").get<std::size_t>();
    check_length(P.at("x"), np, 3, "particles.x");
    check_length(P.at("v"), np, 3, "particles.v");
    check_length(P.at("q"), np, 4, "particles.q");
    check_length(P.at("w"), np, 3, "particles.w");
    check_length(P.at("f"), np, 3, "particles.f");
    check_length(P.at("radius"), np, 1, "particles.radius");
    check_length(P.at("mass"), np, 1, "particles.mass");
    check_length(P.at("rest_x"), np, 3, "particles.rest_x");
    check_length(P.at("rest_q"), np, 4, "particles.rest_q");
    check_length(P.at("kinematic"), np, 1, "particles.kinematic");
    check_length(P.at("body"), np, 1, "particles.body");
    m.physics.particles.resize(np);
    for (std::size_t i = 0; i < np; ++i) {
      Particle& p = m.physics.particles[i];
      p.x = get3(P["x"], i);
      p.v = get3(P["v"], i);
      p.q = get4(P["q"], i);
      p.w = get3(P["w"], i);
      p.f = get3(P["f"], i);
      p.radius = P["radius"][i].get<double>();
      p.mass = P["mass"][i].get<double>();
      p.rest_x = get3(P["rest_x"], i);
      p.rest_q = get4(P["rest_q"], i);
      p.kinematic = P["kinematic"][i].get<int>() != 0;
      p.body = P["body"][i].get<int>();
      if (!(p.radius > 0.0) || !(p.mass > 0.0))
        throw Error(ErrorCode::Config, "particle radius and mass must be positive");
    }

    for (const json& b : j.at("bodies")) {
      Body body;
      body.kinematic = b.at("kinematic").get<bool>();
      body.rigid = b.at("rigid").get<bool>();
      body.self_collide = b.at("self_collide").get<bool>();
      m.physics.add_body(body);
    }
    const int nb = static_cast<int>(m.physics.bodies.size());
    for (const Particle& p : m.physics.particles)
      if (p.body >= nb) throw Error(ErrorCode::Config, "particle references a missing body");
    const auto& gn = j.at("ground").at("normal");
    m.physics.ground.normal = Vec3(gn.at(0), gn.at(1), gn.at(2)).normalized();
    m.physics.ground.offset = j.at("ground").at("offset").get<double>();

    for (const json& s : j.at("shapes")) {
      std::vector<int> members = s.at("members").get<std::vector<int>>();
      for (int i : members)
        if (i < 0 || i >= static_cast<int>(np))
          throw Error(ErrorCode::Config, "shape references a missing particle");
      Shape shape = make_shape(m.physics.particles, std::move(members),
                               s.at("stiffness").get<double>(), s.at("owner").get<int>());
      const auto& rot = s.at("rotation");
      if (rot.size() != 9) throw Error(ErrorCode::Config, "shape rotation must have 9 entries");
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) shape.rotation(r, c) = rot[3 * r + c].get<double>();
      m.physics.shapes.push_back(std::move(shape));
    }

    const json& G = j.at("gaussians");
    const std::size_t ng = G.at("count").get<std::size_t>();
    check_length(G.at("x"), ng, 3, "gaussians.x");
    check_length(G.at("q"), ng, 4, "gaussians.q");
    check_length(G.at("scale"), ng, 3, "gaussians.scale");
    check_length(G.at("opacity"), ng, 1, "gaussians.opacity");
    check_length(G.at("color"), ng, 3, "gaussians.color");
    check_length(G.at("segment"), ng, 1, "gaussians.segment");
    m.gaussians.resize(ng);
    for (std::size_t i = 0; i < ng; ++i) {
      Gaussian& g = m.gaussians[i];
      g.x = get3(G["x"], i);
      g.q = get4(G["q"], i);
      g.scale = get3(G["scale"], i);
      g.opacity = G["opacity"][i].get<double>();
      g.color = get3(G["color"], i);
      g.segment = G["segment"][i].get<int>();
    }

    const json& B = j.at("bonds");
    const std::size_t nbond = B.at("count").get<std::size_t>();
    check_length(B.at("gaussian"), nbond, 1, "bonds.gaussian");
    check_length(B.at("particle"), nbond, 1, "bonds.particle");
    check_length(B.at("offset"), nbond, 3, "bonds.offset");
    check_length(B.at("rotation"), nbond, 4, "bonds.rotation");
    for (std::size_t i = 0; i < nbond; ++i)
      m.bonds.push_back({B["gaussian"][i].get<int>(), B["particle"][i].get<int>(),
                         get3(B["offset"], i), get4(B["rotation"], i)});

    for (const json& o : j.at("objects")) {
      ObjectInfo info;
      info.name = o.at("name").get<std::string>();
      info.body = o.at("body").get<int>();
      info.segment = o.at("segment").get<int>();
      info.rigid = o.at("rigid").get<bool>();
      info.kinematic = o.at("kinematic").get<bool>();
      m.objects.push_back(info);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Config, std::string("malformed model document: ") + e.what());
  }
  m.validate();
  return m;
}

void save_model(const EmbodiedModel& model, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw Error(ErrorCode::Io, "cannot write " + path);
  f << model_to_json(model) << '\n';
  if (!f) throw Error(ErrorCode::Io, "failed writing " + path);
}

EmbodiedModel load_model(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorCode::Io, "cannot read " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return model_from_json(ss.str());
}

}  // namespace gpw
