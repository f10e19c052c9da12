#include "gpw/model.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>

#include "gpw/adam.hpp"

namespace gpw {

std::vector<int> EmbodiedModel::parents() const {
  std::vector<int> out(gaussians.size(), -1);
  for (const Bond& b : bonds) out[b.gaussian] = b.particle;
  return out;
}

std::vector<std::uint8_t> EmbodiedModel::object_gaussian_mask() const {
  std::vector<std::uint8_t> out(gaussians.size(), 0);
  for (const Bond& b : bonds)
    if (!physics.particles[b.particle].kinematic) out[b.gaussian] = 1;
  return out;
}

int EmbodiedModel::segment_channels() const {
  int k = 0;
  for (const Gaussian& g : gaussians) k = std::max(k, g.segment + 1);
  return k;
}

void EmbodiedModel::validate() const {
  const int ng = static_cast<int>(gaussians.size());
  const int np = static_cast<int>(physics.particles.size());
  int prev = -1;
  for (const Bond& b : bonds) {
    if (b.gaussian < 0 || b.gaussian >= ng || b.particle < 0 || b.particle >= np)
      throw Error(ErrorCode::Config, "bond references a missing gaussian or particle");
    if (b.gaussian <= prev) throw Error(ErrorCode::Config, "bonds must be sorted and unique");
    prev = b.gaussian;
  }
}

void CorrectionConfig::validate() const {
  if (!(kp >= 0.0)) throw Error(ErrorCode::Config, "kp must be non-negative");
  if (adam_iterations < 1) throw Error(ErrorCode::Config, "adam_iterations must be >= 1");
  if (!(displacement_threshold >= 0.0))
    throw Error(ErrorCode::Config, "displacement_threshold must be non-negative");
  for (double lr : {lr_position, lr_rotation, lr_color, lr_opacity, lr_scale})
    if (!(lr >= 0.0)) throw Error(ErrorCode::Config, "learning rates must be non-negative");
}

AttachResult attach_bonds(std::span<const Gaussian> gaussians, std::span<const Particle> particles,
                          double threshold) {
  AttachResult out;
  if (particles.empty()) {
    for (int j = 0; j < static_cast<int>(gaussians.size()); ++j) out.unbonded.push_back(j);
    return out;
  }
  const double limit2 = std::isinf(threshold) ? threshold : threshold * threshold;
  for (int j = 0; j < static_cast<int>(gaussians.size()); ++j) {
    const Vec3& x = gaussians[j].x;
    int best = 0;
    double best_d2 = (particles[0].x - x).squaredNorm();
    for (int i = 1; i < static_cast<int>(particles.size()); ++i) {
      const double d2 = (particles[i].x - x).squaredNorm();
      if (d2 < best_d2) {
        best_d2 = d2;
        best = i;
      }
    }
    if (best_d2 > limit2) {
      out.unbonded.push_back(j);
      continue;
    }
    const Particle& p = particles[best];
    const UnitQuat inv = p.q.inverse();
    out.bonds.push_back({j, best, inv.rotate(x - p.x), inv * gaussians[j].q});
  }
  return out;
}

void apply_bonds(EmbodiedModel& model) {
  for (const Bond& b : model.bonds) {
    const Particle& p = model.physics.particles[b.particle];
    Gaussian& g = model.gaussians[b.gaussian];
    g.x = p.x + p.q.rotate(b.offset);
    g.q = p.q * b.rotation;
  }
}

namespace {

double logit(double a) {
  a = std::clamp(a, 1e-6, 1.0 - 1e-6);
  return std::log(a / (1.0 - a));
}

double sigmoid(double l) { return 1.0 / (1.0 + std::exp(-l)); }

}  // namespace

VisualForceResult compute_visual_forces(EmbodiedModel& model, std::span<const View> observations,
                                        const CorrectionConfig& cfg, std::uint64_t seed) {
  if (observations.empty()) throw Error(ErrorCode::NoObservations, "no observations");
  cfg.validate();
  auto& gs = model.gaussians;
  const std::size_t n = gs.size();
  const std::vector<std::uint8_t> is_object = model.object_gaussian_mask();

  std::vector<Vec3> x0(n);
  std::vector<UnitQuat> q0(n);
  for (std::size_t j = 0; j < n; ++j) {
    x0[j] = gs[j].x;
    q0[j] = gs[j].q;
  }

  Adam adam;
  const std::size_t g_pos = adam.add_group("position", 3 * n, cfg.lr_position);
  const std::size_t g_rot = adam.add_group("rotation", 4 * n, cfg.lr_rotation);
  const std::size_t g_col = adam.add_group("color", 3 * n, cfg.lr_color);
  const std::size_t g_opa = adam.add_group("opacity", n, cfg.lr_opacity);
  const std::size_t g_scl = adam.add_group("scale", 3 * n, cfg.lr_scale);

  std::vector<double> pos(3 * n), rot(4 * n), col(3 * n), opa(n), scl(3 * n);
  std::vector<double> d_pos(3 * n), d_rot(4 * n), d_col(3 * n), d_opa(n), d_scl(3 * n);
  for (std::size_t j = 0; j < n; ++j) {
    const Vec4 q = gs[j].q.wxyz();
    for (int k = 0; k < 3; ++k) {
      pos[3 * j + k] = gs[j].x[k];
      col[3 * j + k] = gs[j].color[k];
      scl[3 * j + k] = std::log(gs[j].scale[k]);
    }
    for (int k = 0; k < 4; ++k) rot[4 * j + k] = q[k];
    opa[j] = logit(gs[j].opacity);
  }

  const std::vector<double> opa_start = opa;
  ParamSelect select;
  select.scale = !cfg.scale_frozen;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, observations.size() - 1);
  VisualForceResult out;

  for (int it = 0; it < cfg.adam_iterations; ++it) {
    const View& view = observations[pick(rng)];
    LossTarget target;
    target.rgb = &view.rgb;
    const BackwardResult br = backward(gs, view.camera, target, select);
    if (it == 0) out.loss_first = br.loss;
    out.loss_last = br.loss;
    const GaussianGrads& gr = br.grads;
    for (std::size_t j = 0; j < n; ++j) {
      const bool obj = is_object[j] != 0;
      const Vec4 q = gs[j].q.wxyz();
      for (int k = 0; k < 3; ++k) {
        d_pos[3 * j + k] = obj ? gr.position[j][k] : 0.0;
        d_col[3 * j + k] = gr.color[j][k];
        d_scl[3 * j + k] = obj ? gr.scale[j][k] * gs[j].scale[k] : 0.0;
      }
      for (int k = 0; k < 4; ++k) {
        d_rot[4 * j + k] = obj ? gr.rotation[j][k] : 0.0;
        rot[4 * j + k] = q[k];
      }
      d_opa[j] = gr.opacity[j] * gs[j].opacity * (1.0 - gs[j].opacity);
    }
    adam.step(g_pos, pos, d_pos);
    adam.step(g_rot, rot, d_rot);
    adam.step(g_col, col, d_col);
    adam.step(g_opa, opa, d_opa);
    if (!cfg.scale_frozen) adam.step(g_scl, scl, d_scl);
    for (std::size_t j = 0; j < n; ++j) {
      Gaussian& g = gs[j];
      g.x = Vec3(pos[3 * j], pos[3 * j + 1], pos[3 * j + 2]);
      const Vec4 qn(rot[4 * j], rot[4 * j + 1], rot[4 * j + 2], rot[4 * j + 3]);
      if (qn != g.q.wxyz()) g.q = UnitQuat::from_wxyz(qn[0], qn[1], qn[2], qn[3]);
      for (int k = 0; k < 3; ++k) {
        col[3 * j + k] = std::clamp(col[3 * j + k], 0.0, 1.0);
        g.color[k] = col[3 * j + k];
        if (!cfg.scale_frozen) g.scale[k] = std::exp(scl[3 * j + k]);
      }
      // Untouched parameters keep their exact value instead of a logit round trip.
      if (opa[j] != opa_start[j]) g.opacity = sigmoid(opa[j]);
    }
  }

  out.forces.assign(model.physics.particles.size(), Vec3::Zero());
  const double thr2 = cfg.displacement_threshold * cfg.displacement_threshold;
  for (const Bond& b : model.bonds) {
    if (!is_object[b.gaussian]) continue;
    const Vec3 d = gs[b.gaussian].x - x0[b.gaussian];
    if (d.squaredNorm() < thr2 || d.squaredNorm() == 0.0) continue;
    const double w = cfg.opacity_weighting ? gs[b.gaussian].opacity : 1.0;
    out.forces[b.particle] += cfg.kp * w * d;
    ++out.contributing_gaussians;
  }
  for (std::size_t j = 0; j < n; ++j) {
    gs[j].x = x0[j];
    gs[j].q = q0[j];
  }
  return out;
}

StepStats predict_correct_step(EmbodiedModel& model, std::span<const View> observations,
                               std::span<const KinematicCommand> kinematics,
                               const PhysicsConfig& physics, const CorrectionConfig& correction,
                               std::uint64_t seed, bool correct) {
  using clock = std::chrono::steady_clock;
  StepStats stats;
  for (const KinematicCommand& cmd : kinematics)
    set_kinematic_targets(model.physics, cmd.body, cmd.targets);
  const auto t0 = clock::now();
  physics_step(model.physics, physics);
  apply_bonds(model);
  const auto t1 = clock::now();
  stats.physics_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
  if (!correct) return stats;

  const VisualForceResult vf = compute_visual_forces(model, observations, correction, seed);
  auto& ps = model.physics.particles;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    ps[i].f = ps[i].kinematic ? Vec3::Zero() : vf.forces[i];
    stats.max_force = std::max(stats.max_force, ps[i].f.norm());
  }
  stats.correction_ms = std::chrono::duration<double, std::milli>(clock::now() - t1).count();
  return stats;
}

}  // namespace gpw
