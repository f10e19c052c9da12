#include <algorithm>
#include <cmath>
#include <random>

#include "gpw/adam.hpp"
#include "gpw/model.hpp"

namespace gpw {

void InitConfig::validate() const {
  if (joint_iterations < 0 || refine_iterations < 0)
    throw Error(ErrorCode::Config, "iteration counts must be non-negative");
  if (!(gaussian_radius > 0.0) || !(particle_mass > 0.0))
    throw Error(ErrorCode::Config, "radius and mass must be positive");
  if (!(opacity_prune >= 0.0 && opacity_prune < 1.0))
    throw Error(ErrorCode::Config, "opacity_prune must be in [0, 1)");
  if (jacobi_iterations < 1) throw Error(ErrorCode::Config, "jacobi_iterations must be >= 1");
  if (!(initial_opacity > 0.0 && initial_opacity < 1.0))
    throw Error(ErrorCode::Config, "initial_opacity must be in (0, 1)");
  if (!(bond_threshold_factor > 0.0) || !(split_scale_divisor > 1.0) || densify_interval < 1)
    throw Error(ErrorCode::Config, "invalid densification or bond settings");
}

namespace {

double logit(double a) {
  a = std::clamp(a, 1e-6, 1.0 - 1e-6);
  return std::log(a / (1.0 - a));
}

double sigmoid(double l) { return 1.0 / (1.0 + std::exp(-l)); }

bool mask_empty(const Image& m) {
  return std::none_of(m.data.begin(), m.data.end(), [](double v) { return v > 0.5; });
}

//! Nearest pixel of a projected point, or false when it lands outside the image.
bool pixel_of(const Camera& cam, const Vec3& x, int& px, int& py) {
  const auto pr = try_project(cam, x);
  if (!pr) return false;
  px = static_cast<int>(std::lround(pr->pixel.x()));
  py = static_cast<int>(std::lround(pr->pixel.y()));
  return px >= 0 && py >= 0 && px < cam.width && py < cam.height;
}

//! Parameter blocks of a Gaussian set in optimizer form.
struct Params {
  std::vector<double> pos, rot, scl, opa, col;

  void load(const std::vector<Gaussian>& gs) {
    const std::size_t n = gs.size();
    pos.resize(3 * n);
    rot.resize(4 * n);
    scl.resize(3 * n);
    opa.resize(n);
    col.resize(3 * n);
    for (std::size_t j = 0; j < n; ++j) {
      const Vec4 q = gs[j].q.wxyz();
      for (int k = 0; k < 3; ++k) {
        pos[3 * j + k] = gs[j].x[k];
        scl[3 * j + k] = std::log(gs[j].scale[k]);
        col[3 * j + k] = gs[j].color[k];
      }
      for (int k = 0; k < 4; ++k) rot[4 * j + k] = q[k];
      opa[j] = logit(gs[j].opacity);
    }
  }

  void store(std::vector<Gaussian>& gs) {
    for (std::size_t j = 0; j < gs.size(); ++j) {
      Gaussian& g = gs[j];
      g.x = Vec3(pos[3 * j], pos[3 * j + 1], pos[3 * j + 2]);
      g.q = UnitQuat::from_wxyz(rot[4 * j], rot[4 * j + 1], rot[4 * j + 2], rot[4 * j + 3]);
      const Vec4 q = g.q.wxyz();
      for (int k = 0; k < 4; ++k) rot[4 * j + k] = q[k];
      for (int k = 0; k < 3; ++k) {
        col[3 * j + k] = std::clamp(col[3 * j + k], 0.0, 1.0);
        g.color[k] = col[3 * j + k];
        g.scale[k] = std::exp(scl[3 * j + k]);
      }
      g.opacity = sigmoid(opa[j]);
    }
  }
};

struct Grads {
  std::vector<double> pos, rot, scl, opa, col;

  void zero(std::size_t n) {
    pos.assign(3 * n, 0.0);
    rot.assign(4 * n, 0.0);
    scl.assign(3 * n, 0.0);
    opa.assign(n, 0.0);
    col.assign(3 * n, 0.0);
  }

  void add(const std::vector<Gaussian>& gs, const GaussianGrads& g) {
    for (std::size_t j = 0; j < gs.size(); ++j) {
      for (int k = 0; k < 3; ++k) {
        pos[3 * j + k] += g.position[j][k];
        scl[3 * j + k] += g.scale[j][k] * gs[j].scale[k];
        col[3 * j + k] += g.color[j][k];
      }
      for (int k = 0; k < 4; ++k) rot[4 * j + k] += g.rotation[j][k];
      opa[j] += g.opacity[j] * gs[j].opacity * (1.0 - gs[j].opacity);
    }
  }
};

std::vector<Particle> as_particles(const std::vector<Gaussian>& gs, double radius, double mass) {
  std::vector<Particle> ps(gs.size());
  for (std::size_t j = 0; j < gs.size(); ++j) {
    ps[j].x = gs[j].x;
    ps[j].radius = radius;
    ps[j].mass = mass;
  }
  return ps;
}

}  // namespace

ObjectBuild initialize_object(std::span<const InitView> views, const Aabb& bbox,
                              const ObjectMeta& meta, const InitConfig& cfg, const Plane& ground) {
  cfg.validate();
  if (views.size() < 2) throw Error(ErrorCode::NoViews, "initialization needs at least two views");
  for (const InitView& v : views) {
    v.camera.validate();
    if (v.rgb.width != v.camera.width || v.rgb.height != v.camera.height || v.rgb.channels != 3 ||
        !v.mask.same_shape(Image(v.camera.width, v.camera.height, 1)) ||
        (!v.occluded.data.empty() && !v.occluded.same_shape(v.mask)))
      throw Error(ErrorCode::DimensionMismatch, "view image does not match its camera");
  }
  const Vec3 extent = bbox.hi - bbox.lo;
  if (!(extent.minCoeff() > 0.0)) throw Error(ErrorCode::Config, "bounding box is degenerate");

  const double r = cfg.gaussian_radius;
  const double spacing = 2.0 * r;
  const double mass = meta.mass > 0.0 ? meta.mass : cfg.particle_mass;
  ObjectBuild out;

  std::vector<bool> visible(views.size());
  bool any_visible = false;
  for (std::size_t v = 0; v < views.size(); ++v) {
    visible[v] = !mask_empty(views[v].mask);
    any_visible = any_visible || visible[v];
  }
  if (!any_visible) throw Error(ErrorCode::EmptyObject, "object mask is empty in every view");

  // (1) regular grid of spherical Gaussians, centered in the box.
  int count[3];
  Vec3 start;
  for (int k = 0; k < 3; ++k) {
    count[k] = std::max(1, static_cast<int>(std::floor(extent[k] / spacing + 1e-9)));
    start[k] = bbox.lo[k] + 0.5 * (extent[k] - (count[k] - 1) * spacing);
  }
  std::vector<Gaussian> gs;
  for (int i = 0; i < count[0]; ++i)
    for (int j = 0; j < count[1]; ++j)
      for (int k = 0; k < count[2]; ++k) {
        Gaussian g;
        g.x = start + spacing * Vec3(i, j, k);
        g.scale = Vec3::Constant(r);
        g.opacity = cfg.initial_opacity;
        g.segment = 0;
        gs.push_back(g);
      }
  out.report.filled = static_cast<int>(gs.size());

  // (2) prune centers that land outside the mask in a view that sees the object;
  // colors start from the mean observation at the projected centers.
  {
    std::vector<Gaussian> kept;
    for (Gaussian& g : gs) {
      bool keep = true;
      Vec3 csum = Vec3::Zero();
      int cn = 0;
      for (std::size_t v = 0; v < views.size() && keep; ++v) {
        if (!visible[v]) continue;
        int px, py;
        if (!pixel_of(views[v].camera, g.x, px, py)) continue;
        if (views[v].mask.at(px, py) <= 0.5) {
          const bool hidden = !views[v].occluded.data.empty() && views[v].occluded.at(px, py) > 0.5;
          if (!hidden) keep = false;
        } else {
          for (int c = 0; c < 3; ++c) csum[c] += views[v].rgb.at(px, py, c);
          ++cn;
        }
      }
      if (!keep) continue;
      if (cn > 0) g.color = csum / cn;
      kept.push_back(g);
    }
    gs = std::move(kept);
  }
  out.report.after_mask_prune = static_cast<int>(gs.size());
  if (gs.empty()) throw Error(ErrorCode::EmptyObject, "all gaussians pruned by the masks");

  // segmentation is only trusted where no other object may cover this one
  std::vector<Image> seg_valid(views.size());
  for (std::size_t v = 0; v < views.size(); ++v) {
    if (views[v].occluded.data.empty()) continue;
    seg_valid[v] = Image(views[v].mask.width, views[v].mask.height, 1);
    for (std::size_t i = 0; i < seg_valid[v].data.size(); ++i)
      seg_valid[v].data[i] = views[v].occluded.data[i] > 0.5 ? 0.0 : 1.0;
  }

  std::vector<int> order(views.size());
  for (std::size_t v = 0; v < views.size(); ++v) order[v] = static_cast<int>(v);

  // (3) joint photometric and segmentation fit with contacts on the centers.
  {
    RenderOptions ropt;
    ropt.seg_channels = 1;
    ParamSelect sel;
    sel.rotation = false;
    sel.scale = false;
    Adam adam;
    const std::size_t n = gs.size();
    const auto a_pos = adam.add_group("position", 3 * n, cfg.lr_position);
    const auto a_opa = adam.add_group("opacity", n, cfg.lr_opacity);
    const auto a_col = adam.add_group("color", 3 * n, cfg.lr_color);
    Params p;
    Grads d;
    ContactSolveOptions copt;
    copt.iterations = cfg.jacobi_iterations;
    for (int it = 0; it < cfg.joint_iterations; ++it) {
      for (int v : order) {
        const InitView& view = views[v];
        LossTarget t;
        t.rgb = &view.rgb;
        t.mask = &view.mask;
        t.seg = &view.mask;
        if (!seg_valid[v].data.empty()) t.seg_mask = &seg_valid[v];
        const BackwardResult br = backward(gs, view.camera, t, sel, ropt);
        p.load(gs);
        d.zero(n);
        d.add(gs, br.grads);
        adam.step(a_pos, p.pos, d.pos);
        adam.step(a_opa, p.opa, d.opa);
        adam.step(a_col, p.col, d.col);
        p.store(gs);
      }
      std::vector<Particle> ps = as_particles(gs, r, mass);
      solve_contacts(ps, ground, copt);
      for (std::size_t j = 0; j < n; ++j) gs[j].x = ps[j].x;
    }
  }

  // (4) opacity pruning.
  std::erase_if(gs, [&](const Gaussian& g) { return g.opacity < cfg.opacity_prune; });
  out.report.after_opacity_prune = static_cast<int>(gs.size());
  if (gs.empty()) throw Error(ErrorCode::EmptyObject, "all gaussians pruned by opacity");

  // (5) particles at the surviving centers and their shapes.
  out.particles = as_particles(gs, r, mass);
  for (Particle& pt : out.particles) pt.rest_x = pt.x;
  const int np = static_cast<int>(out.particles.size());
  if (meta.rigid) {
    if (np >= 2) {
      std::vector<int> all(np);
      for (int i = 0; i < np; ++i) all[i] = i;
      out.shapes.push_back(make_shape(out.particles, std::move(all), 1.0));
    }
  } else {
    const double reach2 = std::pow(meta.neighbor_factor * r, 2);
    for (int i = 0; i < np; ++i) {
      std::vector<int> members;
      for (int j = 0; j < np; ++j)
        if ((out.particles[j].x - out.particles[i].x).squaredNorm() <= reach2) members.push_back(j);
      if (members.size() >= 2)
        out.shapes.push_back(make_shape(out.particles, std::move(members),
                                        meta.deformable_stiffness, i));
    }
  }

  // (6) RGB refinement with densification; contacts off.
  {
    const std::size_t cap =
        static_cast<std::size_t>(std::max(1.0, cfg.max_gaussians_factor * np));
    RenderOptions ropt;
    Adam adam;
    std::size_t n = gs.size();
    const auto a_pos = adam.add_group("position", 3 * n, cfg.lr_position);
    const auto a_rot = adam.add_group("rotation", 4 * n, cfg.lr_rotation);
    const auto a_scl = adam.add_group("scale", 3 * n, cfg.lr_scale);
    const auto a_opa = adam.add_group("opacity", n, cfg.lr_opacity);
    const auto a_col = adam.add_group("color", 3 * n, cfg.lr_color);
    std::vector<double> grad_sum(n, 0.0);
    std::vector<int> grad_cnt(n, 0);
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Params p;
    Grads d;
    for (int it = 1; it <= cfg.refine_iterations; ++it) {
      for (int v : order) {
        const InitView& view = views[v];
        LossTarget t;
        t.rgb = &view.rgb;
        t.mask = &view.mask;
        const BackwardResult br = backward(gs, view.camera, t, {}, ropt);
        for (std::size_t j = 0; j < n; ++j) {
          if (br.grads.screen_position[j] > 0.0) {
            grad_sum[j] += br.grads.screen_position[j];
            ++grad_cnt[j];
          }
        }
        p.load(gs);
        d.zero(n);
        d.add(gs, br.grads);
        adam.step(a_pos, p.pos, d.pos);
        adam.step(a_rot, p.rot, d.rot);
        adam.step(a_scl, p.scl, d.scl);
        adam.step(a_opa, p.opa, d.opa);
        adam.step(a_col, p.col, d.col);
        p.store(gs);
      }
      if (it % cfg.densify_interval != 0 || it == cfg.refine_iterations) continue;
      std::vector<long> source;
      std::vector<Gaussian> next;
      for (std::size_t j = 0; j < n; ++j) {
        next.push_back(gs[j]);
        source.push_back(static_cast<long>(j));
      }
      for (std::size_t j = 0; j < n && next.size() < cap; ++j) {
        const double mean = grad_cnt[j] ? grad_sum[j] / grad_cnt[j] : 0.0;
        if (mean <= cfg.densify_grad_threshold) continue;
        Gaussian& g = next[j];
        if (g.scale.maxCoeff() <= r) {
          next.push_back(g);  // clone
        } else {
          // split: two samples from the Gaussian with reduced scale
          Gaussian a = g;
          a.scale = g.scale / cfg.split_scale_divisor;
          Gaussian b = a;
          const Mat3 R = g.q.matrix();
          const Vec3 s1(normal(rng), normal(rng), normal(rng));
          const Vec3 s2(normal(rng), normal(rng), normal(rng));
          a.x = g.x + R * g.scale.cwiseProduct(s1);
          b.x = g.x + R * g.scale.cwiseProduct(s2);
          g = a;
          next.push_back(b);
        }
        source.push_back(-1);
        ++out.report.densified;
      }
      if (next.size() != n) {
        adam.remap_group(a_pos, 3, source);
        adam.remap_group(a_rot, 4, source);
        adam.remap_group(a_scl, 3, source);
        adam.remap_group(a_opa, 1, source);
        adam.remap_group(a_col, 3, source);
        gs = std::move(next);
        n = gs.size();
      }
      grad_sum.assign(n, 0.0);
      grad_cnt.assign(n, 0);
    }
    double loss = 0.0;
    double pixels = 0.0;
    for (const InitView& view : views) {
      const RenderedImage img = render(gs, view.camera, ropt);
      loss += loss_rgb(img.rgb, view.rgb, &view.mask);
      for (double m : view.mask.data) pixels += m > 0.5 ? 3.0 : 0.0;
    }
    out.report.final_loss = pixels > 0.0 ? loss / pixels : 0.0;
  }

  // (7) bonds; far Gaussians are discarded.
  const AttachResult ar = attach_bonds(gs, out.particles, cfg.bond_threshold_factor * r);
  out.report.discarded_unbonded = static_cast<int>(ar.unbonded.size());
  for (const Bond& b : ar.bonds) {
    Gaussian g = gs[b.gaussian];
    g.segment = meta.segment;
    out.bonds.push_back({static_cast<int>(out.gaussians.size()), b.particle, b.offset, b.rotation});
    out.gaussians.push_back(g);
  }
  return out;
}

int add_object(EmbodiedModel& model, ObjectBuild build, const ObjectMeta& meta) {
  Body body;
  body.rigid = meta.rigid;
  body.self_collide = !meta.rigid;
  const int id = model.physics.add_body(body);
  const int pbase = static_cast<int>(model.physics.particles.size());
  const int gbase = static_cast<int>(model.gaussians.size());
  for (Particle& p : build.particles) {
    p.body = id;
    model.physics.particles.push_back(p);
  }
  for (Shape& s : build.shapes) {
    for (int& m : s.members) m += pbase;
    if (s.owner >= 0) s.owner += pbase;
    model.physics.shapes.push_back(std::move(s));
  }
  for (const Gaussian& g : build.gaussians) model.gaussians.push_back(g);
  for (Bond b : build.bonds) {
    b.gaussian += gbase;
    b.particle += pbase;
    model.bonds.push_back(b);
  }
  ObjectInfo info;
  info.name = meta.name;
  info.body = id;
  info.segment = meta.segment;
  info.rigid = meta.rigid;
  model.objects.push_back(info);
  return static_cast<int>(model.objects.size()) - 1;
}

}  // namespace gpw
