#include "gpw/harness/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace gpw::harness {

namespace fs = std::filesystem;

const char* to_string(Mode m) { return m == Mode::Corrected ? "corrected" : "physics_only"; }

Mode parse_mode(const std::string& s) {
  if (s == "corrected") return Mode::Corrected;
  if (s == "physics_only" || s == "physics") return Mode::PhysicsOnly;
  throw Error(ErrorCode::Config, "unknown mode: " + s);
}

std::vector<View> training_views(const Reality& reality, const Frame& frame) {
  std::vector<View> out;
  for (int c = 0; c < reality.train_count(); ++c) out.push_back({reality.cameras()[c], frame.rgb[c]});
  return out;
}

namespace {

Image channel_mask(const Image& seg, int channel) {
  Image m(seg.width, seg.height, 1);
  for (int y = 0; y < seg.height; ++y)
    for (int x = 0; x < seg.width; ++x) m.at(x, y) = seg.at(x, y, channel) > 0.5 ? 1.0 : 0.0;
  return m;
}

// Union of channels [first, last) other than skip.
Image union_mask(const Image& seg, int first, int last, int skip = -1) {
  Image m(seg.width, seg.height, 1);
  for (int y = 0; y < seg.height; ++y)
    for (int x = 0; x < seg.width; ++x)
      for (int c = first; c < last; ++c)
        if (c != skip && seg.at(x, y, c) > 0.5) m.at(x, y) = 1.0;
  return m;
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / v.size();
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw Error(ErrorCode::Io, "cannot write " + p.string());
  f << text;
}

}  // namespace

EmbodiedModel initialize_model(const Scenario& sc, const Reality& reality, const Frame& frame0) {
  EmbodiedModel model;
  model.physics.ground = sc.ground;
  model.gaussians = reality.background();

  for (int oi = 0; oi < static_cast<int>(sc.objects.size()); ++oi) {
    const ObjectSpec& spec = sc.objects[oi];
    std::vector<InitView> views;
    for (int c = 0; c < reality.train_count(); ++c)
      views.push_back({reality.cameras()[c], frame0.rgb[c], channel_mask(frame0.seg[c], oi),
                       union_mask(frame0.seg[c], 0, frame0.seg[c].channels, oi)});
    ObjectMeta meta;
    meta.name = spec.name;
    meta.rigid = spec.rigid;
    meta.mass = spec.mass;
    meta.segment = oi;
    const Aabb box = ObjectGeometry{spec}.world_bounds();
    add_object(model, initialize_object(views, box, meta, sc.init, sc.ground), meta);
  }

  if (sc.pusher) {
    Body kin;
    kin.kinematic = true;
    const int body = model.physics.add_body(kin);
    const int base = static_cast<int>(model.physics.particles.size());
    for (const KinematicTarget& t : reality.pusher_targets(0)) {
      Particle p;
      p.x = t.x;
      p.rest_x = t.x;
      p.q = t.q;
      p.radius = sc.pusher->radius;
      p.kinematic = true;
      p.body = body;
      model.physics.particles.push_back(p);
    }
    for (const auto& part : reality.pusher_parts()) {
      const Particle& p = model.physics.particles[base + part.sphere];
      Bond b;
      b.gaussian = static_cast<int>(model.gaussians.size());
      b.particle = base + part.sphere;
      b.offset = p.q.inverse().rotate(part.gaussian.x - p.x);
      b.rotation = p.q.inverse() * part.gaussian.q;
      model.bonds.push_back(b);
      model.gaussians.push_back(part.gaussian);
    }
    ObjectInfo info;
    info.name = "pusher";
    info.body = body;
    info.kinematic = true;
    info.rigid = true;
    model.objects.push_back(info);
  }
  model.validate();
  return model;
}

RunResult run_scenario(const Scenario& sc, const RunOptions& opt) {
  using clock = std::chrono::steady_clock;
  sc.validate();
  Reality reality(sc);
  const Frame frame0 = reality.frame();
  RunResult out;

  const auto t0 = clock::now();
  out.model = initialize_model(sc, reality, frame0);
  out.timing.init_ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
  EmbodiedModel& model = out.model;
  out.particles = static_cast<int>(model.physics.particles.size());
  out.gaussians = static_cast<int>(model.gaussians.size());

  PhysicsConfig physics = sc.model_physics;
  physics.collisions_enabled = opt.collisions;
  physics.ground_enabled = opt.ground;
  if (!opt.gravity) physics.gravity = Vec3::Zero();
  const bool correct = opt.mode == Mode::Corrected;

  int pusher_body = -1;
  for (const ObjectInfo& o : model.objects)
    if (o.kinematic) pusher_body = o.body;

  const std::vector<Camera> eval_cams(reality.cameras().begin() + reality.train_count(),
                                      reality.cameras().end());
  const QueryTracker tracker(model, frame0.queries);
  out.record.push(frame0.queries, tracker.predict(model), eval_cams);

  std::vector<double> psnrs, phys_ms, corr_ms, step_ms;
  fs::path frames_dir;
  if (!opt.output_dir.empty()) {
    fs::create_directories(opt.output_dir);
    if (opt.write_frames) {
      frames_dir = fs::path(opt.output_dir) / "frames";
      fs::create_directories(frames_dir);
    }
  }

  for (int step = 1; step <= sc.duration; ++step) {
    reality.advance();
    const Frame frame = reality.frame();
    const std::vector<View> views = training_views(reality, frame);
    std::vector<KinematicCommand> kin;
    if (pusher_body >= 0) kin.push_back({pusher_body, reality.pusher_targets(step)});
    StepStats st;
    try {
      st = predict_correct_step(model, views, kin, physics, sc.correction,
                                sc.seed * 1000003ull + static_cast<std::uint64_t>(step), correct);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::NonFiniteState && !opt.output_dir.empty())
        save_model(model, (fs::path(opt.output_dir) / "failure_model.json").string());
      throw;
    }
    phys_ms.push_back(st.physics_ms);
    corr_ms.push_back(st.correction_ms);
    step_ms.push_back(st.physics_ms + st.correction_ms);
    out.record.push(frame.queries, tracker.predict(model), eval_cams);

    const bool eval_now = opt.psnr_every > 0 && (step % opt.psnr_every == 0 || step == sc.duration);
    if (eval_now || !frames_dir.empty()) {
      std::vector<Image> renders, gts, masks;
      for (int c = reality.train_count(); c < static_cast<int>(reality.cameras().size()); ++c) {
        renders.push_back(render(model.gaussians, reality.cameras()[c]).rgb);
        gts.push_back(frame.rgb[c]);
        masks.push_back(union_mask(frame.seg[c], 0, static_cast<int>(sc.objects.size())));
      }
      if (eval_now) psnrs.push_back(metric_psnr(renders, gts, masks));
      if (!frames_dir.empty()) {
        char name[64];
        std::snprintf(name, sizeof name, "step_%04d_model.png", step);
        write_png((frames_dir / name).string(), renders.front());
        std::snprintf(name, sizeof name, "step_%04d_observed.png", step);
        write_png((frames_dir / name).string(), gts.front());
      }
    }
    if (opt.verbose && (step % 10 == 0 || step == sc.duration))
      std::fprintf(stderr, "[%s/%s] step %d  3d %.3f cm  physics %.1f ms  correction %.1f ms\n",
                   sc.name.c_str(), to_string(opt.mode), step,
                   metric_3d_at(out.record, out.record.steps() - 1), st.physics_ms, st.correction_ms);
  }

  for (int t = 0; t < out.record.steps(); ++t) out.error_per_step.push_back(metric_3d_at(out.record, t));
  out.error_3d = metric_3d(out.record);
  out.final_error_3d = metric_3d_final(out.record);
  out.error_2d = metric_2d(out.record);
  out.psnr = mean(psnrs);
  out.timing.physics_median_ms = median(phys_ms);
  out.timing.correction_median_ms = median(corr_ms);
  out.timing.step_median_ms = median(step_ms);
  out.timing.physics_mean_ms = mean(phys_ms);
  out.timing.correction_mean_ms = mean(corr_ms);

  if (!opt.output_dir.empty()) {
    const fs::path dir(opt.output_dir);
    write_text(dir / "trajectory.csv", trajectory_csv(out.record));
    write_text(dir / "metrics.json", metrics_json(sc, opt, out));
  }
  return out;
}

std::string metrics_json(const Scenario& sc, const RunOptions& opt, const RunResult& r) {
  nlohmann::json j;
  j["scenario"] = sc.name;
  j["mode"] = to_string(opt.mode);
  j["priors"] = {{"collisions", opt.collisions}, {"gravity", opt.gravity}, {"ground", opt.ground}};
  j["seed"] = sc.seed;
  j["duration"] = sc.duration;
  j["resolution"] = {sc.width, sc.height};
  j["train_cameras"] = sc.train_cameras.size();
  j["eval_cameras"] = sc.eval_cameras.size();
  j["kp"] = sc.correction.kp;
  j["adam_iterations"] = sc.correction.adam_iterations;
  j["particles"] = r.particles;
  j["gaussians"] = r.gaussians;
  j["error_3d_cm"] = r.error_3d;
  j["final_error_3d_cm"] = r.final_error_3d;
  j["error_2d_px"] = r.error_2d;
  j["psnr_db"] = r.psnr;
  j["error_per_step_cm"] = r.error_per_step;
  j["timing"] = {{"init_ms", r.timing.init_ms},
                 {"physics_median_ms", r.timing.physics_median_ms},
                 {"correction_median_ms", r.timing.correction_median_ms},
                 {"step_median_ms", r.timing.step_median_ms},
                 {"physics_mean_ms", r.timing.physics_mean_ms},
                 {"correction_mean_ms", r.timing.correction_mean_ms}};
  return j.dump(2);
}

}  // namespace gpw::harness
