// Command-line driver: init, run, eval, ablate, render.
#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "gpw/harness/runner.hpp"

namespace fs = std::filesystem;
using namespace gpw;
using namespace gpw::harness;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

struct Common {
  std::string scenario = "single_push";
  std::string out;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string resolution;
  int cameras = 0;
  double kp = -1.0;
  int adam_iters = 0;
  int duration = 0;
  bool verbose = false;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("-s,--scenario", c.scenario, "built-in scenario name or JSON file");
  app->add_option("-o,--out", c.out, "output directory (default: $GPW_OUTPUT_DIR or ./runs)");
  app->add_option("--seed", c.seed, "random seed")->each([&c](const std::string&) { c.seed_set = true; });
  app->add_option("--resolution", c.resolution, "image size as WxH, e.g. 320x180");
  app->add_option("--cameras", c.cameras, "number of training cameras");
  app->add_option("--kp", c.kp, "visual force gain");
  app->add_option("--adam-iters", c.adam_iters, "Adam iterations per correction step");
  app->add_option("--duration", c.duration, "number of steps");
  app->add_flag("-v,--verbose", c.verbose, "progress on stderr");
}

Scenario resolve(const Common& c) {
  Scenario s = fs::exists(c.scenario) ? load_scenario(c.scenario) : builtin_scenario(c.scenario);
  if (c.seed_set) s.seed = c.seed;
  if (!c.resolution.empty()) {
    int w = 0, h = 0;
    if (std::sscanf(c.resolution.c_str(), "%dx%d", &w, &h) != 2)
      throw Error(ErrorCode::Config, "resolution must look like 160x90");
    set_resolution(s, w, h);
  }
  if (c.cameras > 0) set_train_cameras(s, c.cameras);
  if (c.kp >= 0.0) s.correction.kp = c.kp;
  if (c.adam_iters > 0) s.correction.adam_iterations = c.adam_iters;
  if (c.duration > 0) s.duration = c.duration;
  s.validate();
  return s;
}

fs::path output_root(const Common& c) {
  if (!c.out.empty()) return c.out;
  if (const char* env = std::getenv("GPW_OUTPUT_DIR")) return env;
  return "runs";
}

void write_file(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream f(p);
  if (!f) throw Error(ErrorCode::Io, "cannot write " + p.string());
  f << text << '\n';
}

void print_result(const char* label, const RunResult& r) {
  std::printf("%-22s 3d %.3f cm  final %.3f cm  2d %.2f px  psnr %.2f dB  step %.1f ms\n", label,
              r.error_3d, r.final_error_3d, r.error_2d, r.psnr, r.timing.step_median_ms);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gaussian-particle world model tracker"};
  app.require_subcommand(1);

  Common common;
  std::string mode = "corrected";
  bool no_collisions = false, no_gravity = false, no_ground = false, frames = false;
  std::string axis = "priors", values;
  int render_step = 0;
  std::string model_path;

  auto* init = app.add_subcommand("init", "initialize the model from frame 0 and save it");
  add_common(init, common);

  auto* run = app.add_subcommand("run", "track a scenario");
  add_common(run, common);
  run->add_option("-m,--mode", mode, "corrected or physics_only");
  run->add_flag("--no-collisions", no_collisions, "disable collision constraints in the model");
  run->add_flag("--no-gravity", no_gravity, "disable gravity in the model");
  run->add_flag("--no-ground", no_ground, "disable the ground constraint in the model");
  run->add_flag("--frames", frames, "write per-step PNG renders");

  auto* eval = app.add_subcommand("eval", "compare corrected tracking with physics only");
  add_common(eval, common);

  auto* ablate = app.add_subcommand("ablate", "sweep one parameter axis");
  add_common(ablate, common);
  ablate->add_option("--axis", axis, "priors, kp, adam-iters, cameras or resolution");
  ablate->add_option("--values", values, "comma separated values for the axis");

  auto* rend = app.add_subcommand("render", "render observed frames (and a saved model)");
  add_common(rend, common);
  rend->add_option("--step", render_step, "reality step to render");
  rend->add_option("--model", model_path, "model JSON to render next to the observations");

  auto* dump = app.add_subcommand("scenario", "print a scenario as JSON");
  add_common(dump, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    const Scenario sc = resolve(common);
    const fs::path root = output_root(common);

    if (*dump) {
      std::cout << scenario_to_json(sc) << '\n';
    } else if (*init) {
      Reality reality(sc);
      const Frame f0 = reality.frame();
      const EmbodiedModel model = initialize_model(sc, reality, f0);
      const fs::path dir = root / sc.name;
      fs::create_directories(dir);
      save_model(model, (dir / "model.json").string());
      std::printf("model: %zu particles, %zu gaussians -> %s\n", model.physics.particles.size(),
                  model.gaussians.size(), (dir / "model.json").c_str());
    } else if (*run) {
      RunOptions opt;
      opt.mode = parse_mode(mode);
      opt.collisions = !no_collisions;
      opt.gravity = !no_gravity;
      opt.ground = !no_ground;
      opt.write_frames = frames;
      opt.verbose = common.verbose;
      opt.output_dir = (root / sc.name / to_string(opt.mode)).string();
      const RunResult r = run_scenario(sc, opt);
      print_result(to_string(opt.mode), r);
      std::printf("outputs in %s\n", opt.output_dir.c_str());
    } else if (*eval) {
      nlohmann::json j;
      j["scenario"] = sc.name;
      RunResult res[2];
      for (Mode m : {Mode::Corrected, Mode::PhysicsOnly}) {
        RunOptions opt;
        opt.mode = m;
        opt.verbose = common.verbose;
        opt.output_dir = (root / sc.name / to_string(m)).string();
        RunResult r = run_scenario(sc, opt);
        print_result(to_string(m), r);
        j[to_string(m)] = {{"error_3d_cm", r.error_3d}, {"final_error_3d_cm", r.final_error_3d},
                           {"error_2d_px", r.error_2d}, {"psnr_db", r.psnr}};
        res[m == Mode::Corrected ? 0 : 1] = std::move(r);
      }
      auto ratio = [](double a, double b) { return b > 0.0 ? a / b : 0.0; };
      const double mean_ratio = ratio(res[0].error_3d, res[1].error_3d);
      const double final_ratio = ratio(res[0].final_error_3d, res[1].final_error_3d);
      j["error_ratio"] = mean_ratio;
      j["final_error_ratio"] = final_ratio;
      j["psnr_gain_db"] = res[0].psnr - res[1].psnr;
      write_file(root / sc.name / "eval.json", j.dump(2));
      std::printf("error ratio %.3f (last step %.3f), psnr gain %.2f dB\n", mean_ratio, final_ratio,
                  res[0].psnr - res[1].psnr);
    } else if (*ablate) {
      nlohmann::json j = nlohmann::json::array();
      std::vector<std::string> vals;
      std::stringstream ss(values);
      for (std::string v; std::getline(ss, v, ',');)
        if (!v.empty()) vals.push_back(v);
      struct Variant {
        std::string label;
        Scenario sc;
        RunOptions opt;
      };
      std::vector<Variant> variants;
      if (axis == "priors") {
        for (const char* v : {"all", "no_collisions", "no_gravity", "no_ground"}) {
          Variant var{v, sc, {}};
          var.opt.collisions = std::string(v) != "no_collisions";
          var.opt.gravity = std::string(v) != "no_gravity";
          var.opt.ground = std::string(v) != "no_ground";
          variants.push_back(var);
        }
      } else {
        if (vals.empty()) throw Error(ErrorCode::Config, "--values is required for axis " + axis);
        for (const std::string& v : vals) {
          Variant var{axis + "=" + v, sc, {}};
          if (axis == "kp") var.sc.correction.kp = std::stod(v);
          else if (axis == "adam-iters") var.sc.correction.adam_iterations = std::stoi(v);
          else if (axis == "cameras") set_train_cameras(var.sc, std::stoi(v));
          else if (axis == "resolution") {
            int w = 0, h = 0;
            if (std::sscanf(v.c_str(), "%dx%d", &w, &h) != 2)
              throw Error(ErrorCode::Config, "resolution values must look like 160x90");
            set_resolution(var.sc, w, h);
          } else {
            throw Error(ErrorCode::Config, "unknown axis: " + axis);
          }
          variants.push_back(var);
        }
      }
      for (Variant& var : variants) {
        var.opt.verbose = common.verbose;
        var.opt.output_dir = (root / sc.name / "ablate" / var.label).string();
        const RunResult r = run_scenario(var.sc, var.opt);
        print_result(var.label.c_str(), r);
        j.push_back({{"variant", var.label}, {"error_3d_cm", r.error_3d},
                     {"final_error_3d_cm", r.final_error_3d}, {"error_2d_px", r.error_2d},
                     {"psnr_db", r.psnr}});
      }
      write_file(root / sc.name / "ablate" / (axis + ".json"), j.dump(2));
    } else if (*rend) {
      Reality reality(sc);
      for (int k = 0; k < render_step; ++k) reality.advance();
      const Frame f = reality.frame();
      const fs::path dir = root / sc.name / "render";
      fs::create_directories(dir);
      std::optional<EmbodiedModel> model;
      if (!model_path.empty()) model = load_model(model_path);
      for (std::size_t c = 0; c < reality.cameras().size(); ++c) {
        char name[64];
        std::snprintf(name, sizeof name, "step_%04d_cam%zu_observed.png", render_step, c);
        write_png((dir / name).string(), f.rgb[c]);
        if (model) {
          std::snprintf(name, sizeof name, "step_%04d_cam%zu_model.png", render_step, c);
          write_png((dir / name).string(), render(model->gaussians, reality.cameras()[c]).rgb);
        }
      }
      std::printf("wrote %zu views to %s\n", reality.cameras().size(), dir.c_str());
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    const ErrorCode c = e.code();
    const bool numerical = c == ErrorCode::NonFiniteState || c == ErrorCode::Degenerate;
    return numerical ? kExitNumerical : kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  }
  return 0;
}
