#pragma once

#include <string>
#include <vector>

#include "gpw/harness/metrics.hpp"
#include "gpw/harness/reality.hpp"

namespace gpw::harness {

enum class Mode { Corrected, PhysicsOnly };

struct RunOptions {
  Mode mode = Mode::Corrected;
  bool collisions = true;
  bool gravity = true;
  bool ground = true;
  //! Directory for trajectory.csv, metrics.json and frames; empty writes nothing.
  std::string output_dir;
  bool write_frames = false;
  //! Evaluate foreground PSNR every n steps (0 disables).
  int psnr_every = 5;
  bool verbose = false;
};

struct Timing {
  double init_ms = 0.0;
  double physics_median_ms = 0.0;
  double correction_median_ms = 0.0;
  double step_median_ms = 0.0;
  double physics_mean_ms = 0.0;
  double correction_mean_ms = 0.0;
};

struct RunResult {
  TrajectoryRecord record;
  double error_3d = 0.0;
  double final_error_3d = 0.0;
  double error_2d = 0.0;
  double psnr = 0.0;
  std::vector<double> error_per_step;
  Timing timing;
  int particles = 0;
  int gaussians = 0;
  EmbodiedModel model;
};

const char* to_string(Mode m);
Mode parse_mode(const std::string& s);

//! Builds the model from frame-0 observations: one initialize_object per object,
//! table and pusher Gaussians copied from the reference scene.
EmbodiedModel initialize_model(const Scenario& sc, const Reality& reality, const Frame& frame0);

//! Observations of the training cameras for a frame.
std::vector<View> training_views(const Reality& reality, const Frame& frame);

RunResult run_scenario(const Scenario& sc, const RunOptions& options);

std::string metrics_json(const Scenario& sc, const RunOptions& options, const RunResult& r);

}  // namespace gpw::harness
