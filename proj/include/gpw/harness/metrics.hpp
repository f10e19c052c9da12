#pragma once

#include <string>
#include <vector>

#include "gpw/model.hpp"

namespace gpw::harness {

struct TrajectoryRecord {
  int points = 0;
  int cameras = 0;
  //! Indexed [step][point].
  std::vector<std::vector<Vec3>> gt;
  std::vector<std::vector<Vec3>> pred;
  //! Indexed [step][point * cameras + camera]; NaN when behind a camera.
  std::vector<std::vector<Vec2>> gt_px;
  std::vector<std::vector<Vec2>> pred_px;

  int steps() const { return static_cast<int>(gt.size()); }
  //! Appends one step, projecting into every camera.
  void push(const std::vector<Vec3>& gt_points, const std::vector<Vec3>& pred_points,
            const std::vector<Camera>& cams);
};

//! Binds queries to the nearest object Gaussian at construction and transports them
//! with that Gaussian's frame afterwards.
class QueryTracker {
 public:
  //! Throws Error(NoGaussians) when the model has no object Gaussians.
  QueryTracker(const EmbodiedModel& model, const std::vector<Vec3>& queries);
  std::vector<Vec3> predict(const EmbodiedModel& model) const;
  const std::vector<int>& bound_gaussians() const { return gaussian_; }
  const std::vector<Vec3>& offsets() const { return offset_; }

 private:
  std::vector<int> gaussian_;
  std::vector<Vec3> offset_;
};

inline std::vector<Vec3> track_query_points(const EmbodiedModel& model, const QueryTracker& t) {
  return t.predict(model);
}

//! Mean Euclidean error over points and steps, in centimeters. Throws Error(EmptyRecord).
double metric_3d(const TrajectoryRecord& r);
//! Mean error over the points of the last step, in centimeters.
double metric_3d_final(const TrajectoryRecord& r);
//! Mean error at one step, in centimeters.
double metric_3d_at(const TrajectoryRecord& r, int step);
//! Mean pixel error over points, steps and cameras (skipping unprojectable samples).
double metric_2d(const TrajectoryRecord& r);

inline constexpr double kPsnrCap = 99.0;
//! 10 log10(1 / MSE) over foreground pixels (mask > 0.5) of all images, capped at 99 dB.
//! Throws Error(EmptyRecord) without foreground pixels.
double metric_psnr(const std::vector<Image>& renders, const std::vector<Image>& gt,
                   const std::vector<Image>& fg_masks);

//! CSV with header: step, point_id, gt_xyz, pred_xyz, then per camera gt_u, gt_v, pred_u, pred_v.
std::string trajectory_csv(const TrajectoryRecord& r);

}  // namespace gpw::harness
