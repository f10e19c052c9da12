#include "gpw/harness/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace gpw::harness {

void TrajectoryRecord::push(const std::vector<Vec3>& gt_points,
                            const std::vector<Vec3>& pred_points,
                            const std::vector<Camera>& cams) {
  if (gt.empty()) {
    points = static_cast<int>(gt_points.size());
    cameras = static_cast<int>(cams.size());
  }
  if (static_cast<int>(gt_points.size()) != points || static_cast<int>(pred_points.size()) != points ||
      static_cast<int>(cams.size()) != cameras)
    throw Error(ErrorCode::ShapeMismatch, "trajectory step has inconsistent sizes");
  gt.push_back(gt_points);
  pred.push_back(pred_points);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::vector<Vec2> g(points * cameras), p(points * cameras);
  for (int i = 0; i < points; ++i)
    for (int c = 0; c < cameras; ++c) {
      const auto a = try_project(cams[c], gt_points[i]);
      const auto b = try_project(cams[c], pred_points[i]);
      g[i * cameras + c] = a ? a->pixel : Vec2(nan, nan);
      p[i * cameras + c] = b ? b->pixel : Vec2(nan, nan);
    }
  gt_px.push_back(std::move(g));
  pred_px.push_back(std::move(p));
}

QueryTracker::QueryTracker(const EmbodiedModel& model, const std::vector<Vec3>& queries) {
  const auto mask = model.object_gaussian_mask();
  for (const Vec3& q : queries) {
    int best = -1;
    double bd = 0.0;
    for (int j = 0; j < static_cast<int>(model.gaussians.size()); ++j) {
      if (!mask[j]) continue;
      const double d = (model.gaussians[j].x - q).squaredNorm();
      if (best < 0 || d < bd) {
        best = j;
        bd = d;
      }
    }
    if (best < 0) throw Error(ErrorCode::NoGaussians, "no object gaussians to track");
    const Gaussian& g = model.gaussians[best];
    gaussian_.push_back(best);
    offset_.push_back(g.q.inverse().rotate(q - g.x));
  }
}

std::vector<Vec3> QueryTracker::predict(const EmbodiedModel& model) const {
  std::vector<Vec3> out;
  for (std::size_t k = 0; k < gaussian_.size(); ++k) {
    const Gaussian& g = model.gaussians[gaussian_[k]];
    out.push_back(g.x + g.q.rotate(offset_[k]));
  }
  return out;
}

double metric_3d_at(const TrajectoryRecord& r, int step) {
  if (r.steps() == 0 || r.points == 0) throw Error(ErrorCode::EmptyRecord, "trajectory record is empty");
  double s = 0.0;
  for (int i = 0; i < r.points; ++i) s += (r.gt[step][i] - r.pred[step][i]).norm();
  return 100.0 * s / r.points;
}

double metric_3d(const TrajectoryRecord& r) {
  if (r.steps() == 0 || r.points == 0) throw Error(ErrorCode::EmptyRecord, "trajectory record is empty");
  double s = 0.0;
  for (int t = 0; t < r.steps(); ++t)
    for (int i = 0; i < r.points; ++i) s += (r.gt[t][i] - r.pred[t][i]).norm();
  return 100.0 * s / (static_cast<double>(r.steps()) * r.points);
}

double metric_3d_final(const TrajectoryRecord& r) { return metric_3d_at(r, r.steps() - 1); }

double metric_2d(const TrajectoryRecord& r) {
  if (r.steps() == 0 || r.points == 0) throw Error(ErrorCode::EmptyRecord, "trajectory record is empty");
  double s = 0.0;
  long n = 0;
  for (int t = 0; t < r.steps(); ++t)
    for (std::size_t k = 0; k < r.gt_px[t].size(); ++k) {
      const Vec2& a = r.gt_px[t][k];
      const Vec2& b = r.pred_px[t][k];
      if (!a.allFinite() || !b.allFinite()) continue;
      s += (a - b).norm();
      ++n;
    }
  return n ? s / n : 0.0;
}

double metric_psnr(const std::vector<Image>& renders, const std::vector<Image>& gt,
                   const std::vector<Image>& masks) {
  if (renders.size() != gt.size() || renders.size() != masks.size())
    throw Error(ErrorCode::DimensionMismatch, "psnr inputs differ in count");
  double se = 0.0;
  long n = 0;
  for (std::size_t k = 0; k < renders.size(); ++k) {
    const Image& a = renders[k];
    const Image& b = gt[k];
    const Image& m = masks[k];
    if (!a.same_shape(b) || m.width != a.width || m.height != a.height || m.channels != 1)
      throw Error(ErrorCode::DimensionMismatch, "psnr image shapes differ");
    for (int y = 0; y < a.height; ++y)
      for (int x = 0; x < a.width; ++x) {
        if (m.at(x, y) <= 0.5) continue;
        for (int c = 0; c < a.channels; ++c) {
          const double d = std::clamp(a.at(x, y, c), 0.0, 1.0) - std::clamp(b.at(x, y, c), 0.0, 1.0);
          se += d * d;
          ++n;
        }
      }
  }
  if (n == 0) throw Error(ErrorCode::EmptyRecord, "no foreground pixels");
  const double mse = se / n;
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

std::string trajectory_csv(const TrajectoryRecord& r) {
  std::ostringstream os;
  os << "step,point_id,gt_x,gt_y,gt_z,pred_x,pred_y,pred_z";
  for (int c = 0; c < r.cameras; ++c)
    os << ",cam" << c << "_gt_u,cam" << c << "_gt_v,cam" << c << "_pred_u,cam" << c << "_pred_v";
  os << '\n';
  char buf[64];
  auto num = [&](double v) {
    if (!std::isfinite(v)) return std::string("nan");
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return std::string(buf);
  };
  for (int t = 0; t < r.steps(); ++t)
    for (int i = 0; i < r.points; ++i) {
      os << t << ',' << i;
      for (int k = 0; k < 3; ++k) os << ',' << num(r.gt[t][i][k]);
      for (int k = 0; k < 3; ++k) os << ',' << num(r.pred[t][i][k]);
      for (int c = 0; c < r.cameras; ++c) {
        const Vec2& a = r.gt_px[t][i * r.cameras + c];
        const Vec2& b = r.pred_px[t][i * r.cameras + c];
        os << ',' << num(a.x()) << ',' << num(a.y()) << ',' << num(b.x()) << ',' << num(b.y());
      }
      os << '\n';
    }
  return os.str();
}

}  // namespace gpw::harness
