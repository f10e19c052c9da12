#include "gpw/splat.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace gpw {

namespace {

constexpr int kBandRows = 16;

struct Splat {
  int index = 0;
  double depth = 0.0;
  Vec2 mean;
  // Conic (inverse screen covariance) entries.
  double q00 = 0.0, q01 = 0.0, q11 = 0.0;
  double opacity = 0.0;
  double gmax = 0.0;
  int y0 = 0, y1 = -1;
  // Quantities reused by the backward pass.
  Vec3 view_point;
  Mat23 jac;
  Mat3 view_rot;
  Mat3 rot;
  Mat3 cov;
  Mat2 cov2d;
};

struct Prepared {
  std::vector<Splat> splats;
  //! For every image row: positions into `splats` in depth order.
  std::vector<std::vector<int>> rows;
};

bool build_splat(const Gaussian& g, int index, const Camera& cam, const Mat3& W,
                 const RenderOptions& opt, Splat& s) {
  if (!(g.opacity > opt.alpha_min)) return false;
  const Vec3 p = cam.world_to_view.apply(g.x);
  if (!(p.z() > opt.near)) return false;
  const double iz = 1.0 / p.z();
  s.index = index;
  s.depth = p.z();
  s.view_point = p;
  s.mean = {cam.fx * p.x() * iz + cam.cx, cam.fy * p.y() * iz + cam.cy};
  s.jac << cam.fx * iz, 0.0, -cam.fx * p.x() * iz * iz,
           0.0, cam.fy * iz, -cam.fy * p.y() * iz * iz;
  s.view_rot = W;
  s.rot = g.q.matrix();
  const Vec3 s2 = g.scale.cwiseProduct(g.scale);
  s.cov = s.rot * s2.asDiagonal() * s.rot.transpose();
  const Mat23 T = s.jac * W;
  s.cov2d = T * s.cov * T.transpose();
  s.cov2d(0, 0) += opt.dilation;
  s.cov2d(1, 1) += opt.dilation;
  const double det = s.cov2d.determinant();
  if (!(det > 0.0)) return false;
  s.q00 = s.cov2d(1, 1) / det;
  s.q01 = -s.cov2d(0, 1) / det;
  s.q11 = s.cov2d(0, 0) / det;
  s.opacity = g.opacity;
  // alpha >= alpha_min  <=>  g <= ln(a / alpha_min); the 3-sigma ellipse (g <= 9) never binds tighter.
  s.gmax = std::min(9.0, std::log(g.opacity / opt.alpha_min));
  const double ex = std::sqrt(s.gmax * s.cov2d(0, 0));
  const double ey = std::sqrt(s.gmax * s.cov2d(1, 1));
  if (s.mean.x() + ex < 0.0 || s.mean.x() - ex > cam.width - 1) return false;
  s.y0 = std::max(0, static_cast<int>(std::ceil(s.mean.y() - ey - 1e-9)));
  s.y1 = std::min(cam.height - 1, static_cast<int>(std::floor(s.mean.y() + ey + 1e-9)));
  return s.y0 <= s.y1;
}

Prepared prepare(std::span<const Gaussian> gaussians, const Camera& cam, const RenderOptions& opt) {
  cam.validate();
  Prepared out;
  const Mat3 W = cam.world_to_view.rotation.matrix();
  out.splats.reserve(gaussians.size());
  Splat s;
  for (int i = 0; i < static_cast<int>(gaussians.size()); ++i)
    if (build_splat(gaussians[i], i, cam, W, opt, s)) out.splats.push_back(s);
  std::sort(out.splats.begin(), out.splats.end(), [](const Splat& a, const Splat& b) {
    return a.depth != b.depth ? a.depth < b.depth : a.index < b.index;
  });
  out.rows.resize(cam.height);
  for (int k = 0; k < static_cast<int>(out.splats.size()); ++k)
    for (int y = out.splats[k].y0; y <= out.splats[k].y1; ++y) out.rows[y].push_back(k);
  return out;
}

//! Pixel span [xa, xb] of a splat on row y, empty when xa > xb.
inline void row_span(const Splat& s, int y, int width, int& xa, int& xb) {
  const double dy = y - s.mean.y();
  const double b = s.q01 * dy;
  const double disc = b * b - s.q00 * (s.q11 * dy * dy - s.gmax);
  if (disc < 0.0) {
    xa = 1;
    xb = 0;
    return;
  }
  const double r = std::sqrt(disc);
  const double lo = s.mean.x() + (-b - r) / s.q00;
  const double hi = s.mean.x() + (-b + r) / s.q00;
  xa = std::max(0, static_cast<int>(std::ceil(lo - 1e-9)));
  xb = std::min(width - 1, static_cast<int>(std::floor(hi + 1e-9)));
}

struct Contribution {
  int x;
  int splat;
  double alpha;
  double transmittance;
};

//! Composites one row front to back. When `records` is set, every contribution is
//! appended in compositing order.
void composite_row(int y, const Prepared& prep, std::span<const Gaussian> gaussians,
                   const RenderOptions& opt, RenderedImage& out, std::vector<double>& T,
                   std::vector<Contribution>* records) {
  const int width = out.rgb.width;
  const int K = opt.seg_channels;
  std::fill(T.begin(), T.end(), 1.0);
  for (int k : prep.rows[y]) {
    const Splat& s = prep.splats[k];
    int xa, xb;
    row_span(s, y, width, xa, xb);
    if (xa > xb) continue;
    const Gaussian& g = gaussians[s.index];
    const double dy = y - s.mean.y();
    const bool has_seg = g.segment >= 0 && g.segment < K;
    for (int x = xa; x <= xb; ++x) {
      double& t = T[x];
      if (t < opt.transmittance_min) continue;
      const double dx = x - s.mean.x();
      const double gexp = s.q00 * dx * dx + 2.0 * s.q01 * dx * dy + s.q11 * dy * dy;
      const double alpha = s.opacity * std::exp(-gexp);
      if (alpha < opt.alpha_min) continue;
      const double w = alpha * t;
      double* px = &out.rgb.at(x, y);
      px[0] += w * g.color.x();
      px[1] += w * g.color.y();
      px[2] += w * g.color.z();
      if (has_seg) out.seg.at(x, y, g.segment) += w;
      if (records) records->push_back({x, k, alpha, t});
      t *= (1.0 - alpha);
    }
  }
  for (int x = 0; x < width; ++x) out.alpha.at(x, y) = 1.0 - T[x];
}

RenderedImage blank(const Camera& cam, const RenderOptions& opt) {
  RenderedImage img;
  img.rgb = Image(cam.width, cam.height, 3);
  img.seg = Image(cam.width, cam.height, std::max(0, opt.seg_channels));
  img.alpha = Image(cam.width, cam.height, 1);
  return img;
}

inline double l1_sign(double r) { return r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0); }

void check_loss_inputs(const Image& a, const Image& b, const Image* mask) {
  if (!a.same_shape(b)) throw Error(ErrorCode::DimensionMismatch, "image shapes differ");
  if (mask && (mask->width != a.width || mask->height != a.height || mask->channels != 1))
    throw Error(ErrorCode::DimensionMismatch, "mask shape differs from image");
}

double l1(const Image& a, const Image& b, const Image* mask) {
  check_loss_inputs(a, b, mask);
  double sum = 0.0;
  const int c = a.channels;
  for (int y = 0; y < a.height; ++y)
    for (int x = 0; x < a.width; ++x) {
      if (mask && !(mask->at(x, y) > 0.5)) continue;
      for (int k = 0; k < c; ++k) sum += std::abs(a.at(x, y, k) - b.at(x, y, k));
    }
  return sum;
}

// Per-Gaussian 2D gradient accumulators:
// [0..1] d mean, [2..4] d conic (q00, q01, q11), [5] d opacity, [6..8] d color.
constexpr int kAcc = 9;

}  // namespace

void GaussianGrads::resize(std::size_t n) {
  position.assign(n, Vec3::Zero());
  rotation.assign(n, Vec4::Zero());
  scale.assign(n, Vec3::Zero());
  opacity.assign(n, 0.0);
  color.assign(n, Vec3::Zero());
  screen_position.assign(n, 0.0);
}

Mat3 world_covariance(const Gaussian& g) {
  const Mat3 R = g.q.matrix();
  const Vec3 s2 = g.scale.cwiseProduct(g.scale);
  return R * s2.asDiagonal() * R.transpose();
}

Mat2 screen_covariance(const Mat3& cov, const Camera& cam, const Vec3& x, double dilation) {
  const Projection p = project(cam, x);
  const Mat23 T = p.jacobian_world;
  Mat2 out = T * cov * T.transpose();
  out(0, 0) += dilation;
  out(1, 1) += dilation;
  return out;
}

RenderedImage render(std::span<const Gaussian> gaussians, const Camera& cam,
                     const RenderOptions& opt) {
  const Prepared prep = prepare(gaussians, cam, opt);
  RenderedImage img = blank(cam, opt);
#pragma omp parallel
  {
    std::vector<double> T(cam.width);
#pragma omp for schedule(dynamic, 4)
    for (int y = 0; y < cam.height; ++y) composite_row(y, prep, gaussians, opt, img, T, nullptr);
  }
  return img;
}

double loss_rgb(const Image& rendered, const Image& observed, const Image* mask) {
  return l1(rendered, observed, mask);
}

double loss_seg(const Image& rendered, const Image& observed, const Image* mask) {
  return l1(rendered, observed, mask);
}

BackwardResult backward(std::span<const Gaussian> gaussians, const Camera& cam,
                        const LossTarget& target, const ParamSelect& select,
                        const RenderOptions& opt) {
  if (!target.rgb) throw Error(ErrorCode::DimensionMismatch, "backward needs an RGB target");
  if (target.rgb->width != cam.width || target.rgb->height != cam.height || target.rgb->channels != 3)
    throw Error(ErrorCode::DimensionMismatch, "RGB target does not match camera");
  const int K = opt.seg_channels;
  const bool use_seg = target.seg != nullptr && K > 0;
  if (use_seg && (target.seg->width != cam.width || target.seg->height != cam.height ||
                  target.seg->channels != K))
    throw Error(ErrorCode::DimensionMismatch, "segmentation target does not match camera");
  for (const Image* m : {target.mask, target.seg_mask})
    if (m && (m->width != cam.width || m->height != cam.height || m->channels != 1))
      throw Error(ErrorCode::DimensionMismatch, "mask does not match camera");

  const Prepared prep = prepare(gaussians, cam, opt);
  const int ns = static_cast<int>(prep.splats.size());
  const int width = cam.width;
  const int bands = (cam.height + kBandRows - 1) / kBandRows;

  BackwardResult result;
  result.image = blank(cam, opt);
  result.grads.resize(gaussians.size());

  // Band partition is fixed by the image height, so the reduction order below does
  // not depend on the number of workers.
  std::vector<std::vector<double>> band_acc(bands);
  std::vector<double> band_loss_rgb(bands, 0.0), band_loss_seg(bands, 0.0);

#pragma omp parallel
  {
    std::vector<double> T(width);
    std::vector<Contribution> records;
    std::vector<double> dC(3 * width), dS(std::max(1, K) * width);
    std::vector<double> B(3 * width), BS(std::max(1, K) * width);
#pragma omp for schedule(dynamic, 1)
    for (int band = 0; band < bands; ++band) {
      auto& acc = band_acc[band];
      acc.assign(static_cast<std::size_t>(ns) * kAcc, 0.0);
      const int ya = band * kBandRows;
      const int yb = std::min(cam.height, ya + kBandRows);
      for (int y = ya; y < yb; ++y) {
        records.clear();
        composite_row(y, prep, gaussians, opt, result.image, T, &records);
        for (int x = 0; x < width; ++x) {
          const bool on = !target.mask || target.mask->at(x, y) > 0.5;
          for (int c = 0; c < 3; ++c) {
            const double r = result.image.rgb.at(x, y, c) - target.rgb->at(x, y, c);
            dC[3 * x + c] = on ? l1_sign(r) : 0.0;
            if (on) band_loss_rgb[band] += std::abs(r);
          }
          const bool seg_on = !target.seg_mask || target.seg_mask->at(x, y) > 0.5;
          for (int c = 0; c < K; ++c) {
            double g = 0.0;
            if (use_seg && seg_on) {
              const double r = result.image.seg.at(x, y, c) - target.seg->at(x, y, c);
              g = target.seg_weight * l1_sign(r);
              band_loss_seg[band] += std::abs(r);
            }
            dS[K * x + c] = g;
          }
        }
        std::fill(B.begin(), B.end(), 0.0);
        std::fill(BS.begin(), BS.end(), 0.0);
        for (auto it = records.rbegin(); it != records.rend(); ++it) {
          const Splat& s = prep.splats[it->splat];
          const Gaussian& g = gaussians[s.index];
          const int x = it->x;
          const double alpha = it->alpha;
          const double t = it->transmittance;
          double* a = &acc[static_cast<std::size_t>(it->splat) * kAcc];
          const double* dc = &dC[3 * x];
          double* bc = &B[3 * x];
          double dalpha = 0.0;
          for (int c = 0; c < 3; ++c) {
            a[6 + c] += alpha * t * dc[c];
            dalpha += (g.color[c] - bc[c]) * dc[c];
            bc[c] = alpha * g.color[c] + (1.0 - alpha) * bc[c];
          }
          if (K > 0) {
            const double* ds = &dS[K * x];
            double* bs = &BS[K * x];
            for (int c = 0; c < K; ++c) {
              const double o = (c == g.segment) ? 1.0 : 0.0;
              dalpha += (o - bs[c]) * ds[c];
              bs[c] = alpha * o + (1.0 - alpha) * bs[c];
            }
          }
          dalpha *= t;
          if (dalpha == 0.0) continue;
          a[5] += dalpha * alpha / s.opacity;
          const double dg = -alpha * dalpha;
          const double dx = x - s.mean.x();
          const double dy = y - s.mean.y();
          a[0] += -2.0 * dg * (s.q00 * dx + s.q01 * dy);
          a[1] += -2.0 * dg * (s.q01 * dx + s.q11 * dy);
          a[2] += dg * dx * dx;
          a[3] += dg * dx * dy;
          a[4] += dg * dy * dy;
        }
      }
    }

    // Chain rule from screen space to Gaussian parameters.
#pragma omp for schedule(static)
    for (int k = 0; k < ns; ++k) {
      double a[kAcc] = {0};
      for (int band = 0; band < bands; ++band) {
        const double* src = &band_acc[band][static_cast<std::size_t>(k) * kAcc];
        for (int j = 0; j < kAcc; ++j) a[j] += src[j];
      }
      const Splat& s = prep.splats[k];
      const Gaussian& g = gaussians[s.index];
      const int gi = s.index;
      const Vec2 dmean(a[0], a[1]);
      result.grads.screen_position[gi] = dmean.norm();
      if (select.opacity) result.grads.opacity[gi] = a[5];
      if (select.color) result.grads.color[gi] = Vec3(a[6], a[7], a[8]);
      if (!select.position && !select.rotation && !select.scale) continue;

      Mat2 Q;
      Q << s.q00, s.q01, s.q01, s.q11;
      Mat2 Gq;
      Gq << a[2], a[3], a[3], a[4];
      const Mat2 G2 = -Q * Gq * Q;  // dL / dSigma'
      const Mat23 T = s.jac * s.view_rot;
      const Mat3 Gcov = T.transpose() * G2 * T;  // dL / dSigma

      if (select.scale || select.rotation) {
        const Mat3 M = s.rot * g.scale.asDiagonal();
        const Mat3 GM = 2.0 * Gcov * M;
        if (select.scale) {
          Vec3 ds;
          for (int c = 0; c < 3; ++c) ds[c] = GM.col(c).dot(s.rot.col(c));
          result.grads.scale[gi] = ds;
        }
        if (select.rotation) {
          const Mat3 GR = GM * g.scale.asDiagonal();
          const double w = g.q.w(), qx = g.q.x(), qy = g.q.y(), qz = g.q.z();
          Vec4 dq;
          dq[0] = 2.0 * (-qz * GR(0, 1) + qy * GR(0, 2) + qz * GR(1, 0) - qx * GR(1, 2) -
                         qy * GR(2, 0) + qx * GR(2, 1));
          dq[1] = 2.0 * (qy * GR(0, 1) + qz * GR(0, 2) + qy * GR(1, 0) - 2.0 * qx * GR(1, 1) -
                         w * GR(1, 2) + qz * GR(2, 0) + w * GR(2, 1) - 2.0 * qx * GR(2, 2));
          dq[2] = 2.0 * (-2.0 * qy * GR(0, 0) + qx * GR(0, 1) + w * GR(0, 2) + qx * GR(1, 0) +
                         qz * GR(1, 2) - w * GR(2, 0) + qz * GR(2, 1) - 2.0 * qy * GR(2, 2));
          dq[3] = 2.0 * (-2.0 * qz * GR(0, 0) - w * GR(0, 1) + qx * GR(0, 2) + w * GR(1, 0) -
                         2.0 * qz * GR(1, 1) + qy * GR(1, 2) + qx * GR(2, 0) + qy * GR(2, 1));
          const Vec4 qv = g.q.wxyz();
          result.grads.rotation[gi] = dq - qv * qv.dot(dq);
        }
      }

      if (select.position) {
        const Mat23 GT = 2.0 * G2 * T * s.cov;   // dL / dT
        const Mat23 GJ = GT * s.view_rot.transpose();  // dL / dJ
        const Vec3& p = s.view_point;
        const double iz = 1.0 / p.z();
        const double iz2 = iz * iz;
        const double iz3 = iz2 * iz;
        Vec3 dp = s.jac.transpose() * dmean;
        dp.x() += GJ(0, 2) * (-cam.fx * iz2);
        dp.y() += GJ(1, 2) * (-cam.fy * iz2);
        dp.z() += GJ(0, 0) * (-cam.fx * iz2) + GJ(0, 2) * (2.0 * cam.fx * p.x() * iz3) +
                  GJ(1, 1) * (-cam.fy * iz2) + GJ(1, 2) * (2.0 * cam.fy * p.y() * iz3);
        result.grads.position[gi] = s.view_rot.transpose() * dp;
      }
    }
  }

  result.loss_rgb = std::accumulate(band_loss_rgb.begin(), band_loss_rgb.end(), 0.0);
  result.loss_seg = std::accumulate(band_loss_seg.begin(), band_loss_seg.end(), 0.0);
  result.loss = result.loss_rgb + target.seg_weight * result.loss_seg;
  return result;
}

}  // namespace gpw
