#pragma once

#include <span>
#include <vector>

#include "gpw/geom.hpp"
#include "gpw/image.hpp"

namespace gpw {

struct Gaussian {
  Vec3 x = Vec3::Zero();
  UnitQuat q;
  //! Per-axis standard deviation in meters.
  Vec3 scale = Vec3::Constant(0.005);
  double opacity = 0.5;
  Vec3 color = Vec3::Constant(0.5);
  //! Segmentation channel (one-hot); negative means no segmentation contribution.
  int segment = -1;
};

struct RenderOptions {
  //! Number of segmentation channels rendered; Gaussians with segment >= this are ignored.
  int seg_channels = 0;
  double near = kNearClip;
  //! Added to the screen covariance diagonal, in px^2.
  double dilation = 0.3;
  double alpha_min = 1.0 / 255.0;
  double transmittance_min = 1e-4;
};

//! Sigma = R diag(s^2) R^T.
Mat3 world_covariance(const Gaussian& g);

//! Sigma' = J W Sigma W^T J^T + dilation * I. Throws Error(BehindCamera).
Mat2 screen_covariance(const Mat3& cov, const Camera& cam, const Vec3& x,
                       double dilation = RenderOptions{}.dilation);

struct RenderedImage {
  Image rgb;
  Image seg;
  Image alpha;
};

//! Front-to-back splatting of depth-sorted Gaussians (ties broken by index).
RenderedImage render(std::span<const Gaussian> gaussians, const Camera& cam,
                     const RenderOptions& options = {});

//! Sum over pixels and channels of |rendered - observed|, restricted to mask > 0.5 when given.
double loss_rgb(const Image& rendered, const Image& observed, const Image* mask = nullptr);
double loss_seg(const Image& rendered, const Image& observed, const Image* mask = nullptr);

struct ParamSelect {
  bool position = true;
  bool rotation = true;
  bool scale = true;
  bool opacity = true;
  bool color = true;
};

struct GaussianGrads {
  std::vector<Vec3> position;
  //! Gradient with respect to quaternion components (w, x, y, z).
  std::vector<Vec4> rotation;
  std::vector<Vec3> scale;
  std::vector<double> opacity;
  std::vector<Vec3> color;
  //! |dL / d projected center| in loss per pixel; densification statistic.
  std::vector<double> screen_position;

  void resize(std::size_t n);
};

struct LossTarget {
  const Image* rgb = nullptr;
  //! Optional single-channel mask restricting the RGB term.
  const Image* mask = nullptr;
  //! Optional segmentation target with seg_channels channels; adds seg_weight * L_seg.
  const Image* seg = nullptr;
  //! Optional single-channel mask restricting the segmentation term.
  const Image* seg_mask = nullptr;
  double seg_weight = 1.0;
};

struct BackwardResult {
  double loss = 0.0;
  double loss_rgb = 0.0;
  double loss_seg = 0.0;
  GaussianGrads grads;
  RenderedImage image;
};

//! Exact gradients of L_rgb (+ seg_weight * L_seg) for the selected parameter
//! groups. The L1 subgradient at zero residual is zero.
BackwardResult backward(std::span<const Gaussian> gaussians, const Camera& cam,
                        const LossTarget& target, const ParamSelect& select = {},
                        const RenderOptions& options = {});

}  // namespace gpw
