#include <doctest.h>

#include <Eigen/Eigenvalues>

#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "gpw/splat.hpp"
#include "oracles.hpp"

using namespace gpw;

namespace {

Camera axis_camera(int w = 32, int h = 32, double f = 32) {
  Camera cam;
  cam.fx = cam.fy = f;
  cam.cx = 0.5 * (w - 1);
  cam.cy = 0.5 * (h - 1);
  cam.width = w;
  cam.height = h;
  return cam;
}

}  // namespace

TEST_SUITE("splat") {

TEST_CASE("world covariance") {
  Gaussian g;
  g.scale = Vec3::Constant(1e-3);
  CHECK((world_covariance(g) - 1e-6 * Mat3::Identity()).norm() < 1e-18);
  g.scale = Vec3(2e-3, 1e-3, 1e-3);
  g.q = UnitQuat::from_axis_angle(Vec3::UnitZ(), std::numbers::pi / 2);
  const Mat3 c = world_covariance(g);
  CHECK(c(0, 0) == doctest::Approx(1e-6));
  CHECK(c(1, 1) == doctest::Approx(4e-6));
  CHECK(c(2, 2) == doctest::Approx(1e-6));

  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.001, 0.05);
  for (int i = 0; i < 100; ++i) {
    Gaussian r;
    r.q = UnitQuat::from_wxyz(u(rng) - 0.02, u(rng), u(rng) - 0.03, u(rng));
    r.scale = Vec3(u(rng), u(rng), u(rng));
    Eigen::SelfAdjointEigenSolver<Mat3> es(world_covariance(r));
    Vec3 s2 = r.scale.cwiseProduct(r.scale);
    std::sort(s2.data(), s2.data() + 3);
    CHECK((es.eigenvalues() - s2).norm() < 1e-12);
  }
}

TEST_CASE("screen covariance pinhole scaling") {
  const Camera cam = axis_camera(64, 64, 100);
  const double sigma = 0.01, z = 0.5;
  const Mat2 s = screen_covariance(sigma * sigma * Mat3::Identity(), cam, Vec3(0, 0, z));
  const double e = std::pow(100 * sigma / z, 2) + 0.3;
  CHECK(s(0, 0) == doctest::Approx(e));
  CHECK(s(1, 1) == doctest::Approx(e));
  CHECK(std::abs(s(0, 1)) < 1e-12);
  const Mat2 near = screen_covariance(sigma * sigma * Mat3::Identity(), cam, Vec3(0, 0, z), 0.0);
  const Mat2 far = screen_covariance(sigma * sigma * Mat3::Identity(), cam, Vec3(0, 0, 2 * z), 0.0);
  CHECK((near / 4.0 - far).norm() < 1e-12);
  CHECK_THROWS_AS(screen_covariance(Mat3::Identity(), cam, Vec3(0, 0, -1)), Error);
}

TEST_CASE("render empty and single Gaussian") {
  const Camera cam = axis_camera();
  const RenderedImage empty = render({}, cam);
  for (double v : empty.rgb.data) CHECK(v == 0.0);
  for (double v : empty.alpha.data) CHECK(v == 0.0);

  Camera odd = axis_camera(33, 33, 33);
  Gaussian g;
  g.x = Vec3(0, 0, 1);
  g.opacity = 1.0;
  g.color = Vec3(1, 0, 0);
  g.scale = Vec3::Constant(0.02);
  const RenderedImage img = render(std::span(&g, 1), odd);
  CHECK(img.rgb.at(16, 16, 0) == doctest::Approx(1.0));
  CHECK(img.rgb.at(16, 16, 1) == 0.0);
  CHECK(img.alpha.at(16, 16) == doctest::Approx(1.0));
}

TEST_CASE("two overlapping Gaussians composite front to back") {
  Camera cam = axis_camera(33, 33, 33);
  Gaussian front, back;
  front.x = Vec3(0, 0, 1);
  front.opacity = 0.5;
  front.color = Vec3(1, 0, 0);
  back.x = Vec3(0, 0, 2);
  back.opacity = 1.0;
  back.color = Vec3(0, 0, 1);
  back.scale = Vec3::Constant(0.04);
  // back first in the list: sorting must still put the red one in front
  const std::vector<Gaussian> gs{back, front};
  const RenderedImage img = render(gs, cam);
  CHECK(img.rgb.at(16, 16, 0) == doctest::Approx(0.5));
  CHECK(img.rgb.at(16, 16, 1) == 0.0);
  CHECK(img.rgb.at(16, 16, 2) == doctest::Approx(0.5));
}

TEST_CASE("opaque Gaussian occludes at its center") {
  Camera cam = axis_camera(33, 33, 33);
  Gaussian a, b;
  a.x = Vec3(0, 0, 1);
  a.opacity = 1.0;
  a.color = Vec3(0, 1, 0);
  b = a;
  b.x = Vec3(0, 0, 1.5);
  b.scale *= 1.5;
  b.color = Vec3(1, 0, 1);
  const std::vector<Gaussian> gs{a, b};
  const RenderedImage img = render(gs, cam);
  CHECK(img.rgb.at(16, 16, 1) == doctest::Approx(1.0));
  CHECK(img.rgb.at(16, 16, 0) == doctest::Approx(0.0));
}

TEST_CASE("alpha bounded and render deterministic") {
  std::mt19937_64 rng(2);
  const auto scene = oracle::random_scene(rng, 200, 64, 3);
  RenderOptions opt;
  opt.seg_channels = 3;
  const RenderedImage a = render(scene.gaussians, scene.camera, opt);
  const RenderedImage b = render(scene.gaussians, scene.camera, opt);
  CHECK(a.rgb.data == b.rgb.data);
  CHECK(a.seg.data == b.seg.data);
  for (double v : a.alpha.data) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  for (double v : a.rgb.data) CHECK(std::isfinite(v));
}

TEST_CASE("segmentation channels composite like colors") {
  Camera cam = axis_camera(33, 33, 33);
  Gaussian g;
  g.x = Vec3(0, 0, 1);
  g.opacity = 0.8;
  g.segment = 1;
  RenderOptions opt;
  opt.seg_channels = 2;
  const RenderedImage img = render(std::span(&g, 1), cam, opt);
  CHECK(img.seg.channels == 2);
  CHECK(img.seg.at(16, 16, 0) == 0.0);
  CHECK(img.seg.at(16, 16, 1) == doctest::Approx(0.8));
  CHECK(img.seg.at(16, 16, 1) == doctest::Approx(img.alpha.at(16, 16)));
}

TEST_CASE("L1 losses") {
  Image a(2, 2, 3, 0.0), b(2, 2, 3, 1.0);
  CHECK(loss_rgb(a, a) == 0.0);
  CHECK(loss_rgb(a, b) == doctest::Approx(12.0));
  Image mask(2, 2, 1, 0.0);
  mask.at(1, 1) = 1.0;
  CHECK(loss_rgb(a, b, &mask) == doctest::Approx(3.0));
  CHECK_THROWS_AS(loss_rgb(a, Image(3, 2, 3)), Error);

  Image s0(4, 1, 2, 0.0), s1(4, 1, 2, 0.0);
  for (int x = 0; x < 4; ++x) {
    s0.at(x, 0, 0) = 1.0;
    s1.at(x, 0, 1) = 1.0;
  }
  CHECK(loss_seg(s0, s0) == 0.0);
  CHECK(loss_seg(s0, s1) == doctest::Approx(8.0));

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 1);
  Image r1(7, 5, 3), r2(7, 5, 3);
  for (double& v : r1.data) v = u(rng);
  for (double& v : r2.data) v = u(rng);
  double ref = 0.0;
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 7; ++x)
      for (int c = 0; c < 3; ++c) ref += std::abs(r1.at(x, y, c) - r2.at(x, y, c));
  CHECK(loss_rgb(r1, r2) == doctest::Approx(ref).epsilon(1e-12));
}

TEST_CASE("perfect reconstruction has zero gradients") {
  std::mt19937_64 rng(4);
  const auto scene = oracle::random_scene(rng, 20, 48, 0);
  const RenderedImage img = render(scene.gaussians, scene.camera);
  LossTarget t;
  t.rgb = &img.rgb;
  const BackwardResult br = backward(scene.gaussians, scene.camera, t);
  CHECK(br.loss == 0.0);
  for (std::size_t i = 0; i < scene.gaussians.size(); ++i) {
    CHECK(br.grads.position[i].norm() < 1e-10);
    CHECK(br.grads.rotation[i].norm() < 1e-10);
    CHECK(br.grads.scale[i].norm() < 1e-10);
    CHECK(std::abs(br.grads.opacity[i]) < 1e-10);
    CHECK(br.grads.color[i].norm() < 1e-10);
  }
}

TEST_CASE("backward loss equals forward loss and respects selection") {
  std::mt19937_64 rng(5);
  const auto scene = oracle::random_scene(rng, 30, 48, 2);
  RenderOptions opt;
  opt.seg_channels = 2;
  LossTarget t;
  t.rgb = &scene.target_rgb;
  t.seg = &scene.target_seg;
  ParamSelect sel;
  sel.scale = false;
  sel.color = false;
  const BackwardResult br = backward(scene.gaussians, scene.camera, t, sel, opt);
  const RenderedImage img = render(scene.gaussians, scene.camera, opt);
  CHECK(br.image.rgb.data == img.rgb.data);
  const double expect = loss_rgb(img.rgb, scene.target_rgb) + loss_seg(img.seg, scene.target_seg);
  CHECK(br.loss == doctest::Approx(expect).epsilon(1e-12));
  for (std::size_t i = 0; i < scene.gaussians.size(); ++i) {
    CHECK(br.grads.scale[i].norm() == 0.0);
    CHECK(br.grads.color[i].norm() == 0.0);
  }
}

TEST_CASE("culled Gaussians get zero gradients") {
  std::mt19937_64 rng(6);
  auto scene = oracle::random_scene(rng, 5, 32, 0);
  scene.gaussians[2].x = Vec3(0, -2, 0.3);  // behind the camera
  LossTarget t;
  t.rgb = &scene.target_rgb;
  const BackwardResult br = backward(scene.gaussians, scene.camera, t);
  CHECK(br.grads.position[2].norm() == 0.0);
  CHECK(br.grads.opacity[2] == 0.0);
}

TEST_CASE("single Gaussian position gradient vs shifted target") {
  Camera cam = axis_camera(32, 32, 40);
  Gaussian g;
  g.x = Vec3(0.01, -0.005, 1.0);
  g.scale = Vec3::Constant(0.05);
  g.opacity = 0.9;
  g.color = Vec3(0.9, 0.4, 0.2);
  Gaussian shifted = g;
  shifted.x += Vec3(0.03, 0.02, 0.0);
  const RenderedImage target = render(std::span(&shifted, 1), cam);
  LossTarget t;
  t.rgb = &target.rgb;
  const BackwardResult br = backward(std::span(&g, 1), cam, t);
  const double h = 1e-5;
  for (int k = 0; k < 3; ++k) {
    Gaussian a = g, b = g;
    a.x[k] += h;
    b.x[k] -= h;
    const double fd = (loss_rgb(render(std::span(&a, 1), cam).rgb, target.rgb) -
                       loss_rgb(render(std::span(&b, 1), cam).rgb, target.rgb)) / (2 * h);
    CHECK(br.grads.position[0][k] == doctest::Approx(fd).epsilon(1e-3));
  }
}

TEST_CASE("random scenes pass the finite-difference oracle") {
  std::mt19937_64 rng(7);
  for (int s = 0; s < 3; ++s) {
    const auto scene = oracle::random_scene(rng, 20, 32, 2);
    RenderOptions opt;
    opt.seg_channels = 2;
    LossTarget t;
    t.rgb = &scene.target_rgb;
    t.seg = &scene.target_seg;
    const auto st = oracle::check_gradients(scene.gaussians, scene.camera, t, opt, rng);
    INFO(st.worst);
    CHECK(st.failures == 0);
    CHECK(st.kinks_skipped * 20 <= st.checked);
  }
}

}  // TEST_SUITE
