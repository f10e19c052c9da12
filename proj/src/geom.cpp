#include "gpw/geom.hpp"

#include <Eigen/SVD>

#include <cmath>

namespace gpw {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::BehindCamera: return "BehindCamera";
    case ErrorCode::Degenerate: return "Degenerate";
    case ErrorCode::NonFiniteState: return "NonFiniteState";
    case ErrorCode::UnknownBody: return "UnknownBody";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::EmptyObject: return "EmptyObject";
    case ErrorCode::NoViews: return "NoViews";
    case ErrorCode::NoObservations: return "NoObservations";
    case ErrorCode::NoGaussians: return "NoGaussians";
    case ErrorCode::EmptyRecord: return "EmptyRecord";
    case ErrorCode::Config: return "ConfigError";
    case ErrorCode::Io: return "IoError";
  }
  return "Unknown";
}

UnitQuat::UnitQuat(const Eigen::Quaterniond& q) : q_(q) {
  const double n = q_.norm();
  if (!(n > 0.0) || !std::isfinite(n)) {
    q_ = Eigen::Quaterniond::Identity();
    return;
  }
  q_.coeffs() /= n;
  if (q_.w() < 0.0) q_.coeffs() = -q_.coeffs();
}

UnitQuat UnitQuat::from_wxyz(double w, double x, double y, double z) {
  return UnitQuat(Eigen::Quaterniond(w, x, y, z));
}

UnitQuat UnitQuat::from_axis_angle(const Vec3& axis, double angle) {
  const double n = axis.norm();
  if (n < 1e-300) return {};
  return UnitQuat(Eigen::Quaterniond(Eigen::AngleAxisd(angle, axis / n)));
}

UnitQuat UnitQuat::from_rotation_vector(const Vec3& rv) {
  const double angle = rv.norm();
  if (angle < 1e-300) return {};
  return from_axis_angle(rv / angle, angle);
}

UnitQuat UnitQuat::from_matrix(const Mat3& R) { return UnitQuat(Eigen::Quaterniond(R)); }

double UnitQuat::angle() const {
  return 2.0 * std::atan2(q_.vec().norm(), std::abs(q_.w()));
}

UnitQuat quat_integrate(const UnitQuat& q, const Vec3& w, double dt) {
  const double speed = w.norm();
  if (speed < 1e-12) return q;
  const double theta = 0.5 * speed * dt;
  const Vec3 axis = w / speed * std::sin(theta);
  return UnitQuat::from_wxyz(std::cos(theta), axis.x(), axis.y(), axis.z()) * q;
}

Vec3 quat_to_axis_angle_rate(const UnitQuat& q1, const UnitQuat& q0, double dt) {
  const UnitQuat dq = q1 * q0.inverse();
  const Vec3 v(dq.x(), dq.y(), dq.z());
  const double s = v.norm();
  if (s < 1e-300) return Vec3::Zero();
  // dq is canonical (w >= 0) so the angle is in [0, pi].
  const double angle = 2.0 * std::atan2(s, dq.w());
  return v / s * (angle / dt);
}

RigidTransform RigidTransform::inverse() const {
  const UnitQuat inv = rotation.inverse();
  return {inv, -inv.rotate(translation)};
}

RigidTransform RigidTransform::operator*(const RigidTransform& o) const {
  return {rotation * o.rotation, rotation.rotate(o.translation) + translation};
}

void Camera::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw Error(ErrorCode::Config, "camera focal length must be positive");
  if (width <= 0 || height <= 0) throw Error(ErrorCode::Config, "camera image size must be positive");
}

Vec3 Camera::center() const { return world_to_view.inverse().translation; }

Camera Camera::look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double fx,
                       double fy, int width, int height) {
  const Vec3 z = (target - eye).normalized();
  Vec3 x = z.cross(up);
  if (x.norm() < 1e-9) x = z.cross(Vec3::UnitX());
  x.normalize();
  const Vec3 y = z.cross(x);
  Mat3 view_from_world;
  view_from_world.row(0) = x.transpose();
  view_from_world.row(1) = y.transpose();
  view_from_world.row(2) = z.transpose();
  Camera cam;
  cam.world_to_view.rotation = UnitQuat::from_matrix(view_from_world);
  cam.world_to_view.translation = -(cam.world_to_view.rotation.rotate(eye));
  cam.fx = fx;
  cam.fy = fy;
  cam.width = width;
  cam.height = height;
  cam.cx = 0.5 * (width - 1);
  cam.cy = 0.5 * (height - 1);
  return cam;
}

Camera Camera::resized(int w, int h) const {
  Camera c = *this;
  const double sx = static_cast<double>(w) / width;
  const double sy = static_cast<double>(h) / height;
  c.fx *= sx;
  c.fy *= sy;
  c.cx = (cx + 0.5) * sx - 0.5;
  c.cy = (cy + 0.5) * sy - 0.5;
  c.width = w;
  c.height = h;
  return c;
}

std::optional<Projection> try_project(const Camera& cam, const Vec3& x, double near) {
  const Vec3 p = cam.world_to_view.apply(x);
  if (!(p.z() > near)) return std::nullopt;
  const double iz = 1.0 / p.z();
  Projection out;
  out.view_point = p;
  out.depth = p.z();
  out.pixel = {cam.fx * p.x() * iz + cam.cx, cam.fy * p.y() * iz + cam.cy};
  out.jacobian_view << cam.fx * iz, 0.0, -cam.fx * p.x() * iz * iz,
                       0.0, cam.fy * iz, -cam.fy * p.y() * iz * iz;
  out.jacobian_world = out.jacobian_view * cam.world_to_view.rotation.matrix();
  return out;
}

Projection project(const Camera& cam, const Vec3& x, double near) {
  auto p = try_project(cam, x, near);
  if (!p) throw Error(ErrorCode::BehindCamera, "point is behind the near clip plane");
  return *p;
}

std::optional<Mat3> try_polar_rotation(const Mat3& A) {
  if (!A.allFinite()) return std::nullopt;
  Eigen::JacobiSVD<Mat3> svd(A, Eigen::ComputeFullU | Eigen::ComputeFullV);
  if (svd.singularValues()(2) < 1e-10) return std::nullopt;
  const Mat3 U = svd.matrixU();
  const Mat3 V = svd.matrixV();
  Mat3 D = Mat3::Identity();
  D(2, 2) = (U * V.transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  return U * D * V.transpose();
}

Mat3 polar_decompose(const Mat3& A, const Mat3& fallback, bool* degenerate) {
  auto R = try_polar_rotation(A);
  if (degenerate) *degenerate = !R.has_value();
  return R ? *R : fallback;
}

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return m;
}

}  // namespace gpw
