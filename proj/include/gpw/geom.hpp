#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <optional>

#include "gpw/error.hpp"

namespace gpw {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat23 = Eigen::Matrix<double, 2, 3>;

//! Unit quaternion kept normalized with w >= 0 after every operation.
class UnitQuat {
 public:
  UnitQuat() = default;

  static UnitQuat identity() { return {}; }
  //! Normalizes the given components; a zero vector yields identity.
  static UnitQuat from_wxyz(double w, double x, double y, double z);
  static UnitQuat from_axis_angle(const Vec3& axis, double angle);
  //! Rotation vector (axis * angle).
  static UnitQuat from_rotation_vector(const Vec3& rv);
  static UnitQuat from_matrix(const Mat3& R);

  double w() const { return q_.w(); }
  double x() const { return q_.x(); }
  double y() const { return q_.y(); }
  double z() const { return q_.z(); }
  //! Components ordered (w, x, y, z).
  Vec4 wxyz() const { return {q_.w(), q_.x(), q_.y(), q_.z()}; }

  Mat3 matrix() const { return q_.toRotationMatrix(); }
  Vec3 rotate(const Vec3& v) const { return q_ * v; }
  UnitQuat inverse() const { return UnitQuat(q_.conjugate()); }
  UnitQuat operator*(const UnitQuat& o) const { return UnitQuat(q_ * o.q_); }

  //! Rotation angle in [0, pi].
  double angle() const;
  const Eigen::Quaterniond& eigen() const { return q_; }

  bool operator==(const UnitQuat& o) const { return q_.coeffs() == o.q_.coeffs(); }

 private:
  explicit UnitQuat(const Eigen::Quaterniond& q);
  Eigen::Quaterniond q_ = Eigen::Quaterniond::Identity();
};

//! Advances q by angular velocity w over dt: q <- [w/|w| sin(|w|dt/2), cos(|w|dt/2)] q.
UnitQuat quat_integrate(const UnitQuat& q, const Vec3& w, double dt);

//! Angular velocity that carries q0 to q1 in dt (inverse of quat_integrate).
Vec3 quat_to_axis_angle_rate(const UnitQuat& q1, const UnitQuat& q0, double dt);

struct RigidTransform {
  UnitQuat rotation;
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return rotation.rotate(p) + translation; }
  RigidTransform inverse() const;
  RigidTransform operator*(const RigidTransform& o) const;
};

struct Plane {
  Vec3 normal = Vec3::UnitZ();
  double offset = 0.0;

  //! Signed distance n.x + d.
  double distance(const Vec3& p) const { return normal.dot(p) + offset; }
};

struct Camera {
  RigidTransform world_to_view;
  double fx = 100.0;
  double fy = 100.0;
  double cx = 50.0;
  double cy = 50.0;
  int width = 100;
  int height = 100;

  //! Throws Error(Config) unless focal lengths and image size are positive.
  void validate() const;
  Vec3 center() const;
  //! View looks along +z, x right, y down (OpenCV convention).
  static Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double fx,
                        double fy, int width, int height);
  //! Same intrinsics rescaled to a new image size.
  Camera resized(int width, int height) const;
};

inline constexpr double kNearClip = 0.01;

struct Projection {
  Vec2 pixel;
  double depth = 0.0;
  Vec3 view_point;
  //! d pixel / d view_point.
  Mat23 jacobian_view;
  //! d pixel / d world point.
  Mat23 jacobian_world;
};

//! Pinhole projection; throws Error(BehindCamera) when depth <= near.
Projection project(const Camera& cam, const Vec3& x, double near = kNearClip);
std::optional<Projection> try_project(const Camera& cam, const Vec3& x,
                                      double near = kNearClip);

//! Rotation factor of the polar decomposition A = R S via SVD with a determinant
//! fix so R is proper. Empty when the smallest singular value is below 1e-10.
std::optional<Mat3> try_polar_rotation(const Mat3& A);
//! As above, returning `fallback` for degenerate input.
Mat3 polar_decompose(const Mat3& A, const Mat3& fallback, bool* degenerate = nullptr);

Mat3 skew(const Vec3& v);

}  // namespace gpw
