#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <vector>

namespace bevbench {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Rigid transform y = R * x + t. R must be a proper rotation.
struct RigidTransform {
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return R * p + t; }

  RigidTransform inverse() const {
    RigidTransform inv;
    inv.R = R.transpose();
    inv.t = -(inv.R * t);
    return inv;
  }

  // (*this) after `inner`: result(x) = this(inner(x)).
  RigidTransform compose(const RigidTransform& inner) const {
    RigidTransform out;
    out.R = R * inner.R;
    out.t = R * inner.t + t;
    return out;
  }

  // Origin of the frame this transform maps *into*, expressed in the source frame.
  Vec3 origin_in_source() const { return -(R.transpose() * t); }

  bool is_rotation(double tol = 1e-9) const {
    const Mat3 err = R * R.transpose() - Mat3::Identity();
    return err.cwiseAbs().maxCoeff() <= tol && std::abs(R.determinant() - 1.0) <= tol;
  }
};

inline Mat3 rot_z(double yaw) {
  const double c = std::cos(yaw), s = std::sin(yaw);
  Mat3 m;
  m << c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0;
  return m;
}

// Wraps an angle into the principal range (-pi, pi].
inline double wrap_angle(double a) {
  double w = std::fmod(a + M_PI, 2.0 * M_PI);
  if (w <= 0.0) w += 2.0 * M_PI;
  return w - M_PI;
}

// Folds an axis direction angle into (-pi/2, pi/2] (directions are unsigned).
inline double fold_axis_angle(double a) {
  double w = std::fmod(a, M_PI);
  if (w > 0.5 * M_PI) w -= M_PI;
  if (w <= -0.5 * M_PI) w += M_PI;
  return w;
}

inline std::vector<Vec3> transform_points(const std::vector<Vec3>& pts,
                                          const RigidTransform& T) {
  std::vector<Vec3> out;
  out.reserve(pts.size());
  for (const Vec3& p : pts) out.push_back(T.apply(p));
  return out;
}

}  // namespace bevbench
