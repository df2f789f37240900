#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace srfloc {

// Tangent layout: [translation(3); rotation(3)].
using Tangent = Eigen::Matrix<double, 6, 1>;

// Rigid transform, stored as unit quaternion + translation. For a camera
// pose this is the world-from-camera transform: transform() maps camera
// frame points into the world frame.
struct SE3 {
  Eigen::Quaterniond q = Eigen::Quaterniond::Identity();
  Eigen::Vector3d t = Eigen::Vector3d::Zero();

  static SE3 identity();
  static SE3 from_matrix(const Eigen::Matrix3d& rotation, const Eigen::Vector3d& translation);

  SE3 operator*(const SE3& rhs) const;
  SE3 inverse() const;

  Eigen::Vector3d transform(const Eigen::Vector3d& p) const;
  Eigen::Vector3d inverse_transform(const Eigen::Vector3d& p) const;
  Eigen::Matrix3d rotation() const;

  // Renormalizes the quaternion and fixes the sign so w >= 0.
  void normalize();
};

// Relative rotation angle in radians.
double rotation_angle(const SE3& a, const SE3& b);
double translation_distance(const SE3& a, const SE3& b);

SE3 se3_exp(const Tangent& xi);
// Defined for rotation angles < pi.
Tangent se3_log(const SE3& pose);
// Right-multiplicative update: pose * exp(delta). All optimizers use this.
SE3 se3_boxplus(const SE3& pose, const Tangent& delta);

}  // namespace srfloc
