#include "srfloc/se3.hpp"

#include <cmath>
#include <stdexcept>

namespace srfloc {

namespace {

Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
  Eigen::Matrix3d m;
  m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return m;
}

}  // namespace

SE3 SE3::identity() { return SE3{Eigen::Quaterniond::Identity(), Eigen::Vector3d::Zero()}; }

SE3 SE3::from_matrix(const Eigen::Matrix3d& rotation, const Eigen::Vector3d& translation) {
  SE3 out;
  out.q = Eigen::Quaterniond(rotation);
  out.t = translation;
  out.normalize();
  return out;
}

void SE3::normalize() {
  q.normalize();
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
}

SE3 SE3::operator*(const SE3& rhs) const {
  SE3 out;
  out.q = q * rhs.q;
  out.t = q * rhs.t + t;
  out.normalize();
  return out;
}

SE3 SE3::inverse() const {
  SE3 out;
  out.q = q.conjugate();
  out.t = -(out.q * t);
  out.normalize();
  return out;
}

Eigen::Vector3d SE3::transform(const Eigen::Vector3d& p) const { return q * p + t; }

Eigen::Vector3d SE3::inverse_transform(const Eigen::Vector3d& p) const {
  return q.conjugate() * (p - t);
}

Eigen::Matrix3d SE3::rotation() const { return q.toRotationMatrix(); }

double rotation_angle(const SE3& a, const SE3& b) {
  const double c = std::clamp(std::abs(a.q.dot(b.q)), 0.0, 1.0);
  return 2.0 * std::acos(c);
}

double translation_distance(const SE3& a, const SE3& b) { return (a.t - b.t).norm(); }

SE3 se3_exp(const Tangent& xi) {
  const Eigen::Vector3d rho = xi.head<3>();
  const Eigen::Vector3d phi = xi.tail<3>();
  const double theta = phi.norm();

  Eigen::Matrix3d rot;
  Eigen::Matrix3d left_jacobian;
  if (theta < 1e-10) {
    const Eigen::Matrix3d hat = skew(phi);
    rot = Eigen::Matrix3d::Identity() + hat + 0.5 * hat * hat;
    left_jacobian = Eigen::Matrix3d::Identity() + 0.5 * hat;
  } else {
    const Eigen::Vector3d axis = phi / theta;
    const Eigen::Matrix3d hat = skew(axis);
    const double s = std::sin(theta);
    const double c = std::cos(theta);
    rot = Eigen::Matrix3d::Identity() + s * hat + (1.0 - c) * hat * hat;
    left_jacobian = Eigen::Matrix3d::Identity() + ((1.0 - c) / theta) * skew(axis) +
                    ((theta - s) / theta) * hat * hat;
  }

  SE3 out;
  out.q = Eigen::Quaterniond(rot);
  out.t = left_jacobian * rho;
  out.normalize();
  return out;
}

Tangent se3_log(const SE3& pose) {
  const Eigen::AngleAxisd aa(pose.q);
  double theta = aa.angle();
  Eigen::Vector3d axis = aa.axis();
  if (theta > M_PI) {  // keep the short representation
    theta = 2.0 * M_PI - theta;
    axis = -axis;
  }
  const Eigen::Vector3d phi = theta * axis;

  Eigen::Matrix3d inv_left_jacobian;
  if (theta < 1e-10) {
    inv_left_jacobian = Eigen::Matrix3d::Identity() - 0.5 * skew(phi);
  } else {
    const Eigen::Matrix3d hat = skew(axis);
    const double half = 0.5 * theta;
    const double cot_half = std::cos(half) / std::sin(half);
    inv_left_jacobian = Eigen::Matrix3d::Identity() - half * hat +
                        (1.0 - half * cot_half) * hat * hat;
  }

  Tangent xi;
  xi.head<3>() = inv_left_jacobian * pose.t;
  xi.tail<3>() = phi;
  return xi;
}

SE3 se3_boxplus(const SE3& pose, const Tangent& delta) { return pose * se3_exp(delta); }

}  // namespace srfloc
