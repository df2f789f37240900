#include "srfloc/camera.hpp"

#include <stdexcept>

namespace srfloc {

PinholeCamera::PinholeCamera(double fx_, double fy_, double cx_, double cy_, int width_,
                             int height_)
    : fx(fx_), fy(fy_), cx(cx_), cy(cy_), width(width_), height(height_) {
  if (fx <= 0.0 || fy <= 0.0) throw std::invalid_argument("camera: focal lengths must be positive");
  if (width > 0 && (cx < 0.0 || cx >= width)) {
    throw std::invalid_argument("camera: cx outside image");
  }
  if (height > 0 && (cy < 0.0 || cy >= height)) {
    throw std::invalid_argument("camera: cy outside image");
  }
}

std::optional<Pixel> project(const PinholeCamera& cam, const Eigen::Vector3d& x) {
  if (!(x.z() > 0.0)) return std::nullopt;
  return Pixel{cam.fx * x.x() / x.z() + cam.cx, cam.fy * x.y() / x.z() + cam.cy};
}

std::optional<Eigen::Vector3d> unproject(const PinholeCamera& cam, const Pixel& p, double rho) {
  if (!(rho > 0.0)) return std::nullopt;
  const double z = 1.0 / rho;
  return Eigen::Vector3d((p.u - cam.cx) / cam.fx * z, (p.v - cam.cy) / cam.fy * z, z);
}

Eigen::Vector3d lift_unit_plane(const PinholeCamera& cam, const Pixel& p) {
  return Eigen::Vector3d((p.u - cam.cx) / cam.fx, (p.v - cam.cy) / cam.fy, 1.0);
}

Eigen::Matrix<double, 2, 3> projection_jacobian(const PinholeCamera& cam,
                                                const Eigen::Vector3d& x) {
  const double iz = 1.0 / x.z();
  const double iz2 = iz * iz;
  Eigen::Matrix<double, 2, 3> j;
  j << cam.fx * iz, 0.0, -cam.fx * x.x() * iz2, 0.0, cam.fy * iz, -cam.fy * x.y() * iz2;
  return j;
}

}  // namespace srfloc
