#pragma once

#include <Eigen/Core>
#include <optional>

namespace srfloc {

struct Pixel {
  double u = 0.0;
  double v = 0.0;
};

// Rectified pinhole model, no distortion.
struct PinholeCamera {
  double fx = 1.0, fy = 1.0;
  double cx = 0.0, cy = 0.0;
  int width = 0, height = 0;

  PinholeCamera() = default;
  PinholeCamera(double fx, double fy, double cx, double cy, int width, int height);

  bool in_bounds(const Pixel& p) const {
    return p.u >= 0.0 && p.v >= 0.0 && p.u <= width - 1 && p.v <= height - 1;
  }
};

// Returns nullopt for points at or behind the camera plane (z <= 0).
std::optional<Pixel> project(const PinholeCamera& cam, const Eigen::Vector3d& x);

// Inverse of project at inverse depth rho; nullopt for rho <= 0.
std::optional<Eigen::Vector3d> unproject(const PinholeCamera& cam, const Pixel& p, double rho);

// ((u-cx)/fx, (v-cy)/fy, 1)
Eigen::Vector3d lift_unit_plane(const PinholeCamera& cam, const Pixel& p);

// d(pixel)/d(camera point) at x, valid for x.z > 0.
Eigen::Matrix<double, 2, 3> projection_jacobian(const PinholeCamera& cam,
                                                const Eigen::Vector3d& x);

}  // namespace srfloc
