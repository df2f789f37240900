#pragma once

#include <Eigen/Core>
#include <span>
#include <vector>

#include "srfloc/rng.hpp"

namespace srfloc {

struct EssentialOptions {
  int max_iterations = 200;
  double confidence = 0.99;
  double sampson_threshold = 0.01;  // in normalized image-plane units
};

struct EssentialResult {
  bool ok = false;
  Eigen::Matrix3d essential = Eigen::Matrix3d::Zero();
  std::vector<char> inlier_mask;
  int inlier_count = 0;
};

// First-order geometric (Sampson) distance of a normalized correspondence.
double sampson_distance(const Eigen::Matrix3d& essential, const Eigen::Vector3d& x1,
                        const Eigen::Vector3d& x2);

// Hartley-normalized 8-point solver on unit-image-plane correspondences,
// x2' * E * x1 = 0, with the rank-2 equal-singular-value projection.
bool eight_point_essential(std::span<const Eigen::Vector3d> x1,
                           std::span<const Eigen::Vector3d> x2, Eigen::Matrix3d* essential);

// RANSAC wrapper; ok == false when fewer than 8 correspondences are given or
// no model could be estimated.
EssentialResult essential_ransac(std::span<const Eigen::Vector3d> x1,
                                 std::span<const Eigen::Vector3d> x2,
                                 const EssentialOptions& options, Rng& rng);

}  // namespace srfloc
