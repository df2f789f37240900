#pragma once

#include <optional>
#include <string>
#include <vector>

#include "srfloc/camera.hpp"
#include "srfloc/database.hpp"
#include "srfloc/se3.hpp"
#include "srfloc/surfel_map.hpp"

namespace srfloc {

// Plane-induced reprojection constraint between the anchor keyframe (first
// observer of the map point) and one target keyframe. The anchor pixel ray is
// intersected with the surfel plane and reprojected into the target frame.
struct SurfelReprojFactor {
  PlaneCoeff plane;
  std::uint32_t anchor_kf = 0;
  Pixel anchor_px;
  std::uint32_t target_kf = 0;
  Pixel target_px;
  int octave = 0;  // of the target keypoint, drives the factor weight
};

struct OptimizerSettings {
  double huber_delta = 2.0;   // px on the residual norm
  int max_iterations = 50;
  double relative_decrease = 1e-8;
  double lambda_init = 1e-4;
  double eps_denominator = 1e-6;  // m
  double rho_min = 1e-4;          // 1/m
  double max_depth = 1e3;         // m
  double octave_scale = 1.2;
  // Wrong-plane associations survive the Huber loss as near-constant pull;
  // after each converged round, factors with residuals beyond the gate are
  // dropped and the solve repeats on the survivors.
  int trim_rounds = 2;
  double trim_gate_px = 10.0;
};

struct OptimizationReport {
  bool success = false;
  std::string message;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int iterations = 0;
  std::size_t residual_count = 0;
  std::size_t skipped_count = 0;
  std::size_t trimmed_count = 0;
  double max_pose_update = 0.0;
  std::vector<double> cost_per_iteration;

  std::string to_line() const;
};

// Inverse depth fixed by the ray/plane intersection. Rejects near-degenerate
// denominators, non-positive depth and depths beyond max_depth.
std::optional<double> inverse_depth_on_plane(const SE3& anchor_pose, const Pixel& anchor_px,
                                             const PlaneCoeff& plane, const PinholeCamera& cam,
                                             const OptimizerSettings& settings = {});

// The plane-intersected world point of the anchor ray.
std::optional<Eigen::Vector3d> plane_anchored_world_point(const SE3& anchor_pose,
                                                          const Pixel& anchor_px,
                                                          const PlaneCoeff& plane,
                                                          const PinholeCamera& cam,
                                                          const OptimizerSettings& settings = {});

// 2-vector pixel residual; nullopt when the factor is degenerate (bad
// intersection or non-positive depth in the target frame). When jacobians are
// requested they are with respect to right-multiplicative tangent updates of
// the anchor and target poses.
std::optional<Eigen::Vector2d> surfel_reproj_residual(
    const SurfelReprojFactor& factor, const SE3& anchor_pose, const SE3& target_pose,
    const PinholeCamera& cam, const OptimizerSettings& settings = {},
    Eigen::Matrix<double, 2, 6>* jac_anchor = nullptr,
    Eigen::Matrix<double, 2, 6>* jac_target = nullptr);

// One factor per (anchor, other observer) pair of every multi-view map point.
std::vector<SurfelReprojFactor> collect_factors(const VisualDatabase& db, const SurfelMap& map);

// Levenberg-Marquardt over all keyframe pose tangents; surfel planes stay
// fixed. Database poses are replaced only on success.
OptimizationReport optimize_poses(VisualDatabase& db, const PinholeCamera& cam,
                                  const SurfelMap& map, const OptimizerSettings& settings = {});

// Re-anchors every map point on its surfel plane through the first observing
// keyframe. Points with a degenerate intersection keep their position.
std::size_t refresh_map_points(VisualDatabase& db, const PinholeCamera& cam, const SurfelMap& map,
                               const OptimizerSettings& settings = {});

}  // namespace srfloc
