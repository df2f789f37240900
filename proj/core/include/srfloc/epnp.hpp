#pragma once

#include <optional>
#include <span>
#include <vector>

#include "srfloc/camera.hpp"
#include "srfloc/rng.hpp"
#include "srfloc/se3.hpp"

namespace srfloc {

// EPnP with the planar (3 control point) fallback, so samples drawn from a
// single wall remain solvable. Returns the world-from-camera pose, or nullopt
// for degenerate input (fewer than 4 points, collinear or coincident sets).
std::optional<SE3> epnp_solve(std::span<const Eigen::Vector3d> world_points,
                              std::span<const Pixel> pixels, const PinholeCamera& cam);

struct PnPOptions {
  int max_iterations = 300;
  double confidence = 0.99;
  double base_threshold_px = 5.0;  // scaled by octave_scale^octave per match
  double octave_scale = 1.2;
  int min_inliers = 4;
};

struct PnPResult {
  SE3 pose;  // world-from-camera
  std::vector<char> inlier_mask;
  int inlier_count = 0;
  int iterations_run = 0;
};

// RANSAC over minimal 4-point EPnP samples with adaptive early exit, then a
// final EPnP refit on the inlier set.
std::optional<PnPResult> pnp_ransac(std::span<const Eigen::Vector3d> world_points,
                                    std::span<const Pixel> pixels, std::span<const int> octaves,
                                    const PinholeCamera& cam, const PnPOptions& options, Rng& rng);

}  // namespace srfloc
