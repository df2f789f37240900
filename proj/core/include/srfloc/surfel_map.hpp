#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "srfloc/camera.hpp"
#include "srfloc/descriptor.hpp"
#include "srfloc/se3.hpp"

namespace srfloc {

// Oriented disk. Ids are dense from 0 and equal the vector index.
struct Surfel {
  std::uint64_t id = 0;
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  Eigen::Vector3d normal = Eigen::Vector3d::UnitZ();
  double radius = 0.0;
};

struct PlaneCoeff {
  Eigen::Vector3d n = Eigen::Vector3d::UnitZ();
  double d = 0.0;

  double signed_distance(const Eigen::Vector3d& x) const { return n.dot(x) + d; }
};

// Supporting plane of the surfel: n = normal, d = -dot(normal, center).
PlaneCoeff plane_coeff(const Surfel& s);

// Per-pixel nearest visible surfel id plus its center depth.
struct SurfelIndexMap {
  static constexpr std::int64_t kEmpty = -1;

  int width = 0;
  int height = 0;
  std::vector<std::int64_t> ids;
  std::vector<double> depths;

  SurfelIndexMap() = default;
  SurfelIndexMap(int w, int h)
      : width(w), height(h), ids(static_cast<std::size_t>(w) * h, kEmpty),
        depths(static_cast<std::size_t>(w) * h, 0.0) {}

  std::int64_t id_at(int x, int y) const { return ids[static_cast<std::size_t>(y) * width + x]; }
  double depth_at(int x, int y) const { return depths[static_cast<std::size_t>(y) * width + x]; }
};

struct KeypointAssociation {
  std::int64_t surfel_id = -1;              // -1 when the pixel is empty
  std::vector<std::uint64_t> neighbors;     // sorted, excludes surfel_id
};

struct AssociationResult {
  std::vector<KeypointAssociation> associations;  // parallel to keypoints
  int skipped_out_of_bounds = 0;
};

class SurfelMap {
 public:
  static constexpr double kZNear = 0.05;

  SurfelMap() = default;

  // Validates ids (unique, dense from 0 after sorting), renormalizes normals,
  // rejects non-positive radii.
  static SurfelMap from_surfels(std::vector<Surfel> surfels);

  // Sniffs the 'SRFL' magic; anything else is parsed as text lines
  // "x y z nx ny nz r".
  static SurfelMap load(const std::string& path);
  void save(const std::string& path) const;

  std::size_t size() const { return surfels_.size(); }
  const Surfel& surfel(std::uint64_t id) const { return surfels_[id]; }
  const std::vector<Surfel>& surfels() const { return surfels_; }

  // Splats every front-facing surfel with camera depth > z_near as a filled
  // screen-space disk of radius max(1, fx*r/z) pixels; per pixel the smallest
  // depth wins and depth ties go to the smaller id.
  SurfelIndexMap render_index_map(const SE3& camera_pose, const PinholeCamera& cam) const;

 private:
  std::vector<Surfel> surfels_;
};

// Association at the rounded keypoint pixel; the neighbor set collects the
// distinct ids within the keypoint size radius, excluding the association.
// Out-of-bounds keypoints are skipped and counted.
AssociationResult associate_keypoints(const SurfelIndexMap& index_map,
                                      std::span<const Keypoint> keypoints);

}  // namespace srfloc
