#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "srfloc/camera.hpp"
#include "srfloc/descriptor.hpp"
#include "srfloc/surfel_map.hpp"
#include "srfloc/trajectory.hpp"

namespace srfloc {

enum class SceneKind { kRoomBox, kCorridor, kTwoLaneStreet };

struct SceneSpec {
  SceneKind kind = SceneKind::kRoomBox;
  Eigen::Vector3d extents = Eigen::Vector3d(4.0, 4.0, 3.0);  // meters
  double surfel_radius = 0.1;
  double landmark_density = 5.0;  // per square meter
  std::uint64_t seed = 0;

  // When > 0 the whole scene is duplicated at +x offset. Duplicated landmarks
  // reuse the original descriptor with probability duplicate_descriptor_fraction,
  // which creates perceptual aliasing between the two copies.
  double duplicate_offset = 0.0;
  double duplicate_descriptor_fraction = 1.0;
};

// Finite rectangle: origin corner, two orthonormal in-plane axes with extents.
struct ScenePlane {
  Eigen::Vector3d origin;
  Eigen::Vector3d axis_u, axis_v;  // unit
  double len_u = 0.0, len_v = 0.0;
  Eigen::Vector3d normal;  // unit, faces the navigable space

  PlaneCoeff coeff() const { return PlaneCoeff{normal, -normal.dot(origin)}; }
};

struct Landmark {
  std::uint64_t id = 0;
  Eigen::Vector3d position;
  std::size_t plane_index = 0;
  Descriptor256 descriptor;
};

struct Scene {
  SceneSpec spec;
  std::vector<ScenePlane> planes;
  SurfelMap surfels;
  std::vector<std::size_t> surfel_plane;  // surfel id -> plane index
  std::vector<Landmark> landmarks;

  bool contains(const Eigen::Vector3d& p) const;
};

// Deterministic per seed. Walls are tessellated into surfels on a grid of
// pitch 1.5 * radius; landmarks are sampled uniformly on the planes.
Scene generate_scene(const SceneSpec& spec);

enum class TrajectoryKind { kCircle, kLawnmower, kTwoLane };

struct TrajectorySpec {
  TrajectoryKind kind = TrajectoryKind::kCircle;
  int frames = 120;
  double start_time = 0.0;
  double dt = 0.1;
  double height = 1.5;

  // circle
  double radius = 1.2;
  double loops = 1.0;
  double phase = 0.0;
  Eigen::Vector3d center_offset = Eigen::Vector3d::Zero();  // shift from scene center

  // lawnmower
  double margin = 0.6;
  double row_spacing = 0.4;

  // two-lane
  double lane_offset = 2.0;  // y of the lane
};

// Smooth pose sequence with look-at orientation (camera +z forward, +y down).
// Throws if any position leaves the scene volume.
std::vector<StampedPose> generate_trajectory(const Scene& scene, const TrajectorySpec& spec);

// Stable integer id of "where the camera is and roughly where it looks":
// 1 m position cells plus 8 yaw sectors.
std::uint32_t place_label(const SE3& pose);

struct NoiseSpec {
  double pixel_sigma = 0.0;        // px, truncated at 3 sigma
  int descriptor_bit_flips = 0;    // per observation
  double db_pose_sigma = 0.0;      // m, translation noise on database poses
  double outlier_fraction = 0.0;   // observations with a replaced descriptor
};

struct ObservedFrame {
  FrameFeatures features;
  std::vector<std::uint64_t> landmark_ids;  // parallel to keypoints
};

// Projects visible landmarks (frustum, front-facing, unoccluded against all
// scene planes), nearest-first capped at max_observations, then applies the
// noise model. Octave comes from the true depth band (<=2 m: 0, <=4 m: 1,
// else 2).
ObservedFrame observe(const Scene& scene, const SE3& pose, const PinholeCamera& cam,
                      const NoiseSpec& noise, Rng& rng, int max_observations = 1000);

// Gaussian translation noise only; rotations stay exact.
std::vector<StampedPose> perturb_poses(std::span<const StampedPose> poses, double sigma,
                                       std::uint64_t seed);

struct GroundTruthLandmark {
  Eigen::Vector3d position;
  PlaneCoeff plane;
};

struct GroundTruthFrame {
  double timestamp = 0.0;
  SE3 pose;
  std::uint32_t place = 0;
  std::vector<std::uint64_t> landmark_ids;
};

struct GroundTruth {
  std::vector<GroundTruthLandmark> landmarks;
  std::vector<GroundTruthFrame> frames;
};

void save_ground_truth(const std::string& path, const GroundTruth& gt);
GroundTruth load_ground_truth(const std::string& path);

struct FrameObservations {
  double timestamp = 0.0;
  FrameFeatures features;
};

void save_observations(const std::string& path, const std::vector<FrameObservations>& frames);
std::vector<FrameObservations> load_observations(const std::string& path);

}  // namespace srfloc
