#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "srfloc/descriptor.hpp"
#include "srfloc/se3.hpp"
#include "srfloc/surfel_map.hpp"

namespace srfloc {

struct MapPoint {
  std::uint64_t id = 0;
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  std::uint64_t surfel_id = 0;
  Descriptor256 descriptor;  // representative, equals one observation's descriptor
  // (keyframe id, keypoint index), in insertion order. Never empty while alive.
  std::vector<std::pair<std::uint32_t, std::uint32_t>> observations;
  std::uint32_t creation_keyframe = 0;
  std::uint64_t creation_ordinal = 0;
};

struct KeypointLink {
  std::int64_t map_point = -1;
  std::int64_t surfel = -1;
  Eigen::Vector3d surfel_center = Eigen::Vector3d::Zero();  // valid iff surfel >= 0
  std::vector<std::uint64_t> neighbor_surfels;              // sorted, excludes surfel
};

struct Keyframe {
  std::uint32_t id = 0;
  double timestamp = 0.0;
  SE3 pose;  // world-from-camera
  FrameFeatures features;
  std::vector<KeypointLink> links;  // parallel to features.keypoints

  int live_point_count() const;
};

struct FrameReport {
  std::int64_t frame_id = -1;  // -1 when rejected
  double timestamp = 0.0;
  bool rejected = false;
  std::string reason;
  int keypoints = 0;
  int associated = 0;
  int out_of_bounds = 0;
  int covisible_frames = 0;
  int matched = 0;
  int created = 0;
  int culled_keyframes = 0;
  int culled_points = 0;

  std::string to_line() const;
};

struct DatabaseConfig {
  double ratio = 0.8;            // Lowe ratio for 2D-3D matching
  double grid_window = 15.0;     // px, scaled by octave_scale^octave
  double octave_scale = 1.2;
  double duplicate_ratio = 0.9;  // keyframe culling threshold
};

struct ProjectedCandidate {
  Pixel px;
  Descriptor256 descriptor;
};

// Window-restricted ratio matching: candidate i only sees keypoints within a
// Chebyshev window of window_base * octave_scale^octave(kp) around its
// projection. Result maps candidate index -> keypoint index, injective on
// keypoints (smaller distance wins).
std::vector<Match> local_grid_match(std::span<const ProjectedCandidate> candidates,
                                    const FrameFeatures& frame, double window_base,
                                    double octave_scale, double ratio);

// Observation-descriptor with the smallest lower-median Hamming distance to
// the others; ties keep the earliest observation.
std::size_t best_distinctive_index(std::span<const Descriptor256> observation_descriptors);

class VisualDatabase {
 public:
  VisualDatabase() = default;
  explicit VisualDatabase(DatabaseConfig config) : config_(config) {}

  void set_vocabulary(Vocabulary voc) { vocabulary_ = std::move(voc); }
  const Vocabulary& vocabulary() const { return vocabulary_; }
  bool has_vocabulary() const { return vocabulary_.trained(); }

  const DatabaseConfig& config() const { return config_; }
  void set_config_snapshot(std::string snapshot) { config_snapshot_ = std::move(snapshot); }
  const std::string& config_snapshot() const { return config_snapshot_; }

  // Sequential ingestion of one posed frame: surfel association, covisible
  // 2D-3D matching, map point creation and fusion, culling, index update.
  FrameReport process_frame(const FrameFeatures& features, double timestamp, const SE3& pose,
                            const SurfelMap& map, const PinholeCamera& cam);

  // Top-K keyframes by global-descriptor similarity, ties by smaller id.
  std::vector<std::pair<std::uint32_t, double>> query_index(const GlobalDescriptor& query,
                                                            int k) const;

  void save(const std::string& path) const;
  static VisualDatabase load(const std::string& path);

  const std::map<std::uint32_t, Keyframe>& keyframes() const { return keyframes_; }
  const std::map<std::uint64_t, MapPoint>& points() const { return points_; }
  const std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint32_t>& covisibility() const {
    return covisibility_;
  }
  const Keyframe& keyframe(std::uint32_t id) const;
  const MapPoint& point(std::uint64_t id) const;
  bool has_point(std::uint64_t id) const { return points_.count(id) != 0; }

  // Map points currently tied to the given surfel, ascending ids.
  std::vector<std::uint64_t> points_on_surfel(std::uint64_t surfel_id) const;

  // Covisibility weight between two keyframes (0 when no edge).
  std::uint32_t covisibility_weight(std::uint32_t a, std::uint32_t b) const;
  // Neighbors of a keyframe sorted by weight descending, ties by smaller id.
  std::vector<std::pair<std::uint32_t, std::uint32_t>> covisible_neighbors(
      std::uint32_t kf_id) const;

  // Pose/point mutation for the optimizer.
  void set_keyframe_pose(std::uint32_t id, const SE3& pose);
  void set_point_position(std::uint64_t id, const Eigen::Vector3d& position);

  // Throws std::logic_error on any referential-integrity violation.
  void check_integrity() const;
  // Covisibility graph recomputed from the observation lists.
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint32_t> recompute_covisibility() const;

  std::uint64_t processed_frames() const { return ordinal_; }

 private:
  void add_observation(std::uint64_t point_id, std::uint32_t kf_id, std::uint32_t kp_index);
  void refresh_representative(MapPoint& point);
  void remove_point(std::uint64_t point_id, std::vector<std::uint32_t>* emptied_keyframes);
  void remove_keyframe(std::uint32_t kf_id, FrameReport& report);
  void cull(std::uint32_t new_frame_id, FrameReport& report);
  void bump_edge(std::uint32_t a, std::uint32_t b, int delta);

  DatabaseConfig config_;
  Vocabulary vocabulary_;
  std::string config_snapshot_;

  std::map<std::uint32_t, Keyframe> keyframes_;
  std::map<std::uint64_t, MapPoint> points_;
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint32_t> covisibility_;  // key a < b
  std::map<std::uint64_t, std::vector<std::uint64_t>> surfel_points_;

  std::uint32_t next_keyframe_id_ = 0;
  std::uint64_t next_point_id_ = 0;
  std::uint64_t ordinal_ = 0;  // processed (non-rejected) frame counter
};

}  // namespace srfloc
