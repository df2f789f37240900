#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "srfloc/camera.hpp"
#include "srfloc/database.hpp"
#include "srfloc/rng.hpp"
#include "srfloc/se3.hpp"

namespace srfloc {

// Candidate-point policy for the local matching stage. kFullFn uses the
// covisible set plus the neighboring-surfel expansion, kVisibleOnly drops the
// expansion, kNaive matches the best-retrieved frame directly against its
// associated surfel centers (no covisibility, no fused map points).
enum class RelocMode { kFullFn, kVisibleOnly, kNaive };

enum class RelocStatus { kVerified, kInlierUnverified, kFailed };

const char* to_string(RelocStatus status);
const char* to_string(RelocMode mode);
RelocMode reloc_mode_from_string(const std::string& name);

struct RelocConfig {
  int top_k = 30;
  int n_max = 3;
  int n_co = 5;
  int theta_in = 15;
  double theta_dist = 0.3;  // m, distance gate against the last inlier pose
  double ratio = 0.8;
  double grid_window = 15.0;
  double octave_scale = 1.2;
  int pnp_iterations = 300;
  double tau_pnp = 5.0;        // px, base PnP inlier gate
  double tau_essential = 4.0;  // px-equivalent Sampson gate
  double chi2_gate = 5.991;    // final inlier classification
  RelocMode mode = RelocMode::kFullFn;
  std::uint64_t seed = 0;
};

struct CandidateCluster {
  std::vector<std::uint32_t> members;
  std::uint32_t canonical = 0;
  double canonical_score = 0.0;
};

struct Match2D3D {
  std::uint64_t point_id = 0;    // database map point (or surfel id in naive mode)
  int keypoint_index = -1;       // query keypoint
  int distance = 0;
};

struct CandidateDiag {
  std::uint32_t canonical = 0;
  double canonical_score = 0.0;
  int visible_points = 0;
  int neighbor_points = 0;
  int visible_matches = 0;
  int neighbor_matches = 0;
  bool essential_bypassed = false;
  int essential_kept = 0;
  int pnp_inliers = 0;
  int refine_inliers = 0;
  std::string fail_stage;  // empty when the candidate produced a pose
};

struct RelocalizationResult {
  RelocStatus status = RelocStatus::kFailed;
  SE3 pose;  // valid iff status != kFailed
  int n_in = 0;
  int cluster_count = 0;
  std::vector<std::pair<std::uint32_t, double>> retrieval;
  std::vector<CandidateDiag> candidates;
  std::string failure_reason;
};

// Connected components of the retrieved frames under the shared-map-point
// relation, ordered by canonical score descending and truncated to n_max.
std::vector<CandidateCluster> cluster_candidates(
    const VisualDatabase& db, std::span<const std::pair<std::uint32_t, double>> retrieved,
    int n_max);

struct CandidatePointSets {
  std::vector<std::uint64_t> visible;   // seen in F_c or its top covisible frames
  std::vector<std::uint64_t> neighbor;  // on neighboring surfels, minus visible
};

CandidatePointSets gather_candidate_points(const VisualDatabase& db, std::uint32_t canonical_kf,
                                           int n_co);

struct EssentialCheckOutcome {
  std::vector<Match2D3D> matches;
  bool bypassed = false;  // too few pairs or estimation failure
  int kept = 0;
};

// 2D-2D epipolar gate between the canonical frame and the query. Points not
// visible in F_c are projected into it (out-of-image projections allowed).
EssentialCheckOutcome essential_check(const VisualDatabase& db, std::uint32_t canonical_kf,
                                      const FrameFeatures& query, const PinholeCamera& cam,
                                      std::vector<Match2D3D> matches, const RelocConfig& config,
                                      Rng& rng);

struct RefinePoint {
  Eigen::Vector3d position;
  Descriptor256 descriptor;
};

struct RefineResult {
  SE3 pose;
  int n_in = 0;
  int matches = 0;
};

// Motion-only pose refinement: re-projects the candidate points with the
// rough pose, re-matches in the local grid and minimizes the robust
// scale-weighted reprojection cost over the single query pose. n_in is the
// number of matches passing the chi-square gate at the returned pose.
std::optional<RefineResult> refine_pose(std::span<const RefinePoint> points,
                                        const FrameFeatures& query, const PinholeCamera& cam,
                                        const SE3& rough_pose, const RelocConfig& config);

// Two-stage acceptance: inlier-count gate, then distance to the last inlier
// pose. The first inlier pose with no predecessor bootstraps as verified.
RelocStatus verify_pose(int n_in, const SE3& pose, const std::optional<SE3>& last_inlier_pose,
                        const RelocConfig& config);

// Full hierarchical pipeline. last_inlier_pose is caller-owned session state;
// it is updated whenever the query yields an inlier pose.
RelocalizationResult relocalize(const VisualDatabase& db, const FrameFeatures& query,
                                const PinholeCamera& cam, const RelocConfig& config,
                                std::optional<SE3>& last_inlier_pose);

// Line-delimited result records:
//   <timestamp> <verified|inlier-unverified> <tx> <ty> <tz> <qx> <qy> <qz> <qw> <n_in> <clusters>
//   <timestamp> failed <best_n_in> <clusters>
struct RelocRecord {
  double timestamp = 0.0;
  RelocStatus status = RelocStatus::kFailed;
  SE3 pose;
  int n_in = 0;
  int cluster_count = 0;
};

std::string to_record_line(const RelocRecord& record);
void save_records(const std::string& path, std::span<const RelocRecord> records);
std::vector<RelocRecord> load_records(const std::string& path);

}  // namespace srfloc
