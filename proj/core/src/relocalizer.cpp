#include "srfloc/relocalizer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "srfloc/epnp.hpp"
#include "srfloc/essential.hpp"

namespace srfloc {

namespace {

Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
  Eigen::Matrix3d m;
  m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return m;
}

std::pair<double, double> huber_sq(double value, double delta_sq) {
  if (value <= delta_sq) return {value, 1.0};
  const double delta = std::sqrt(delta_sq);
  const double root = std::sqrt(value);
  return {2.0 * delta * root - delta_sq, delta / root};
}

}  // namespace

const char* to_string(RelocStatus status) {
  switch (status) {
    case RelocStatus::kVerified: return "verified";
    case RelocStatus::kInlierUnverified: return "inlier-unverified";
    case RelocStatus::kFailed: return "failed";
  }
  return "failed";
}

const char* to_string(RelocMode mode) {
  switch (mode) {
    case RelocMode::kFullFn: return "fn";
    case RelocMode::kVisibleOnly: return "f";
    case RelocMode::kNaive: return "naive";
  }
  return "fn";
}

RelocMode reloc_mode_from_string(const std::string& name) {
  if (name == "fn") return RelocMode::kFullFn;
  if (name == "f") return RelocMode::kVisibleOnly;
  if (name == "naive") return RelocMode::kNaive;
  throw std::invalid_argument("unknown relocalization mode: " + name);
}

std::vector<CandidateCluster> cluster_candidates(
    const VisualDatabase& db, std::span<const std::pair<std::uint32_t, double>> retrieved,
    int n_max) {
  const int n = static_cast<int>(retrieved.size());
  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  const auto find = [&](int x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (db.covisibility_weight(retrieved[i].first, retrieved[j].first) >= 1) {
        parent[find(i)] = find(j);
      }
    }
  }

  std::map<int, CandidateCluster> by_root;
  for (int i = 0; i < n; ++i) {
    auto& cluster = by_root[find(i)];
    cluster.members.push_back(retrieved[i].first);
    // retrieval is score-ordered, so the first member is the canonical one
    if (cluster.members.size() == 1) {
      cluster.canonical = retrieved[i].first;
      cluster.canonical_score = retrieved[i].second;
    }
  }

  std::vector<CandidateCluster> clusters;
  clusters.reserve(by_root.size());
  for (auto& [root, cluster] : by_root) clusters.push_back(std::move(cluster));
  std::sort(clusters.begin(), clusters.end(), [](const auto& a, const auto& b) {
    return a.canonical_score != b.canonical_score ? a.canonical_score > b.canonical_score
                                                  : a.canonical < b.canonical;
  });
  if (static_cast<int>(clusters.size()) > n_max) clusters.resize(n_max);
  return clusters;
}

CandidatePointSets gather_candidate_points(const VisualDatabase& db, std::uint32_t canonical_kf,
                                           int n_co) {
  CandidatePointSets sets;
  std::vector<std::uint32_t> frames{canonical_kf};
  const auto neighbors = db.covisible_neighbors(canonical_kf);
  for (int i = 0; i < std::min<int>(n_co, static_cast<int>(neighbors.size())); ++i) {
    frames.push_back(neighbors[i].first);
  }

  std::set<std::uint64_t> visible;
  for (const auto kf_id : frames) {
    for (const auto& link : db.keyframe(kf_id).links) {
      if (link.map_point >= 0) visible.insert(static_cast<std::uint64_t>(link.map_point));
    }
  }
  sets.visible.assign(visible.begin(), visible.end());

  std::set<std::uint64_t> neighbor_surfels;
  for (const auto& link : db.keyframe(canonical_kf).links) {
    neighbor_surfels.insert(link.neighbor_surfels.begin(), link.neighbor_surfels.end());
  }
  std::set<std::uint64_t> neighbor_points;
  for (const auto sid : neighbor_surfels) {
    for (const auto pid : db.points_on_surfel(sid)) {
      if (!visible.count(pid)) neighbor_points.insert(pid);
    }
  }
  sets.neighbor.assign(neighbor_points.begin(), neighbor_points.end());
  return sets;
}

EssentialCheckOutcome essential_check(const VisualDatabase& db, std::uint32_t canonical_kf,
                                      const FrameFeatures& query, const PinholeCamera& cam,
                                      std::vector<Match2D3D> matches, const RelocConfig& config,
                                      Rng& rng) {
  EssentialCheckOutcome outcome;
  if (matches.size() < 8) {
    outcome.bypassed = true;
    outcome.kept = static_cast<int>(matches.size());
    outcome.matches = std::move(matches);
    return outcome;
  }

  const auto& canonical = db.keyframe(canonical_kf);
  std::map<std::uint64_t, int> point_to_keypoint;
  for (std::size_t i = 0; i < canonical.links.size(); ++i) {
    if (canonical.links[i].map_point >= 0) {
      point_to_keypoint[static_cast<std::uint64_t>(canonical.links[i].map_point)] =
          static_cast<int>(i);
    }
  }

  std::vector<Eigen::Vector3d> x_canonical, x_query;
  std::vector<int> pair_of_match(matches.size(), -1);
  const SE3 canonical_from_world = canonical.pose.inverse();
  for (std::size_t mi = 0; mi < matches.size(); ++mi) {
    const auto& m = matches[mi];
    Pixel px_canonical;
    if (const auto it = point_to_keypoint.find(m.point_id); it != point_to_keypoint.end()) {
      px_canonical = canonical.features.keypoints[it->second].position;
    } else {
      // Not visible there: synthesize the pixel, possibly outside the image.
      const Eigen::Vector3d xc = canonical_from_world.transform(db.point(m.point_id).position);
      if (xc.z() <= 1e-9) continue;  // behind the canonical camera, not checkable
      px_canonical.u = cam.fx * xc.x() / xc.z() + cam.cx;
      px_canonical.v = cam.fy * xc.y() / xc.z() + cam.cy;
    }
    pair_of_match[mi] = static_cast<int>(x_canonical.size());
    x_canonical.push_back(lift_unit_plane(cam, px_canonical));
    x_query.push_back(lift_unit_plane(cam, query.keypoints[m.keypoint_index].position));
  }

  if (x_canonical.size() < 8) {
    outcome.bypassed = true;
    outcome.kept = static_cast<int>(matches.size());
    outcome.matches = std::move(matches);
    return outcome;
  }

  EssentialOptions options;
  options.sampson_threshold = config.tau_essential / cam.fx;
  const EssentialResult model = essential_ransac(x_canonical, x_query, options, rng);
  // A near-zero baseline (or other degeneracy) produces an arbitrary model
  // that would reject good matches; treat low support as estimation failure.
  if (!model.ok || model.inlier_count < static_cast<int>(x_canonical.size() + 1) / 2) {
    outcome.bypassed = true;
    outcome.kept = static_cast<int>(matches.size());
    outcome.matches = std::move(matches);
    return outcome;
  }

  for (std::size_t mi = 0; mi < matches.size(); ++mi) {
    if (pair_of_match[mi] < 0 || model.inlier_mask[pair_of_match[mi]]) {
      outcome.matches.push_back(matches[mi]);
    }
  }
  outcome.kept = static_cast<int>(outcome.matches.size());
  return outcome;
}

std::optional<RefineResult> refine_pose(std::span<const RefinePoint> points,
                                        const FrameFeatures& query, const PinholeCamera& cam,
                                        const SE3& rough_pose, const RelocConfig& config) {
  // Re-match against the rough pose in the local grid.
  std::vector<ProjectedCandidate> candidates;
  std::vector<int> candidate_point;
  const SE3 camera_from_world = rough_pose.inverse();
  for (int i = 0; i < static_cast<int>(points.size()); ++i) {
    const auto px = project(cam, camera_from_world.transform(points[i].position));
    if (!px || !cam.in_bounds(*px)) continue;
    candidates.push_back(ProjectedCandidate{*px, points[i].descriptor});
    candidate_point.push_back(i);
  }
  const auto matches = local_grid_match(candidates, query, config.grid_window,
                                        config.octave_scale, config.ratio);

  struct Constraint {
    Eigen::Vector3d world;
    Eigen::Vector2d pixel;
    double info;  // inverse covariance scale from the keypoint octave
  };
  std::vector<Constraint> constraints;
  constraints.reserve(matches.size());
  for (const auto& m : matches) {
    const auto& kp = query.keypoints[m.train_index];
    const double sigma = std::pow(config.octave_scale, kp.octave);
    constraints.push_back(Constraint{points[candidate_point[m.query_index]].position,
                                     Eigen::Vector2d(kp.position.u, kp.position.v),
                                     1.0 / (sigma * sigma)});
  }

  SE3 pose = rough_pose;
  const auto evaluate = [&](const SE3& p, int* inliers) {
    double cost = 0.0;
    int count = 0;
    const SE3 cfw = p.inverse();
    for (const auto& c : constraints) {
      const Eigen::Vector3d xc = cfw.transform(c.world);
      if (xc.z() <= 1e-9) {
        cost += huber_sq(config.chi2_gate * 4.0, config.chi2_gate).first;  // saturated outlier
        continue;
      }
      const Eigen::Vector2d projected(cam.fx * xc.x() / xc.z() + cam.cx,
                                      cam.fy * xc.y() / xc.z() + cam.cy);
      const double chi2 = c.info * (c.pixel - projected).squaredNorm();
      cost += huber_sq(chi2, config.chi2_gate).first;
      if (chi2 <= config.chi2_gate) ++count;
    }
    if (inliers) *inliers = count;
    return cost;
  };

  if (!constraints.empty()) {
    double lambda = 1e-4;
    double cost = evaluate(pose, nullptr);
    if (!std::isfinite(cost)) return std::nullopt;
    for (int iter = 0; iter < 50; ++iter) {
      if (cost <= 1e-14) break;
      Eigen::Matrix<double, 6, 6> hessian = Eigen::Matrix<double, 6, 6>::Zero();
      Eigen::Matrix<double, 6, 1> gradient = Eigen::Matrix<double, 6, 1>::Zero();
      const SE3 cfw = pose.inverse();
      for (const auto& c : constraints) {
        const Eigen::Vector3d xc = cfw.transform(c.world);
        if (xc.z() <= 1e-9) continue;
        const Eigen::Vector2d projected(cam.fx * xc.x() / xc.z() + cam.cx,
                                        cam.fy * xc.y() / xc.z() + cam.cy);
        const Eigen::Vector2d residual = c.pixel - projected;
        const double chi2 = c.info * residual.squaredNorm();
        const double w = c.info * huber_sq(chi2, config.chi2_gate).second;
        const Eigen::Matrix<double, 2, 3> j_proj = projection_jacobian(cam, xc);
        Eigen::Matrix<double, 2, 6> jac;
        jac.block<2, 3>(0, 0) = j_proj;                // d e / d translation tangent
        jac.block<2, 3>(0, 3) = -j_proj * skew(xc);    // d e / d rotation tangent
        hessian += w * jac.transpose() * jac;
        gradient -= w * jac.transpose() * residual;
      }

      bool accepted = false;
      for (int attempt = 0; attempt < 10 && !accepted; ++attempt) {
        Eigen::Matrix<double, 6, 6> damped = hessian;
        for (int d = 0; d < 6; ++d) damped(d, d) += lambda * std::max(hessian(d, d), 1e-12);
        const Eigen::Matrix<double, 6, 1> delta = damped.ldlt().solve(gradient);
        if (!delta.allFinite()) {
          lambda *= 10.0;
          continue;
        }
        const SE3 trial = se3_boxplus(pose, delta);
        const double trial_cost = evaluate(trial, nullptr);
        if (!std::isfinite(trial_cost)) return std::nullopt;
        if (trial_cost < cost) {
          const double relative = (cost - trial_cost) / std::max(cost, 1e-300);
          pose = trial;
          cost = trial_cost;
          lambda *= 0.5;
          accepted = true;
          if (relative < 1e-8) iter = 50;
        } else {
          lambda *= 10.0;
        }
      }
      if (!accepted) break;
    }
  }

  RefineResult result;
  result.pose = pose;
  result.matches = static_cast<int>(constraints.size());
  evaluate(pose, &result.n_in);
  return result;
}

RelocStatus verify_pose(int n_in, const SE3& pose, const std::optional<SE3>& last_inlier_pose,
                        const RelocConfig& config) {
  if (n_in < config.theta_in) return RelocStatus::kFailed;
  if (!last_inlier_pose) return RelocStatus::kVerified;  // bootstrap
  const double d = translation_distance(pose, *last_inlier_pose);
  return d <= config.theta_dist ? RelocStatus::kVerified : RelocStatus::kInlierUnverified;
}

namespace {

struct CandidateOutcome {
  SE3 pose;
  int n_in = 0;
  double score = 0.0;
  std::uint32_t canonical = 0;
};

// Matches the query against one candidate point set by the ratio test;
// query keypoints already claimed are excluded.
std::vector<Match2D3D> match_against_points(const FrameFeatures& query,
                                            const std::vector<std::uint64_t>& point_ids,
                                            const VisualDatabase& db,
                                            const std::vector<char>& keypoint_taken,
                                            double ratio) {
  std::vector<Descriptor256> query_descs;
  std::vector<int> query_indices;
  for (int i = 0; i < static_cast<int>(query.descriptors.size()); ++i) {
    if (!keypoint_taken[i]) {
      query_descs.push_back(query.descriptors[i]);
      query_indices.push_back(i);
    }
  }
  std::vector<Descriptor256> point_descs;
  point_descs.reserve(point_ids.size());
  for (const auto pid : point_ids) point_descs.push_back(db.point(pid).descriptor);

  std::vector<Match2D3D> out;
  for (const auto& m : match_ratio(query_descs, point_descs, ratio)) {
    out.push_back(Match2D3D{point_ids[m.train_index], query_indices[m.query_index], m.distance});
  }
  return out;
}

}  // namespace

RelocalizationResult relocalize(const VisualDatabase& db, const FrameFeatures& query,
                                const PinholeCamera& cam, const RelocConfig& config,
                                std::optional<SE3>& last_inlier_pose) {
  if (!db.has_vocabulary()) throw std::runtime_error("relocalize: database has no vocabulary");
  RelocalizationResult result;
  if (query.descriptors.empty()) {
    result.failure_reason = "empty_query";
    return result;
  }

  const GlobalDescriptor global = db.vocabulary().describe(query.descriptors);
  result.retrieval = db.query_index(global, config.top_k);

  std::vector<CandidateCluster> clusters;
  if (config.mode == RelocMode::kNaive) {
    CandidateCluster top;
    top.members.push_back(result.retrieval.front().first);
    top.canonical = result.retrieval.front().first;
    top.canonical_score = result.retrieval.front().second;
    clusters.push_back(std::move(top));
  } else {
    clusters = cluster_candidates(db, result.retrieval, config.n_max);
  }
  result.cluster_count = static_cast<int>(clusters.size());

  std::optional<CandidateOutcome> best;
  for (const auto& cluster : clusters) {
    CandidateDiag diag;
    diag.canonical = cluster.canonical;
    diag.canonical_score = cluster.canonical_score;
    Rng rng(mix_seed(config.seed, cluster.canonical));

    // Candidate 3D points and tentative 2D-3D matches.
    std::vector<RefinePoint> refine_points;
    std::vector<Match2D3D> matches;
    std::vector<char> keypoint_taken(query.keypoints.size(), 0);

    if (config.mode == RelocMode::kNaive) {
      const auto& kf = db.keyframe(cluster.canonical);
      std::vector<Descriptor256> cand_descs;
      std::vector<Eigen::Vector3d> cand_points;
      for (std::size_t i = 0; i < kf.links.size(); ++i) {
        if (kf.links[i].surfel < 0) continue;
        cand_descs.push_back(kf.features.descriptors[i]);
        cand_points.push_back(kf.links[i].surfel_center);
      }
      diag.visible_points = static_cast<int>(cand_points.size());
      for (const auto& m : match_ratio(query.descriptors, cand_descs, config.ratio)) {
        matches.push_back(Match2D3D{static_cast<std::uint64_t>(m.train_index), m.query_index,
                                    m.distance});
      }
      diag.visible_matches = static_cast<int>(matches.size());
      refine_points.reserve(cand_points.size());
      for (std::size_t i = 0; i < cand_points.size(); ++i) {
        refine_points.push_back(RefinePoint{cand_points[i], cand_descs[i]});
      }
    } else {
      const CandidatePointSets sets =
          gather_candidate_points(db, cluster.canonical, config.n_co);
      diag.visible_points = static_cast<int>(sets.visible.size());
      diag.neighbor_points = static_cast<int>(sets.neighbor.size());

      matches = match_against_points(query, sets.visible, db, keypoint_taken, config.ratio);
      diag.visible_matches = static_cast<int>(matches.size());
      for (const auto& m : matches) keypoint_taken[m.keypoint_index] = 1;

      if (config.mode == RelocMode::kFullFn && !sets.neighbor.empty()) {
        const auto extra =
            match_against_points(query, sets.neighbor, db, keypoint_taken, config.ratio);
        diag.neighbor_matches = static_cast<int>(extra.size());
        matches.insert(matches.end(), extra.begin(), extra.end());
      }

      for (const auto pid : sets.visible) {
        refine_points.push_back(RefinePoint{db.point(pid).position, db.point(pid).descriptor});
      }
      if (config.mode == RelocMode::kFullFn) {
        for (const auto pid : sets.neighbor) {
          refine_points.push_back(RefinePoint{db.point(pid).position, db.point(pid).descriptor});
        }
      }
    }

    if (config.mode != RelocMode::kNaive) {
      auto checked = essential_check(db, cluster.canonical, query, cam, std::move(matches),
                                     config, rng);
      diag.essential_bypassed = checked.bypassed;
      diag.essential_kept = checked.kept;
      matches = std::move(checked.matches);
    } else {
      diag.essential_bypassed = true;
      diag.essential_kept = static_cast<int>(matches.size());
    }

    if (matches.size() < 4) {
      diag.fail_stage = "matches";
      result.candidates.push_back(std::move(diag));
      continue;
    }

    std::vector<Eigen::Vector3d> world;
    std::vector<Pixel> pixels;
    std::vector<int> octaves;
    for (const auto& m : matches) {
      if (config.mode == RelocMode::kNaive) {
        world.push_back(refine_points[m.point_id].position);
      } else {
        world.push_back(db.point(m.point_id).position);
      }
      pixels.push_back(query.keypoints[m.keypoint_index].position);
      octaves.push_back(query.keypoints[m.keypoint_index].octave);
    }

    PnPOptions pnp_options;
    pnp_options.max_iterations = config.pnp_iterations;
    pnp_options.base_threshold_px = config.tau_pnp;
    pnp_options.octave_scale = config.octave_scale;
    const auto pnp = pnp_ransac(world, pixels, octaves, cam, pnp_options, rng);
    if (!pnp) {
      diag.fail_stage = "pnp";
      result.candidates.push_back(std::move(diag));
      continue;
    }
    diag.pnp_inliers = pnp->inlier_count;

    const auto refined = refine_pose(refine_points, query, cam, pnp->pose, config);
    if (!refined) {
      diag.fail_stage = "refine";
      result.candidates.push_back(std::move(diag));
      continue;
    }
    diag.refine_inliers = refined->n_in;
    result.candidates.push_back(std::move(diag));

    if (!best || refined->n_in > best->n_in ||
        (refined->n_in == best->n_in && cluster.canonical_score > best->score)) {
      best = CandidateOutcome{refined->pose, refined->n_in, cluster.canonical_score,
                              cluster.canonical};
    }
  }

  if (!best) {
    result.failure_reason = "all_candidates_failed";
    return result;
  }

  result.n_in = best->n_in;
  result.status = verify_pose(best->n_in, best->pose, last_inlier_pose, config);
  if (result.status == RelocStatus::kFailed) {
    result.failure_reason = "below_inlier_threshold";
    result.n_in = best->n_in;
    return result;
  }
  result.pose = best->pose;
  last_inlier_pose = best->pose;
  return result;
}

// ---------------------------------------------------------------------------
// Record I/O

std::string to_record_line(const RelocRecord& record) {
  char buf[320];
  if (record.status == RelocStatus::kFailed) {
    std::snprintf(buf, sizeof(buf), "%.6f failed %d %d", record.timestamp, record.n_in,
                  record.cluster_count);
  } else {
    std::snprintf(buf, sizeof(buf), "%.6f %s %.9f %.9f %.9f %.9f %.9f %.9f %.9f %d %d",
                  record.timestamp, to_string(record.status), record.pose.t.x(),
                  record.pose.t.y(), record.pose.t.z(), record.pose.q.x(), record.pose.q.y(),
                  record.pose.q.z(), record.pose.q.w(), record.n_in, record.cluster_count);
  }
  return buf;
}

void save_records(const std::string& path, std::span<const RelocRecord> records) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write records: " + path);
  os << "# timestamp status [tx ty tz qx qy qz qw] n_in clusters\n";
  for (const auto& r : records) os << to_record_line(r) << "\n";
}

std::vector<RelocRecord> load_records(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open records: " + path);
  std::vector<RelocRecord> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ss(line);
    RelocRecord rec;
    std::string status;
    if (!(ss >> rec.timestamp >> status)) continue;
    if (status == "failed") {
      rec.status = RelocStatus::kFailed;
      if (!(ss >> rec.n_in >> rec.cluster_count)) {
        throw std::runtime_error(path + ": malformed record at line " + std::to_string(lineno));
      }
    } else {
      rec.status = status == "verified" ? RelocStatus::kVerified
                 : status == "inlier-unverified"
                     ? RelocStatus::kInlierUnverified
                     : throw std::runtime_error(path + ": unknown status at line " +
                                                std::to_string(lineno));
      double qx, qy, qz, qw;
      if (!(ss >> rec.pose.t.x() >> rec.pose.t.y() >> rec.pose.t.z() >> qx >> qy >> qz >> qw >>
            rec.n_in >> rec.cluster_count)) {
        throw std::runtime_error(path + ": malformed record at line " + std::to_string(lineno));
      }
      rec.pose.q = Eigen::Quaterniond(qw, qx, qy, qz);
      rec.pose.normalize();
    }
    out.push_back(rec);
  }
  return out;
}

}  // namespace srfloc
