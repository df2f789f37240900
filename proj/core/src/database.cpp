#include "srfloc/database.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "srfloc/binary_io.hpp"

namespace srfloc {

int Keyframe::live_point_count() const {
  int n = 0;
  for (const auto& link : links) {
    if (link.map_point >= 0) ++n;
  }
  return n;
}

std::string FrameReport::to_line() const {
  char buf[256];
  if (rejected) {
    std::snprintf(buf, sizeof(buf), "frame=rejected ts=%.6f kps=%d assoc=%d reason=%s", timestamp,
                  keypoints, associated, reason.c_str());
    return buf;
  }
  std::snprintf(buf, sizeof(buf),
                "frame=%lld ts=%.6f kps=%d assoc=%d skipped=%d covis=%d matched=%d new=%d "
                "culled_kf=%d culled_pt=%d",
                static_cast<long long>(frame_id), timestamp, keypoints, associated, out_of_bounds,
                covisible_frames, matched, created, culled_keyframes, culled_points);
  return buf;
}

// ---------------------------------------------------------------------------
// Matching helpers

std::vector<Match> local_grid_match(std::span<const ProjectedCandidate> candidates,
                                    const FrameFeatures& frame, double window_base,
                                    double octave_scale, double ratio) {
  constexpr int kNoSecond = 257;
  constexpr double kCell = 32.0;

  int max_octave = 0;
  for (const auto& kp : frame.keypoints) max_octave = std::max(max_octave, kp.octave);
  const double window_max = window_base * std::pow(octave_scale, max_octave);

  // Coarse spatial buckets over the keypoints.
  std::map<std::pair<int, int>, std::vector<int>> grid;
  for (int i = 0; i < static_cast<int>(frame.keypoints.size()); ++i) {
    const auto& p = frame.keypoints[i].position;
    grid[{static_cast<int>(std::floor(p.u / kCell)), static_cast<int>(std::floor(p.v / kCell))}]
        .push_back(i);
  }

  std::vector<Match> accepted;
  for (int ci = 0; ci < static_cast<int>(candidates.size()); ++ci) {
    const auto& cand = candidates[ci];
    int best = -1, d1 = kNoSecond, d2 = kNoSecond;
    const int cu0 = static_cast<int>(std::floor((cand.px.u - window_max) / kCell));
    const int cu1 = static_cast<int>(std::floor((cand.px.u + window_max) / kCell));
    const int cv0 = static_cast<int>(std::floor((cand.px.v - window_max) / kCell));
    const int cv1 = static_cast<int>(std::floor((cand.px.v + window_max) / kCell));
    for (int cv = cv0; cv <= cv1; ++cv) {
      for (int cu = cu0; cu <= cu1; ++cu) {
        const auto it = grid.find({cu, cv});
        if (it == grid.end()) continue;
        for (int ki : it->second) {
          const auto& kp = frame.keypoints[ki];
          const double w = window_base * std::pow(octave_scale, kp.octave);
          if (std::abs(kp.position.u - cand.px.u) > w ||
              std::abs(kp.position.v - cand.px.v) > w) {
            continue;
          }
          const int d = hamming_distance(cand.descriptor, frame.descriptors[ki]);
          if (d < d1) {
            d2 = d1;
            d1 = d;
            best = ki;
          } else if (d < d2) {
            d2 = d;
          }
        }
      }
    }
    if (best >= 0 && static_cast<double>(d1) < ratio * static_cast<double>(d2)) {
      accepted.push_back(Match{ci, best, d1});
    }
  }

  // Injective on keypoints: smaller distance wins, earlier candidate on ties.
  std::map<int, Match> per_keypoint;
  for (const auto& m : accepted) {
    auto it = per_keypoint.find(m.train_index);
    if (it == per_keypoint.end() || m.distance < it->second.distance) {
      per_keypoint.insert_or_assign(m.train_index, m);
    }
  }
  std::vector<Match> out;
  out.reserve(per_keypoint.size());
  for (const auto& [ki, m] : per_keypoint) out.push_back(m);
  std::sort(out.begin(), out.end(),
            [](const Match& a, const Match& b) { return a.query_index < b.query_index; });
  return out;
}

std::size_t best_distinctive_index(std::span<const Descriptor256> observation_descriptors) {
  const std::size_t n = observation_descriptors.size();
  if (n == 0) throw std::invalid_argument("best_distinctive_index: empty input");
  if (n == 1) return 0;
  std::size_t best = 0;
  int best_median = std::numeric_limits<int>::max();
  std::vector<int> dists;
  dists.reserve(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    dists.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      dists.push_back(hamming_distance(observation_descriptors[i], observation_descriptors[j]));
    }
    std::sort(dists.begin(), dists.end());
    const int median = dists[(dists.size() - 1) / 2];  // lower median
    if (median < best_median) {
      best_median = median;
      best = i;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// VisualDatabase internals

const Keyframe& VisualDatabase::keyframe(std::uint32_t id) const {
  const auto it = keyframes_.find(id);
  if (it == keyframes_.end()) throw std::out_of_range("keyframe id not found");
  return it->second;
}

const MapPoint& VisualDatabase::point(std::uint64_t id) const {
  const auto it = points_.find(id);
  if (it == points_.end()) throw std::out_of_range("map point id not found");
  return it->second;
}

std::vector<std::uint64_t> VisualDatabase::points_on_surfel(std::uint64_t surfel_id) const {
  const auto it = surfel_points_.find(surfel_id);
  return it == surfel_points_.end() ? std::vector<std::uint64_t>{} : it->second;
}

std::uint32_t VisualDatabase::covisibility_weight(std::uint32_t a, std::uint32_t b) const {
  if (a == b) return 0;
  const auto it = covisibility_.find({std::min(a, b), std::max(a, b)});
  return it == covisibility_.end() ? 0 : it->second;
}

std::vector<std::pair<std::uint32_t, std::uint32_t>> VisualDatabase::covisible_neighbors(
    std::uint32_t kf_id) const {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> out;  // (neighbor, weight)
  for (const auto& [key, w] : covisibility_) {
    if (key.first == kf_id) out.emplace_back(key.second, w);
    else if (key.second == kf_id) out.emplace_back(key.first, w);
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  return out;
}

void VisualDatabase::bump_edge(std::uint32_t a, std::uint32_t b, int delta) {
  if (a == b) throw std::logic_error("covisibility: self edge");
  const auto key = std::make_pair(std::min(a, b), std::max(a, b));
  auto it = covisibility_.find(key);
  const int current = it == covisibility_.end() ? 0 : static_cast<int>(it->second);
  const int next = current + delta;
  if (next < 0) throw std::logic_error("covisibility: negative weight");
  if (next == 0) {
    if (it != covisibility_.end()) covisibility_.erase(it);
  } else {
    covisibility_[key] = static_cast<std::uint32_t>(next);
  }
}

void VisualDatabase::add_observation(std::uint64_t point_id, std::uint32_t kf_id,
                                     std::uint32_t kp_index) {
  auto& pt = points_.at(point_id);
  for (const auto& [okf, oidx] : pt.observations) {
    if (okf == kf_id) throw std::logic_error("add_observation: keyframe already observes point");
    bump_edge(kf_id, okf, +1);
  }
  pt.observations.emplace_back(kf_id, kp_index);
  keyframes_.at(kf_id).links[kp_index].map_point = static_cast<std::int64_t>(point_id);
}

void VisualDatabase::refresh_representative(MapPoint& point) {
  std::vector<Descriptor256> descs;
  descs.reserve(point.observations.size());
  for (const auto& [kf, idx] : point.observations) {
    descs.push_back(keyframes_.at(kf).features.descriptors[idx]);
  }
  point.descriptor = descs[best_distinctive_index(descs)];
}

void VisualDatabase::remove_point(std::uint64_t point_id,
                                  std::vector<std::uint32_t>* emptied_keyframes) {
  auto it = points_.find(point_id);
  if (it == points_.end()) return;
  auto& pt = it->second;

  // Drop pairwise covisibility contributed by this point.
  for (std::size_t i = 0; i < pt.observations.size(); ++i) {
    for (std::size_t j = i + 1; j < pt.observations.size(); ++j) {
      bump_edge(pt.observations[i].first, pt.observations[j].first, -1);
    }
  }
  for (const auto& [kf, idx] : pt.observations) {
    auto& link = keyframes_.at(kf).links[idx];
    link.map_point = -1;
    if (emptied_keyframes && keyframes_.at(kf).live_point_count() == 0) {
      emptied_keyframes->push_back(kf);
    }
  }

  auto& on_surfel = surfel_points_.at(pt.surfel_id);
  on_surfel.erase(std::lower_bound(on_surfel.begin(), on_surfel.end(), point_id));
  if (on_surfel.empty()) surfel_points_.erase(pt.surfel_id);
  points_.erase(it);
}

void VisualDatabase::remove_keyframe(std::uint32_t kf_id, FrameReport& report) {
  std::vector<std::uint32_t> worklist{kf_id};
  while (!worklist.empty()) {
    std::sort(worklist.begin(), worklist.end());
    const std::uint32_t victim = worklist.front();
    worklist.erase(worklist.begin());
    auto kf_it = keyframes_.find(victim);
    if (kf_it == keyframes_.end()) continue;

    std::vector<std::uint64_t> touched;
    for (auto& link : kf_it->second.links) {
      if (link.map_point < 0) continue;
      touched.push_back(static_cast<std::uint64_t>(link.map_point));
      link.map_point = -1;
    }
    for (const auto pid : touched) {
      auto& pt = points_.at(pid);
      const auto obs_it =
          std::find_if(pt.observations.begin(), pt.observations.end(),
                       [&](const auto& obs) { return obs.first == victim; });
      if (obs_it == pt.observations.end()) throw std::logic_error("remove_keyframe: obs missing");
      for (const auto& [okf, oidx] : pt.observations) {
        if (okf != victim) bump_edge(victim, okf, -1);
      }
      pt.observations.erase(obs_it);
      if (pt.observations.empty()) {
        remove_point(pid, &worklist);
        ++report.culled_points;
      } else {
        refresh_representative(pt);
      }
    }
    keyframes_.erase(kf_it);
    ++report.culled_keyframes;
  }
}

void VisualDatabase::cull(std::uint32_t new_frame_id, FrameReport& report) {
  // Duplicate-frame rule over the new frame and its covisible neighborhood,
  // ascending ids so older frames are examined first.
  std::set<std::uint32_t> candidates;
  candidates.insert(new_frame_id);
  for (const auto& [nbr, w] : covisible_neighbors(new_frame_id)) {
    (void)w;
    candidates.insert(nbr);
  }
  for (const auto cand : candidates) {
    const auto it = keyframes_.find(cand);
    if (it == keyframes_.end()) continue;  // removed by an earlier cascade
    int linked = 0, redundant = 0;
    for (const auto& link : it->second.links) {
      if (link.map_point < 0) continue;
      ++linked;
      const auto& pt = points_.at(static_cast<std::uint64_t>(link.map_point));
      int others = 0;
      for (const auto& [okf, oidx] : pt.observations) {
        if (okf != cand) ++others;
      }
      if (others >= 3) ++redundant;
    }
    if (linked > 0 && redundant >= config_.duplicate_ratio * linked) {
      remove_keyframe(cand, report);
    }
  }

  // New map points must be re-observed within two processed frames.
  if (ordinal_ >= 2) {
    const std::uint64_t expired = ordinal_ - 2;
    std::vector<std::uint64_t> stale;
    for (const auto& [pid, pt] : points_) {
      if (pt.creation_ordinal == expired && pt.observations.size() == 1 &&
          pt.observations.front().first == pt.creation_keyframe) {
        stale.push_back(pid);
      }
    }
    std::vector<std::uint32_t> emptied;
    for (const auto pid : stale) {
      remove_point(pid, &emptied);
      ++report.culled_points;
    }
    std::sort(emptied.begin(), emptied.end());
    emptied.erase(std::unique(emptied.begin(), emptied.end()), emptied.end());
    for (const auto kf : emptied) {
      if (keyframes_.count(kf)) remove_keyframe(kf, report);
    }
  }
}

FrameReport VisualDatabase::process_frame(const FrameFeatures& features, double timestamp,
                                          const SE3& pose, const SurfelMap& map,
                                          const PinholeCamera& cam) {
  if (!has_vocabulary()) throw std::runtime_error("process_frame: vocabulary not set");
  if (features.keypoints.size() != features.descriptors.size()) {
    throw std::invalid_argument("process_frame: keypoint/descriptor length mismatch");
  }

  FrameReport report;
  report.timestamp = timestamp;
  report.keypoints = static_cast<int>(features.keypoints.size());

  const SurfelIndexMap index_map = map.render_index_map(pose, cam);
  const AssociationResult assoc = associate_keypoints(index_map, features.keypoints);
  report.out_of_bounds = assoc.skipped_out_of_bounds;
  for (const auto& a : assoc.associations) {
    if (a.surfel_id >= 0) ++report.associated;
  }
  if (report.associated == 0) {
    report.rejected = true;
    report.reason = "no_surfel_association";
    return report;
  }

  // Covisible frames: keyframes holding map points on any associated surfel.
  std::set<std::uint64_t> frame_surfels;
  for (const auto& a : assoc.associations) {
    if (a.surfel_id >= 0) frame_surfels.insert(static_cast<std::uint64_t>(a.surfel_id));
  }
  std::set<std::uint32_t> covisible;
  std::set<std::uint64_t> covisible_points;
  for (const auto sid : frame_surfels) {
    for (const auto pid : points_on_surfel(sid)) {
      for (const auto& [kf, idx] : points_.at(pid).observations) covisible.insert(kf);
    }
  }
  for (const auto kf : covisible) {
    for (const auto& link : keyframes_.at(kf).links) {
      if (link.map_point >= 0) covisible_points.insert(static_cast<std::uint64_t>(link.map_point));
    }
  }
  report.covisible_frames = static_cast<int>(covisible.size());

  // Project covisible points into this frame and match in the local grid.
  std::vector<ProjectedCandidate> candidates;
  std::vector<std::uint64_t> candidate_ids;
  for (const auto pid : covisible_points) {
    const auto& pt = points_.at(pid);
    const Eigen::Vector3d xc = pose.inverse_transform(pt.position);
    const auto px = project(cam, xc);
    if (!px || !cam.in_bounds(*px)) continue;
    candidates.push_back(ProjectedCandidate{*px, pt.descriptor});
    candidate_ids.push_back(pid);
  }
  const std::vector<Match> matches = local_grid_match(candidates, features, config_.grid_window,
                                                      config_.octave_scale, config_.ratio);

  // Insert the keyframe, then wire observations and new points.
  Keyframe kf;
  kf.id = next_keyframe_id_++;
  kf.timestamp = timestamp;
  kf.pose = pose;
  kf.features = features;
  kf.features.global = vocabulary_.describe(features.descriptors);
  kf.links.resize(features.keypoints.size());
  for (std::size_t i = 0; i < assoc.associations.size(); ++i) {
    const auto& a = assoc.associations[i];
    if (a.surfel_id < 0) continue;
    kf.links[i].surfel = a.surfel_id;
    kf.links[i].surfel_center = map.surfel(static_cast<std::uint64_t>(a.surfel_id)).center;
    kf.links[i].neighbor_surfels = a.neighbors;
  }
  const std::uint32_t kf_id = kf.id;
  keyframes_.emplace(kf_id, std::move(kf));

  std::vector<char> keypoint_matched(features.keypoints.size(), 0);
  for (const auto& m : matches) {
    add_observation(candidate_ids[m.query_index], kf_id, static_cast<std::uint32_t>(m.train_index));
    refresh_representative(points_.at(candidate_ids[m.query_index]));
    keypoint_matched[m.train_index] = 1;
  }
  report.matched = static_cast<int>(matches.size());

  for (std::size_t i = 0; i < features.keypoints.size(); ++i) {
    if (keypoint_matched[i]) continue;
    const auto& a = assoc.associations[i];
    if (a.surfel_id < 0) continue;
    MapPoint pt;
    pt.id = next_point_id_++;
    pt.surfel_id = static_cast<std::uint64_t>(a.surfel_id);
    pt.position = map.surfel(pt.surfel_id).center;
    pt.descriptor = features.descriptors[i];
    pt.observations.emplace_back(kf_id, static_cast<std::uint32_t>(i));
    pt.creation_keyframe = kf_id;
    pt.creation_ordinal = ordinal_;
    keyframes_.at(kf_id).links[i].map_point = static_cast<std::int64_t>(pt.id);
    auto& on_surfel = surfel_points_[pt.surfel_id];
    on_surfel.insert(std::lower_bound(on_surfel.begin(), on_surfel.end(), pt.id), pt.id);
    points_.emplace(pt.id, std::move(pt));
    ++report.created;
  }

  report.frame_id = kf_id;
  cull(kf_id, report);
  ++ordinal_;
  if (!keyframes_.count(kf_id)) report.frame_id = -1;  // culled on arrival
  return report;
}

std::vector<std::pair<std::uint32_t, double>> VisualDatabase::query_index(
    const GlobalDescriptor& query, int k) const {
  if (keyframes_.empty()) throw std::runtime_error("query_index: empty database");
  std::vector<std::pair<std::uint32_t, double>> scored;
  scored.reserve(keyframes_.size());
  for (const auto& [id, kf] : keyframes_) {
    scored.emplace_back(id, global_similarity(query, kf.features.global));
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  if (static_cast<int>(scored.size()) > k) scored.resize(k);
  return scored;
}

void VisualDatabase::set_keyframe_pose(std::uint32_t id, const SE3& pose) {
  keyframes_.at(id).pose = pose;
}

void VisualDatabase::set_point_position(std::uint64_t id, const Eigen::Vector3d& position) {
  points_.at(id).position = position;
}

// ---------------------------------------------------------------------------
// Integrity

std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint32_t>
VisualDatabase::recompute_covisibility() const {
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint32_t> out;
  for (const auto& [pid, pt] : points_) {
    for (std::size_t i = 0; i < pt.observations.size(); ++i) {
      for (std::size_t j = i + 1; j < pt.observations.size(); ++j) {
        const auto a = pt.observations[i].first;
        const auto b = pt.observations[j].first;
        out[{std::min(a, b), std::max(a, b)}]++;
      }
    }
  }
  return out;
}

void VisualDatabase::check_integrity() const {
  for (const auto& [id, kf] : keyframes_) {
    if (kf.id != id) throw std::logic_error("integrity: keyframe id mismatch");
    if (kf.links.size() != kf.features.keypoints.size() ||
        kf.features.keypoints.size() != kf.features.descriptors.size()) {
      throw std::logic_error("integrity: keyframe parallel arrays");
    }
    if (kf.live_point_count() == 0) throw std::logic_error("integrity: keyframe without points");
    for (std::size_t i = 0; i < kf.links.size(); ++i) {
      const auto& link = kf.links[i];
      if (link.map_point < 0) continue;
      const auto it = points_.find(static_cast<std::uint64_t>(link.map_point));
      if (it == points_.end()) throw std::logic_error("integrity: dangling map point link");
      const auto& obs = it->second.observations;
      const auto n = std::count(obs.begin(), obs.end(),
                                std::make_pair(id, static_cast<std::uint32_t>(i)));
      if (n != 1) throw std::logic_error("integrity: observation not mutual");
      if (link.surfel >= 0) {
        for (const auto nb : link.neighbor_surfels) {
          if (nb == static_cast<std::uint64_t>(link.surfel)) {
            throw std::logic_error("integrity: neighbor set contains association");
          }
        }
      }
    }
  }
  for (const auto& [pid, pt] : points_) {
    if (pt.observations.empty()) throw std::logic_error("integrity: point without observations");
    bool representative_found = false;
    for (const auto& [kf_id, idx] : pt.observations) {
      const auto it = keyframes_.find(kf_id);
      if (it == keyframes_.end()) throw std::logic_error("integrity: observation of dead frame");
      if (idx >= it->second.links.size() ||
          it->second.links[idx].map_point != static_cast<std::int64_t>(pid)) {
        throw std::logic_error("integrity: link not mutual");
      }
      if (it->second.features.descriptors[idx] == pt.descriptor) representative_found = true;
    }
    if (!representative_found) throw std::logic_error("integrity: stale representative");
    const auto on_surfel = points_on_surfel(pt.surfel_id);
    if (!std::binary_search(on_surfel.begin(), on_surfel.end(), pid)) {
      throw std::logic_error("integrity: surfel index missing point");
    }
  }
  for (const auto& [sid, pids] : surfel_points_) {
    if (pids.empty()) throw std::logic_error("integrity: empty surfel bucket");
    if (!std::is_sorted(pids.begin(), pids.end())) {
      throw std::logic_error("integrity: unsorted surfel bucket");
    }
    for (const auto pid : pids) {
      const auto it = points_.find(pid);
      if (it == points_.end() || it->second.surfel_id != sid) {
        throw std::logic_error("integrity: surfel bucket mismatch");
      }
    }
  }
  if (recompute_covisibility() != covisibility_) {
    throw std::logic_error("integrity: covisibility graph out of sync");
  }
  for (const auto& [key, w] : covisibility_) {
    if (key.first >= key.second) throw std::logic_error("integrity: covisibility key order");
    if (w == 0) throw std::logic_error("integrity: zero-weight edge stored");
  }
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

void write_section(std::ostream& os, const char tag[4], const std::string& payload) {
  write_magic(os, tag);
  write_u64(os, payload.size());
  write_bytes(os, payload.data(), payload.size());
}

std::string read_section(std::istream& is, const char tag[4]) {
  expect_magic(is, tag, "database section");
  const auto len = read_u64(is);
  std::string payload(len, '\0');
  read_bytes(is, payload.data(), len);
  return payload;
}

}  // namespace

void VisualDatabase::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write database: " + path);
  write_magic(os, "VSDB");
  write_u32(os, 1);

  {
    std::ostringstream meta;
    write_u32(meta, next_keyframe_id_);
    write_u64(meta, next_point_id_);
    write_u64(meta, ordinal_);
    write_f64(meta, config_.ratio);
    write_f64(meta, config_.grid_window);
    write_f64(meta, config_.octave_scale);
    write_f64(meta, config_.duplicate_ratio);
    write_section(os, "META", meta.str());
  }
  {
    std::ostringstream voc;
    if (vocabulary_.trained()) vocabulary_.save(voc);
    write_section(os, "VOCB", voc.str());
  }
  {
    std::ostringstream kfs;
    write_u32(kfs, static_cast<std::uint32_t>(keyframes_.size()));
    for (const auto& [id, kf] : keyframes_) {
      write_u32(kfs, id);
      write_f64(kfs, kf.timestamp);
      for (int k = 0; k < 3; ++k) write_f64(kfs, kf.pose.t[k]);
      write_f64(kfs, kf.pose.q.x());
      write_f64(kfs, kf.pose.q.y());
      write_f64(kfs, kf.pose.q.z());
      write_f64(kfs, kf.pose.q.w());
      write_u32(kfs, static_cast<std::uint32_t>(kf.features.keypoints.size()));
      for (std::size_t i = 0; i < kf.features.keypoints.size(); ++i) {
        const auto& kp = kf.features.keypoints[i];
        write_f64(kfs, kp.position.u);
        write_f64(kfs, kp.position.v);
        write_f64(kfs, kp.size);
        write_u32(kfs, static_cast<std::uint32_t>(kp.octave));
        for (auto w : kf.features.descriptors[i].words) write_u64(kfs, w);
        const auto& link = kf.links[i];
        write_i64(kfs, link.map_point);
        write_i64(kfs, link.surfel);
        for (int k = 0; k < 3; ++k) write_f64(kfs, link.surfel_center[k]);
        write_u32(kfs, static_cast<std::uint32_t>(link.neighbor_surfels.size()));
        for (auto nb : link.neighbor_surfels) write_u64(kfs, nb);
      }
      write_u32(kfs, static_cast<std::uint32_t>(kf.features.global.size()));
      for (auto v : kf.features.global) write_f32(kfs, v);
    }
    write_section(os, "KFRM", kfs.str());
  }
  {
    std::ostringstream pts;
    write_u64(pts, points_.size());
    for (const auto& [id, pt] : points_) {
      write_u64(pts, id);
      for (int k = 0; k < 3; ++k) write_f64(pts, pt.position[k]);
      write_u64(pts, pt.surfel_id);
      for (auto w : pt.descriptor.words) write_u64(pts, w);
      write_u32(pts, static_cast<std::uint32_t>(pt.observations.size()));
      for (const auto& [kf, idx] : pt.observations) {
        write_u32(pts, kf);
        write_u32(pts, idx);
      }
      write_u32(pts, pt.creation_keyframe);
      write_u64(pts, pt.creation_ordinal);
    }
    write_section(os, "MPTS", pts.str());
  }
  {
    std::ostringstream edges;
    write_u64(edges, covisibility_.size());
    for (const auto& [key, w] : covisibility_) {
      write_u32(edges, key.first);
      write_u32(edges, key.second);
      write_u32(edges, w);
    }
    write_section(os, "EDGE", edges.str());
  }
  write_section(os, "CONF", config_snapshot_);
}

VisualDatabase VisualDatabase::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open database: " + path);
  expect_magic(is, "VSDB", "database");
  const auto version = read_u32(is);
  if (version != 1) {
    throw std::runtime_error(path + ": unsupported database version " + std::to_string(version));
  }

  VisualDatabase db;
  {
    std::istringstream meta(read_section(is, "META"));
    db.next_keyframe_id_ = read_u32(meta);
    db.next_point_id_ = read_u64(meta);
    db.ordinal_ = read_u64(meta);
    db.config_.ratio = read_f64(meta);
    db.config_.grid_window = read_f64(meta);
    db.config_.octave_scale = read_f64(meta);
    db.config_.duplicate_ratio = read_f64(meta);
  }
  {
    const std::string payload = read_section(is, "VOCB");
    if (!payload.empty()) {
      std::istringstream voc(payload);
      db.vocabulary_ = Vocabulary::load(voc);
    }
  }
  {
    std::istringstream kfs(read_section(is, "KFRM"));
    const auto count = read_u32(kfs);
    for (std::uint32_t n = 0; n < count; ++n) {
      Keyframe kf;
      kf.id = read_u32(kfs);
      kf.timestamp = read_f64(kfs);
      for (int k = 0; k < 3; ++k) kf.pose.t[k] = read_f64(kfs);
      const double qx = read_f64(kfs), qy = read_f64(kfs), qz = read_f64(kfs),
                   qw = read_f64(kfs);
      kf.pose.q = Eigen::Quaterniond(qw, qx, qy, qz);
      const auto kp_count = read_u32(kfs);
      kf.features.keypoints.resize(kp_count);
      kf.features.descriptors.resize(kp_count);
      kf.links.resize(kp_count);
      for (std::uint32_t i = 0; i < kp_count; ++i) {
        auto& kp = kf.features.keypoints[i];
        kp.position.u = read_f64(kfs);
        kp.position.v = read_f64(kfs);
        kp.size = read_f64(kfs);
        kp.octave = static_cast<int>(read_u32(kfs));
        for (auto& w : kf.features.descriptors[i].words) w = read_u64(kfs);
        auto& link = kf.links[i];
        link.map_point = read_i64(kfs);
        link.surfel = read_i64(kfs);
        for (int k = 0; k < 3; ++k) link.surfel_center[k] = read_f64(kfs);
        link.neighbor_surfels.resize(read_u32(kfs));
        for (auto& nb : link.neighbor_surfels) nb = read_u64(kfs);
      }
      kf.features.global.resize(read_u32(kfs));
      for (auto& v : kf.features.global) v = read_f32(kfs);
      db.keyframes_.emplace(kf.id, std::move(kf));
    }
  }
  {
    std::istringstream pts(read_section(is, "MPTS"));
    const auto count = read_u64(pts);
    for (std::uint64_t n = 0; n < count; ++n) {
      MapPoint pt;
      pt.id = read_u64(pts);
      for (int k = 0; k < 3; ++k) pt.position[k] = read_f64(pts);
      pt.surfel_id = read_u64(pts);
      for (auto& w : pt.descriptor.words) w = read_u64(pts);
      pt.observations.resize(read_u32(pts));
      for (auto& [kf, idx] : pt.observations) {
        kf = read_u32(pts);
        idx = read_u32(pts);
      }
      pt.creation_keyframe = read_u32(pts);
      pt.creation_ordinal = read_u64(pts);
      auto& on_surfel = db.surfel_points_[pt.surfel_id];
      on_surfel.insert(std::lower_bound(on_surfel.begin(), on_surfel.end(), pt.id), pt.id);
      db.points_.emplace(pt.id, std::move(pt));
    }
  }
  {
    std::istringstream edges(read_section(is, "EDGE"));
    const auto count = read_u64(edges);
    for (std::uint64_t n = 0; n < count; ++n) {
      const auto a = read_u32(edges);
      const auto b = read_u32(edges);
      const auto w = read_u32(edges);
      db.covisibility_[{a, b}] = w;
    }
  }
  db.config_snapshot_ = read_section(is, "CONF");
  return db;
}

}  // namespace srfloc
