#include "srfloc/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "srfloc/binary_io.hpp"

namespace srfloc {

namespace {

constexpr double kKeypointBaseSize = 6.0;
constexpr double kOctaveScale = 1.2;

SE3 look_at(const Eigen::Vector3d& position, const Eigen::Vector3d& forward_dir) {
  const Eigen::Vector3d up_world(0.0, 0.0, 1.0);
  const Eigen::Vector3d f = forward_dir.normalized();
  Eigen::Vector3d right = f.cross(up_world);
  if (right.norm() < 1e-9) right = Eigen::Vector3d::UnitX();
  right.normalize();
  const Eigen::Vector3d down = f.cross(right);
  Eigen::Matrix3d rot;
  rot.col(0) = right;
  rot.col(1) = down;
  rot.col(2) = f;
  return SE3::from_matrix(rot, position);
}

void add_box_planes(std::vector<ScenePlane>& planes, const Eigen::Vector3d& base,
                    const Eigen::Vector3d& ext, bool with_ceiling) {
  const Eigen::Vector3d ux = Eigen::Vector3d::UnitX();
  const Eigen::Vector3d uy = Eigen::Vector3d::UnitY();
  const Eigen::Vector3d uz = Eigen::Vector3d::UnitZ();
  // floor
  planes.push_back({base, ux, uy, ext.x(), ext.y(), uz});
  if (with_ceiling) {
    planes.push_back({base + uz * ext.z(), ux, uy, ext.x(), ext.y(), -uz});
  }
  // walls
  planes.push_back({base, uy, uz, ext.y(), ext.z(), ux});                      // x = 0
  planes.push_back({base + ux * ext.x(), uy, uz, ext.y(), ext.z(), -ux});      // x = ex
  planes.push_back({base, ux, uz, ext.x(), ext.z(), uy});                      // y = 0
  planes.push_back({base + uy * ext.y(), ux, uz, ext.x(), ext.z(), -uy});      // y = ey
}

void tessellate_plane(const ScenePlane& plane, std::size_t plane_index, double radius,
                      std::vector<Surfel>& surfels, std::vector<std::size_t>& surfel_plane) {
  const double pitch = 1.5 * radius;
  const int nu = std::max(1, static_cast<int>(std::floor(plane.len_u / pitch)));
  const int nv = std::max(1, static_cast<int>(std::floor(plane.len_v / pitch)));
  for (int j = 0; j < nv; ++j) {
    for (int i = 0; i < nu; ++i) {
      Surfel s;
      s.id = surfels.size();
      s.center = plane.origin + plane.axis_u * ((i + 0.5) * pitch) +
                 plane.axis_v * ((j + 0.5) * pitch);
      s.normal = plane.normal;
      s.radius = radius;
      surfels.push_back(s);
      surfel_plane.push_back(plane_index);
    }
  }
}

void sample_landmarks(const ScenePlane& plane, std::size_t plane_index, double density,
                      Rng& rng, std::vector<Landmark>& landmarks) {
  const double area = plane.len_u * plane.len_v;
  const int count = static_cast<int>(std::llround(area * density));
  for (int i = 0; i < count; ++i) {
    Landmark lm;
    lm.id = landmarks.size();
    lm.position = plane.origin + plane.axis_u * (rng.uniform_double() * plane.len_u) +
                  plane.axis_v * (rng.uniform_double() * plane.len_v);
    lm.plane_index = plane_index;
    lm.descriptor = Descriptor256::random(rng);
    landmarks.push_back(lm);
  }
}

}  // namespace

bool Scene::contains(const Eigen::Vector3d& p) const {
  const auto inside = [&](const Eigen::Vector3d& base) {
    return p.x() > base.x() && p.x() < base.x() + spec.extents.x() && p.y() > base.y() &&
           p.y() < base.y() + spec.extents.y() && p.z() > base.z() &&
           p.z() < base.z() + spec.extents.z();
  };
  if (inside(Eigen::Vector3d::Zero())) return true;
  if (spec.duplicate_offset > 0.0 &&
      inside(Eigen::Vector3d(spec.duplicate_offset, 0.0, 0.0))) {
    return true;
  }
  return false;
}

Scene generate_scene(const SceneSpec& spec) {
  if (spec.extents.minCoeff() <= 0.0) throw std::invalid_argument("scene: extents must be positive");
  if (spec.surfel_radius <= 0.0) throw std::invalid_argument("scene: radius must be positive");
  if (spec.landmark_density <= 0.0) throw std::invalid_argument("scene: density must be positive");

  Scene scene;
  scene.spec = spec;

  const bool with_ceiling = spec.kind != SceneKind::kTwoLaneStreet;
  add_box_planes(scene.planes, Eigen::Vector3d::Zero(), spec.extents, with_ceiling);
  const std::size_t base_plane_count = scene.planes.size();
  if (spec.duplicate_offset > 0.0) {
    if (spec.duplicate_offset < spec.extents.x()) {
      throw std::invalid_argument("scene: duplicate_offset must not overlap the base volume");
    }
    add_box_planes(scene.planes, Eigen::Vector3d(spec.duplicate_offset, 0.0, 0.0), spec.extents,
                   with_ceiling);
  }

  std::vector<Surfel> surfels;
  for (std::size_t p = 0; p < scene.planes.size(); ++p) {
    tessellate_plane(scene.planes[p], p, spec.surfel_radius, surfels, scene.surfel_plane);
  }
  scene.surfels = SurfelMap::from_surfels(std::move(surfels));

  Rng rng(mix_seed(spec.seed, 0x4c414e44ULL));
  for (std::size_t p = 0; p < base_plane_count; ++p) {
    sample_landmarks(scene.planes[p], p, spec.landmark_density, rng, scene.landmarks);
  }
  if (spec.duplicate_offset > 0.0) {
    // Mirror the base landmarks into the copy so the two volumes look alike.
    Rng dup_rng(mix_seed(spec.seed, 0x44555044ULL));
    const std::size_t base_count = scene.landmarks.size();
    for (std::size_t i = 0; i < base_count; ++i) {
      Landmark lm = scene.landmarks[i];
      lm.id = scene.landmarks.size();
      lm.position += Eigen::Vector3d(spec.duplicate_offset, 0.0, 0.0);
      lm.plane_index += base_plane_count;
      if (dup_rng.uniform_double() >= spec.duplicate_descriptor_fraction) {
        lm.descriptor = Descriptor256::random(dup_rng);
      }
      scene.landmarks.push_back(lm);
    }
  }
  return scene;
}

std::vector<StampedPose> generate_trajectory(const Scene& scene, const TrajectorySpec& spec) {
  if (spec.frames <= 0) throw std::invalid_argument("trajectory: frames must be positive");
  std::vector<StampedPose> out;
  out.reserve(spec.frames);

  const Eigen::Vector3d ext = scene.spec.extents;
  const Eigen::Vector3d center(0.5 * ext.x(), 0.5 * ext.y(), 0.0);

  switch (spec.kind) {
    case TrajectoryKind::kCircle: {
      // Rig on a circle looking across the volume, so the far side of the
      // scene fills the frustum.
      for (int i = 0; i < spec.frames; ++i) {
        const double theta = spec.phase + 2.0 * M_PI * spec.loops * i / spec.frames;
        const Eigen::Vector3d dir(std::cos(theta), std::sin(theta), 0.0);
        const Eigen::Vector3d pos =
            center + spec.center_offset + spec.radius * dir + Eigen::Vector3d(0, 0, spec.height);
        out.push_back({spec.start_time + i * spec.dt, look_at(pos, -dir)});
      }
      break;
    }
    case TrajectoryKind::kLawnmower: {
      const double x0 = spec.margin, x1 = ext.x() - spec.margin;
      const double y0 = spec.margin, y1 = ext.y() - spec.margin;
      if (x1 <= x0 || y1 <= y0) throw std::invalid_argument("trajectory: margin too large");
      std::vector<Eigen::Vector3d> waypoints;
      int row = 0;
      for (double y = y0; y <= y1 + 1e-9; y += spec.row_spacing, ++row) {
        if (row % 2 == 0) {
          waypoints.emplace_back(x0, y, spec.height);
          waypoints.emplace_back(x1, y, spec.height);
        } else {
          waypoints.emplace_back(x1, y, spec.height);
          waypoints.emplace_back(x0, y, spec.height);
        }
      }
      double total = 0.0;
      for (std::size_t i = 1; i < waypoints.size(); ++i) {
        total += (waypoints[i] - waypoints[i - 1]).norm();
      }
      for (int i = 0; i < spec.frames; ++i) {
        const double target = total * i / std::max(1, spec.frames - 1);
        double walked = 0.0;
        Eigen::Vector3d pos = waypoints.front();
        Eigen::Vector3d dir = (waypoints[1] - waypoints[0]).normalized();
        for (std::size_t k = 1; k < waypoints.size(); ++k) {
          const double seg = (waypoints[k] - waypoints[k - 1]).norm();
          if (walked + seg >= target || k + 1 == waypoints.size()) {
            const double f = seg > 0.0 ? std::clamp((target - walked) / seg, 0.0, 1.0) : 0.0;
            pos = waypoints[k - 1] + f * (waypoints[k] - waypoints[k - 1]);
            if (seg > 0.0) dir = (waypoints[k] - waypoints[k - 1]).normalized();
            break;
          }
          walked += seg;
        }
        out.push_back({spec.start_time + i * spec.dt, look_at(pos, dir)});
      }
      break;
    }
    case TrajectoryKind::kTwoLane: {
      const double x0 = spec.margin, x1 = ext.x() - spec.margin;
      for (int i = 0; i < spec.frames; ++i) {
        const double f = spec.frames > 1 ? static_cast<double>(i) / (spec.frames - 1) : 0.0;
        const Eigen::Vector3d pos(x0 + f * (x1 - x0), spec.lane_offset, spec.height);
        out.push_back({spec.start_time + i * spec.dt, look_at(pos, Eigen::Vector3d::UnitX())});
      }
      break;
    }
  }

  for (const auto& sp : out) {
    if (!scene.contains(sp.pose.t)) {
      throw std::runtime_error("trajectory exits scene volume");
    }
  }
  return out;
}

std::uint32_t place_label(const SE3& pose) {
  const Eigen::Vector3d fwd = pose.rotation().col(2);
  const int ix = static_cast<int>(std::floor(pose.t.x())) + 512;
  const int iy = static_cast<int>(std::floor(pose.t.y())) + 512;
  double yaw = std::atan2(fwd.y(), fwd.x());
  if (yaw < 0.0) yaw += 2.0 * M_PI;
  const int sector = std::min(7, static_cast<int>(yaw / (M_PI / 4.0)));
  return static_cast<std::uint32_t>((ix * 1024 + iy) * 8 + sector);
}

ObservedFrame observe(const Scene& scene, const SE3& pose, const PinholeCamera& cam,
                      const NoiseSpec& noise, Rng& rng, int max_observations) {
  struct Visible {
    std::size_t landmark;
    double depth;
    Pixel px;
  };
  std::vector<Visible> visible;
  const Eigen::Vector3d cam_pos = pose.t;

  for (const auto& lm : scene.landmarks) {
    const Eigen::Vector3d xc = pose.inverse_transform(lm.position);
    if (xc.z() <= SurfelMap::kZNear) continue;
    const auto px = project(cam, xc);
    if (!px || !cam.in_bounds(*px)) continue;
    const auto& plane = scene.planes[lm.plane_index];
    if (plane.normal.dot(cam_pos - lm.position) <= 0.0) continue;  // seen from behind

    // Analytic occlusion: the sight segment must not cross any other rect.
    const Eigen::Vector3d dir = lm.position - cam_pos;
    bool occluded = false;
    for (const auto& other : scene.planes) {
      const double denom = other.normal.dot(dir);
      if (std::abs(denom) < 1e-12) continue;
      const double t = -(other.normal.dot(cam_pos) - other.normal.dot(other.origin)) / denom;
      if (t <= 1e-9 || t >= 1.0 - 1e-9) continue;
      const Eigen::Vector3d hit = cam_pos + t * dir - other.origin;
      const double lu = other.axis_u.dot(hit);
      const double lv = other.axis_v.dot(hit);
      if (lu >= 0.0 && lu <= other.len_u && lv >= 0.0 && lv <= other.len_v) {
        occluded = true;
        break;
      }
    }
    if (occluded) continue;
    visible.push_back({lm.id, xc.z(), *px});
  }

  std::sort(visible.begin(), visible.end(), [](const Visible& a, const Visible& b) {
    return a.depth != b.depth ? a.depth < b.depth : a.landmark < b.landmark;
  });
  if (static_cast<int>(visible.size()) > max_observations) visible.resize(max_observations);

  ObservedFrame out;
  for (const auto& vis : visible) {
    Pixel px = vis.px;
    if (noise.pixel_sigma > 0.0) {
      px.u += rng.gaussian_truncated(noise.pixel_sigma, 3.0 * noise.pixel_sigma);
      px.v += rng.gaussian_truncated(noise.pixel_sigma, 3.0 * noise.pixel_sigma);
      if (!cam.in_bounds(px)) continue;
    }
    const int octave = vis.depth <= 2.0 ? 0 : (vis.depth <= 4.0 ? 1 : 2);
    Keypoint kp;
    kp.position = px;
    kp.octave = octave;
    kp.size = kKeypointBaseSize * std::pow(kOctaveScale, octave);

    Descriptor256 desc = scene.landmarks[vis.landmark].descriptor;
    if (noise.outlier_fraction > 0.0 && rng.uniform_double() < noise.outlier_fraction) {
      desc = Descriptor256::random(rng);
    } else if (noise.descriptor_bit_flips > 0) {
      desc = desc.with_flipped_bits(noise.descriptor_bit_flips, rng);
    }

    out.features.keypoints.push_back(kp);
    out.features.descriptors.push_back(desc);
    out.landmark_ids.push_back(vis.landmark);
  }
  return out;
}

std::vector<StampedPose> perturb_poses(std::span<const StampedPose> poses, double sigma,
                                       std::uint64_t seed) {
  if (sigma < 0.0) throw std::invalid_argument("perturb_poses: sigma must be >= 0");
  std::vector<StampedPose> out(poses.begin(), poses.end());
  for (std::size_t i = 0; i < out.size(); ++i) {
    Rng rng(mix_seed(seed, i));
    for (int k = 0; k < 3; ++k) out[i].pose.t[k] += rng.gaussian(sigma);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Ground truth and observation files

void save_ground_truth(const std::string& path, const GroundTruth& gt) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write ground truth: " + path);
  write_magic(os, "GTRU");
  write_u32(os, 1);
  write_u64(os, gt.landmarks.size());
  for (const auto& lm : gt.landmarks) {
    for (int k = 0; k < 3; ++k) write_f64(os, lm.position[k]);
    for (int k = 0; k < 3; ++k) write_f64(os, lm.plane.n[k]);
    write_f64(os, lm.plane.d);
  }
  write_u64(os, gt.frames.size());
  for (const auto& fr : gt.frames) {
    write_f64(os, fr.timestamp);
    for (int k = 0; k < 3; ++k) write_f64(os, fr.pose.t[k]);
    write_f64(os, fr.pose.q.x());
    write_f64(os, fr.pose.q.y());
    write_f64(os, fr.pose.q.z());
    write_f64(os, fr.pose.q.w());
    write_u32(os, fr.place);
    write_u32(os, static_cast<std::uint32_t>(fr.landmark_ids.size()));
    for (auto id : fr.landmark_ids) write_u64(os, id);
  }
}

GroundTruth load_ground_truth(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open ground truth: " + path);
  expect_magic(is, "GTRU", "ground truth");
  if (read_u32(is) != 1) throw std::runtime_error(path + ": unsupported ground truth version");
  GroundTruth gt;
  gt.landmarks.resize(read_u64(is));
  for (auto& lm : gt.landmarks) {
    for (int k = 0; k < 3; ++k) lm.position[k] = read_f64(is);
    for (int k = 0; k < 3; ++k) lm.plane.n[k] = read_f64(is);
    lm.plane.d = read_f64(is);
  }
  gt.frames.resize(read_u64(is));
  for (auto& fr : gt.frames) {
    fr.timestamp = read_f64(is);
    for (int k = 0; k < 3; ++k) fr.pose.t[k] = read_f64(is);
    const double qx = read_f64(is), qy = read_f64(is), qz = read_f64(is), qw = read_f64(is);
    fr.pose.q = Eigen::Quaterniond(qw, qx, qy, qz);
    fr.place = read_u32(is);
    fr.landmark_ids.resize(read_u32(is));
    for (auto& id : fr.landmark_ids) id = read_u64(is);
  }
  return gt;
}

void save_observations(const std::string& path, const std::vector<FrameObservations>& frames) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write observations: " + path);
  write_magic(os, "OBSV");
  write_u32(os, 1);
  write_u64(os, frames.size());
  for (const auto& fr : frames) {
    write_f64(os, fr.timestamp);
    write_u32(os, static_cast<std::uint32_t>(fr.features.keypoints.size()));
    for (std::size_t i = 0; i < fr.features.keypoints.size(); ++i) {
      const auto& kp = fr.features.keypoints[i];
      write_f64(os, kp.position.u);
      write_f64(os, kp.position.v);
      write_f64(os, kp.size);
      write_u32(os, static_cast<std::uint32_t>(kp.octave));
      for (auto w : fr.features.descriptors[i].words) write_u64(os, w);
    }
  }
}

std::vector<FrameObservations> load_observations(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open observations: " + path);
  expect_magic(is, "OBSV", "observations");
  if (read_u32(is) != 1) throw std::runtime_error(path + ": unsupported observations version");
  std::vector<FrameObservations> frames(read_u64(is));
  for (auto& fr : frames) {
    fr.timestamp = read_f64(is);
    const auto n = read_u32(is);
    fr.features.keypoints.resize(n);
    fr.features.descriptors.resize(n);
    for (std::uint32_t i = 0; i < n; ++i) {
      auto& kp = fr.features.keypoints[i];
      kp.position.u = read_f64(is);
      kp.position.v = read_f64(is);
      kp.size = read_f64(is);
      kp.octave = static_cast<int>(read_u32(is));
      for (auto& w : fr.features.descriptors[i].words) w = read_u64(is);
    }
  }
  return frames;
}

}  // namespace srfloc
