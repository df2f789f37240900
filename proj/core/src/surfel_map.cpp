#include "srfloc/surfel_map.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "srfloc/binary_io.hpp"

namespace srfloc {

PlaneCoeff plane_coeff(const Surfel& s) { return PlaneCoeff{s.normal, -s.normal.dot(s.center)}; }

SurfelMap SurfelMap::from_surfels(std::vector<Surfel> surfels) {
  if (surfels.empty()) throw std::runtime_error("surfel map: zero surfels");
  std::sort(surfels.begin(), surfels.end(),
            [](const Surfel& a, const Surfel& b) { return a.id < b.id; });
  for (std::size_t i = 0; i < surfels.size(); ++i) {
    auto& s = surfels[i];
    if (s.id != i) {
      throw std::runtime_error("surfel map: ids must be unique and contiguous from 0, record " +
                               std::to_string(i));
    }
    const double norm = s.normal.norm();
    if (norm < 1e-9) {
      throw std::runtime_error("surfel map: degenerate normal at id " + std::to_string(s.id));
    }
    s.normal /= norm;
    if (!(s.radius > 0.0)) {
      throw std::runtime_error("surfel map: non-positive radius at id " + std::to_string(s.id));
    }
  }
  SurfelMap map;
  map.surfels_ = std::move(surfels);
  return map;
}

SurfelMap SurfelMap::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open surfel map: " + path);

  char magic[4] = {0, 0, 0, 0};
  is.read(magic, 4);
  std::vector<Surfel> surfels;
  if (is.gcount() == 4 && std::memcmp(magic, "SRFL", 4) == 0) {
    const auto version = read_u32(is);
    if (version != 1) throw std::runtime_error(path + ": unsupported surfel map version");
    const auto count = read_u64(is);
    if (count == 0) throw std::runtime_error(path + ": zero surfels");
    surfels.resize(count);
    for (std::uint64_t i = 0; i < count; ++i) {
      auto& s = surfels[i];
      s.id = i;
      for (int k = 0; k < 3; ++k) s.center[k] = read_f64(is);
      for (int k = 0; k < 3; ++k) s.normal[k] = read_f64(is);
      s.radius = read_f64(is);
    }
  } else {
    is.clear();
    is.seekg(0);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      std::istringstream ss(line);
      Surfel s;
      if (!(ss >> s.center.x())) continue;
      if (!(ss >> s.center.y() >> s.center.z() >> s.normal.x() >> s.normal.y() >> s.normal.z() >>
            s.radius)) {
        throw std::runtime_error(path + ": malformed surfel at line " + std::to_string(lineno));
      }
      s.id = surfels.size();
      surfels.push_back(s);
    }
  }
  return from_surfels(std::move(surfels));
}

void SurfelMap::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write surfel map: " + path);
  write_magic(os, "SRFL");
  write_u32(os, 1);
  write_u64(os, surfels_.size());
  for (const auto& s : surfels_) {
    for (int k = 0; k < 3; ++k) write_f64(os, s.center[k]);
    for (int k = 0; k < 3; ++k) write_f64(os, s.normal[k]);
    write_f64(os, s.radius);
  }
}

SurfelIndexMap SurfelMap::render_index_map(const SE3& camera_pose,
                                           const PinholeCamera& cam) const {
  SurfelIndexMap out(cam.width, cam.height);
  const SE3 world_from_cam = camera_pose;
  const Eigen::Vector3d cam_pos = world_from_cam.t;

  for (const auto& s : surfels_) {
    const Eigen::Vector3d view_dir = s.center - cam_pos;
    if (s.normal.dot(view_dir) >= 0.0) continue;  // back-facing
    const Eigen::Vector3d xc = world_from_cam.inverse_transform(s.center);
    const double z = xc.z();
    if (z <= kZNear) continue;

    const double uc = cam.fx * xc.x() / z + cam.cx;
    const double vc = cam.fy * xc.y() / z + cam.cy;
    const double r_px = std::max(1.0, cam.fx * s.radius / z);

    const int u0 = std::max(0, static_cast<int>(std::ceil(uc - r_px)));
    const int u1 = std::min(cam.width - 1, static_cast<int>(std::floor(uc + r_px)));
    const int v0 = std::max(0, static_cast<int>(std::ceil(vc - r_px)));
    const int v1 = std::min(cam.height - 1, static_cast<int>(std::floor(vc + r_px)));
    if (u0 > u1 || v0 > v1) continue;

    const double r_sq = r_px * r_px;
    for (int v = v0; v <= v1; ++v) {
      const double dv = v - vc;
      for (int u = u0; u <= u1; ++u) {
        const double du = u - uc;
        if (du * du + dv * dv > r_sq) continue;
        const std::size_t idx = static_cast<std::size_t>(v) * cam.width + u;
        const auto prev = out.ids[idx];
        if (prev == SurfelIndexMap::kEmpty || z < out.depths[idx] ||
            (z == out.depths[idx] && static_cast<std::int64_t>(s.id) < prev)) {
          out.ids[idx] = static_cast<std::int64_t>(s.id);
          out.depths[idx] = z;
        }
      }
    }
  }
  return out;
}

AssociationResult associate_keypoints(const SurfelIndexMap& index_map,
                                      std::span<const Keypoint> keypoints) {
  AssociationResult result;
  result.associations.resize(keypoints.size());
  for (std::size_t i = 0; i < keypoints.size(); ++i) {
    const auto& kp = keypoints[i];
    const int px = static_cast<int>(std::lround(kp.position.u));
    const int py = static_cast<int>(std::lround(kp.position.v));
    if (px < 0 || py < 0 || px >= index_map.width || py >= index_map.height) {
      ++result.skipped_out_of_bounds;
      continue;
    }
    auto& assoc = result.associations[i];
    assoc.surfel_id = index_map.id_at(px, py);

    const double r = kp.size;
    const int u0 = std::max(0, static_cast<int>(std::ceil(kp.position.u - r)));
    const int u1 = std::min(index_map.width - 1, static_cast<int>(std::floor(kp.position.u + r)));
    const int v0 = std::max(0, static_cast<int>(std::ceil(kp.position.v - r)));
    const int v1 = std::min(index_map.height - 1, static_cast<int>(std::floor(kp.position.v + r)));
    std::set<std::uint64_t> neighbors;
    for (int v = v0; v <= v1; ++v) {
      const double dv = v - kp.position.v;
      for (int u = u0; u <= u1; ++u) {
        const double du = u - kp.position.u;
        if (du * du + dv * dv > r * r) continue;
        const auto id = index_map.id_at(u, v);
        if (id == SurfelIndexMap::kEmpty || id == assoc.surfel_id) continue;
        neighbors.insert(static_cast<std::uint64_t>(id));
      }
    }
    assoc.neighbors.assign(neighbors.begin(), neighbors.end());
  }
  return result;
}

}  // namespace srfloc
