#include "srfloc/run_config.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

namespace srfloc {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error("config: bad number for " + key + ": '" + value + "'");
  }
}

int parse_int(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const long v = std::stol(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return static_cast<int>(v);
  } catch (const std::exception&) {
    throw std::runtime_error("config: bad integer for " + key + ": '" + value + "'");
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const unsigned long long v = std::stoull(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error("config: bad integer for " + key + ": '" + value + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw std::runtime_error("config: bad bool for " + key + ": '" + value + "'");
}

SceneKind scene_kind_from_string(const std::string& value) {
  if (value == "room") return SceneKind::kRoomBox;
  if (value == "corridor") return SceneKind::kCorridor;
  if (value == "two_lane") return SceneKind::kTwoLaneStreet;
  throw std::runtime_error("config: unknown scene kind '" + value + "'");
}

const char* to_string(SceneKind kind) {
  switch (kind) {
    case SceneKind::kRoomBox: return "room";
    case SceneKind::kCorridor: return "corridor";
    case SceneKind::kTwoLaneStreet: return "two_lane";
  }
  return "room";
}

TrajectoryKind trajectory_kind_from_string(const std::string& value) {
  if (value == "circle") return TrajectoryKind::kCircle;
  if (value == "lawnmower") return TrajectoryKind::kLawnmower;
  if (value == "two_lane") return TrajectoryKind::kTwoLane;
  throw std::runtime_error("config: unknown trajectory kind '" + value + "'");
}

const char* to_string(TrajectoryKind kind) {
  switch (kind) {
    case TrajectoryKind::kCircle: return "circle";
    case TrajectoryKind::kLawnmower: return "lawnmower";
    case TrajectoryKind::kTwoLane: return "two_lane";
  }
  return "circle";
}

void set_trajectory_key(TrajectorySpec& spec, const std::string& full_key, const std::string& key,
                        const std::string& value) {
  if (key == "kind") spec.kind = trajectory_kind_from_string(value);
  else if (key == "frames") spec.frames = parse_int(full_key, value);
  else if (key == "start_time") spec.start_time = parse_double(full_key, value);
  else if (key == "dt") spec.dt = parse_double(full_key, value);
  else if (key == "height") spec.height = parse_double(full_key, value);
  else if (key == "radius") spec.radius = parse_double(full_key, value);
  else if (key == "loops") spec.loops = parse_double(full_key, value);
  else if (key == "phase") spec.phase = parse_double(full_key, value);
  else if (key == "margin") spec.margin = parse_double(full_key, value);
  else if (key == "row_spacing") spec.row_spacing = parse_double(full_key, value);
  else if (key == "lane_offset") spec.lane_offset = parse_double(full_key, value);
  else throw std::runtime_error("config: unknown key '" + full_key + "'");
}

}  // namespace

void RunConfig::apply_override(const std::string& section_key, const std::string& value_raw) {
  const auto dot = section_key.find('.');
  if (dot == std::string::npos) {
    throw std::runtime_error("config: expected section.key, got '" + section_key + "'");
  }
  const std::string section = section_key.substr(0, dot);
  const std::string key = section_key.substr(dot + 1);
  const std::string value = trim(value_raw);

  if (section == "run") {
    if (key == "seed") seed = parse_u64(section_key, value);
    else throw std::runtime_error("config: unknown key '" + section_key + "'");
  } else if (section == "scene") {
    if (key == "kind") scene.kind = scene_kind_from_string(value);
    else if (key == "extent_x") scene.extents.x() = parse_double(section_key, value);
    else if (key == "extent_y") scene.extents.y() = parse_double(section_key, value);
    else if (key == "extent_z") scene.extents.z() = parse_double(section_key, value);
    else if (key == "surfel_radius") scene.surfel_radius = parse_double(section_key, value);
    else if (key == "landmark_density") scene.landmark_density = parse_double(section_key, value);
    else if (key == "duplicate_offset") scene.duplicate_offset = parse_double(section_key, value);
    else if (key == "duplicate_descriptor_fraction") {
      scene.duplicate_descriptor_fraction = parse_double(section_key, value);
    } else throw std::runtime_error("config: unknown key '" + section_key + "'");
  } else if (section == "camera") {
    if (key == "fx") camera.fx = parse_double(section_key, value);
    else if (key == "fy") camera.fy = parse_double(section_key, value);
    else if (key == "cx") camera.cx = parse_double(section_key, value);
    else if (key == "cy") camera.cy = parse_double(section_key, value);
    else if (key == "width") camera.width = parse_int(section_key, value);
    else if (key == "height") camera.height = parse_int(section_key, value);
    else throw std::runtime_error("config: unknown key '" + section_key + "'");
  } else if (section == "trajectory") {
    if (key == "cover_duplicate") cover_duplicate = parse_bool(section_key, value);
    else set_trajectory_key(trajectory, section_key, key, value);
  } else if (section == "query") {
    set_trajectory_key(query_trajectory, section_key, key, value);
  } else if (section == "noise") {
    if (key == "pixel_sigma") noise.pixel_sigma = parse_double(section_key, value);
    else if (key == "descriptor_bit_flips") {
      noise.descriptor_bit_flips = parse_int(section_key, value);
    } else if (key == "db_pose_sigma") noise.db_pose_sigma = parse_double(section_key, value);
    else if (key == "outlier_fraction") noise.outlier_fraction = parse_double(section_key, value);
    else throw std::runtime_error("config: unknown key '" + section_key + "'");
  } else if (section == "matcher") {
    if (key == "ratio") {
      database.ratio = parse_double(section_key, value);
      reloc.ratio = database.ratio;
    } else if (key == "grid_window") {
      database.grid_window = parse_double(section_key, value);
      reloc.grid_window = database.grid_window;
    } else if (key == "octave_scale") {
      database.octave_scale = parse_double(section_key, value);
      reloc.octave_scale = database.octave_scale;
      optimizer.octave_scale = database.octave_scale;
    } else throw std::runtime_error("config: unknown key '" + section_key + "'");
  } else if (section == "vocab") {
    if (key == "size") vocab_size = parse_int(section_key, value);
    else if (key == "max_train_sample") vocab_max_sample = parse_int(section_key, value);
    else throw std::runtime_error("config: unknown key '" + section_key + "'");
  } else if (section == "database") {
    if (key == "duplicate_ratio") database.duplicate_ratio = parse_double(section_key, value);
    else throw std::runtime_error("config: unknown key '" + section_key + "'");
  } else if (section == "optimizer") {
    if (key == "huber_px") optimizer.huber_delta = parse_double(section_key, value);
    else if (key == "max_iterations") optimizer.max_iterations = parse_int(section_key, value);
    else if (key == "relative_decrease") {
      optimizer.relative_decrease = parse_double(section_key, value);
    } else if (key == "lambda_init") optimizer.lambda_init = parse_double(section_key, value);
    else throw std::runtime_error("config: unknown key '" + section_key + "'");
  } else if (section == "reloc") {
    if (key == "top_k") reloc.top_k = parse_int(section_key, value);
    else if (key == "n_max") reloc.n_max = parse_int(section_key, value);
    else if (key == "n_co") reloc.n_co = parse_int(section_key, value);
    else if (key == "theta_in") reloc.theta_in = parse_int(section_key, value);
    else if (key == "theta_dist") reloc.theta_dist = parse_double(section_key, value);
    else if (key == "pnp_iterations") reloc.pnp_iterations = parse_int(section_key, value);
    else if (key == "tau_pnp") reloc.tau_pnp = parse_double(section_key, value);
    else if (key == "tau_essential") reloc.tau_essential = parse_double(section_key, value);
    else if (key == "chi2_gate") reloc.chi2_gate = parse_double(section_key, value);
    else if (key == "mode") reloc.mode = reloc_mode_from_string(value);
    else throw std::runtime_error("config: unknown key '" + section_key + "'");
  } else if (section == "eval") {
    if (key == "theta_r") eval_theta_r = parse_double(section_key, value);
    else if (key == "min_recall") eval_min_recall = parse_double(section_key, value);
    else if (key == "max_mate_cm") eval_max_mate_cm = parse_double(section_key, value);
    else throw std::runtime_error("config: unknown key '" + section_key + "'");
  } else {
    throw std::runtime_error("config: unknown section '" + section + "'");
  }
}

void RunConfig::apply_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config file: " + path);
  std::string line, section;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw std::runtime_error(path + ": bad section header at line " + std::to_string(lineno));
      }
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error(path + ": expected key = value at line " + std::to_string(lineno));
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (section.empty()) {
      throw std::runtime_error(path + ": key outside any section at line " +
                               std::to_string(lineno));
    }
    apply_override(section + "." + key, value);
  }
}

RunConfig RunConfig::with_preset(const std::string& preset) {
  RunConfig cfg;
  if (preset == "room") {
    cfg.scene.kind = SceneKind::kRoomBox;
    cfg.scene.extents = Eigen::Vector3d(4.0, 4.0, 3.0);
    cfg.scene.surfel_radius = 0.02;
    cfg.trajectory.kind = TrajectoryKind::kCircle;
    cfg.trajectory.frames = 120;
    cfg.trajectory.radius = 1.2;
    cfg.trajectory.height = 1.5;
    cfg.query_trajectory.kind = TrajectoryKind::kCircle;
    cfg.query_trajectory.frames = 60;
    cfg.query_trajectory.radius = 0.9;
    cfg.query_trajectory.height = 1.3;
    cfg.query_trajectory.phase = 0.26;
    cfg.query_trajectory.start_time = 1000.0;
  } else if (preset == "corridor") {
    cfg.scene.kind = SceneKind::kCorridor;
    cfg.scene.extents = Eigen::Vector3d(10.0, 3.0, 3.0);
    cfg.scene.surfel_radius = 0.02;
    cfg.trajectory.kind = TrajectoryKind::kLawnmower;
    cfg.trajectory.frames = 140;
    cfg.trajectory.height = 1.4;
    cfg.trajectory.margin = 0.7;
    cfg.trajectory.row_spacing = 0.45;
    cfg.query_trajectory.kind = TrajectoryKind::kLawnmower;
    cfg.query_trajectory.frames = 60;
    cfg.query_trajectory.height = 1.25;
    cfg.query_trajectory.margin = 0.9;
    cfg.query_trajectory.row_spacing = 0.55;
    cfg.query_trajectory.start_time = 1000.0;
  } else if (preset == "two-lane") {
    cfg.scene.kind = SceneKind::kTwoLaneStreet;
    cfg.scene.extents = Eigen::Vector3d(60.0, 10.0, 5.0);
    cfg.scene.landmark_density = 2.5;
    cfg.trajectory.kind = TrajectoryKind::kTwoLane;
    cfg.trajectory.frames = 120;
    cfg.trajectory.height = 1.5;
    cfg.trajectory.lane_offset = 4.0;
    cfg.trajectory.margin = 1.0;
    cfg.query_trajectory.kind = TrajectoryKind::kTwoLane;
    cfg.query_trajectory.frames = 50;
    cfg.query_trajectory.height = 1.5;
    cfg.query_trajectory.lane_offset = 6.0;
    cfg.query_trajectory.margin = 6.0;
    cfg.query_trajectory.start_time = 1000.0;
    cfg.reloc.theta_dist = 0.8;  // outdoor verification gate
  } else {
    throw std::runtime_error("unknown preset '" + preset + "' (room, corridor, two-lane)");
  }
  return cfg;
}

std::string RunConfig::to_text() const {
  std::ostringstream os;
  char buf[128];
  const auto put = [&](const char* key, double v) {
    std::snprintf(buf, sizeof(buf), "%s = %.9g\n", key, v);
    os << buf;
  };
  os << "[run]\n";
  os << "seed = " << seed << "\n";
  os << "\n[scene]\n";
  os << "kind = " << to_string(scene.kind) << "\n";
  put("extent_x", scene.extents.x());
  put("extent_y", scene.extents.y());
  put("extent_z", scene.extents.z());
  put("surfel_radius", scene.surfel_radius);
  put("landmark_density", scene.landmark_density);
  put("duplicate_offset", scene.duplicate_offset);
  put("duplicate_descriptor_fraction", scene.duplicate_descriptor_fraction);
  os << "\n[camera]\n";
  put("fx", camera.fx);
  put("fy", camera.fy);
  put("cx", camera.cx);
  put("cy", camera.cy);
  os << "width = " << camera.width << "\n";
  os << "height = " << camera.height << "\n";
  const auto put_traj = [&](const TrajectorySpec& t) {
    os << "kind = " << to_string(t.kind) << "\n";
    os << "frames = " << t.frames << "\n";
    put("start_time", t.start_time);
    put("dt", t.dt);
    put("height", t.height);
    put("radius", t.radius);
    put("loops", t.loops);
    put("phase", t.phase);
    put("margin", t.margin);
    put("row_spacing", t.row_spacing);
    put("lane_offset", t.lane_offset);
  };
  os << "\n[trajectory]\n";
  os << "cover_duplicate = " << (cover_duplicate ? "true" : "false") << "\n";
  put_traj(trajectory);
  os << "\n[query]\n";
  put_traj(query_trajectory);
  os << "\n[noise]\n";
  put("pixel_sigma", noise.pixel_sigma);
  os << "descriptor_bit_flips = " << noise.descriptor_bit_flips << "\n";
  put("db_pose_sigma", noise.db_pose_sigma);
  put("outlier_fraction", noise.outlier_fraction);
  os << "\n[matcher]\n";
  put("ratio", database.ratio);
  put("grid_window", database.grid_window);
  put("octave_scale", database.octave_scale);
  os << "\n[vocab]\n";
  os << "size = " << vocab_size << "\n";
  os << "max_train_sample = " << vocab_max_sample << "\n";
  os << "\n[database]\n";
  put("duplicate_ratio", database.duplicate_ratio);
  os << "\n[optimizer]\n";
  put("huber_px", optimizer.huber_delta);
  os << "max_iterations = " << optimizer.max_iterations << "\n";
  put("relative_decrease", optimizer.relative_decrease);
  put("lambda_init", optimizer.lambda_init);
  os << "\n[reloc]\n";
  os << "top_k = " << reloc.top_k << "\n";
  os << "n_max = " << reloc.n_max << "\n";
  os << "n_co = " << reloc.n_co << "\n";
  os << "theta_in = " << reloc.theta_in << "\n";
  put("theta_dist", reloc.theta_dist);
  os << "pnp_iterations = " << reloc.pnp_iterations << "\n";
  put("tau_pnp", reloc.tau_pnp);
  put("tau_essential", reloc.tau_essential);
  put("chi2_gate", reloc.chi2_gate);
  os << "mode = " << srfloc::to_string(reloc.mode) << "\n";
  os << "\n[eval]\n";
  put("theta_r", eval_theta_r);
  if (eval_min_recall) put("min_recall", *eval_min_recall);
  if (eval_max_mate_cm) put("max_mate_cm", *eval_max_mate_cm);
  return os.str();
}

void RunConfig::validate() const {
  if (scene.extents.minCoeff() <= 0.0) throw std::runtime_error("config: extents must be positive");
  if (scene.surfel_radius <= 0.0) throw std::runtime_error("config: surfel_radius must be positive");
  if (scene.landmark_density <= 0.0) throw std::runtime_error("config: density must be positive");
  if (camera.fx <= 0.0 || camera.fy <= 0.0) throw std::runtime_error("config: bad focal length");
  if (camera.width <= 0 || camera.height <= 0) throw std::runtime_error("config: bad image size");
  if (noise.pixel_sigma < 0.0 || noise.db_pose_sigma < 0.0 || noise.descriptor_bit_flips < 0 ||
      noise.outlier_fraction < 0.0 || noise.outlier_fraction > 1.0) {
    throw std::runtime_error("config: noise values out of range");
  }
  if (!(database.ratio > 0.0 && database.ratio <= 1.0)) {
    throw std::runtime_error("config: matcher ratio must be in (0,1]");
  }
  if (reloc.top_k <= 0 || reloc.n_max <= 0 || reloc.n_co < 0 || reloc.theta_in <= 0 ||
      reloc.theta_dist <= 0.0) {
    throw std::runtime_error("config: reloc thresholds must be positive");
  }
  if (vocab_size <= 0) throw std::runtime_error("config: vocab size must be positive");
  if (eval_theta_r <= 0.0) throw std::runtime_error("config: eval theta_r must be positive");
}

}  // namespace srfloc
