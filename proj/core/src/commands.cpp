#include "srfloc/commands.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include "srfloc/binary_io.hpp"
#include "srfloc/evaluation.hpp"

namespace srfloc {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kSaltDbObs = 0x0b5e0001ULL;
constexpr std::uint64_t kSaltQueryObs = 0x0b5e0002ULL;
constexpr std::uint64_t kSaltPoseNoise = 0x90153001ULL;
constexpr std::uint64_t kSaltVocabSample = 0x70cab001ULL;
constexpr std::uint64_t kSaltVocabTrain = 0x70cab002ULL;
constexpr std::uint64_t kSaltReloc = 0x4e10c001ULL;

int log_level() {
  static const int level = [] {
    const char* env = std::getenv("SRFLOC_LOG");
    if (!env) return 1;
    const std::string v(env);
    if (v == "quiet") return 0;
    if (v == "debug") return 2;
    return 1;
  }();
  return level;
}

GroundTruth make_ground_truth(const Scene& scene, const std::vector<StampedPose>& poses,
                              const std::vector<ObservedFrame>& frames) {
  GroundTruth gt;
  gt.landmarks.reserve(scene.landmarks.size());
  for (const auto& lm : scene.landmarks) {
    gt.landmarks.push_back(
        GroundTruthLandmark{lm.position, scene.planes[lm.plane_index].coeff()});
  }
  gt.frames.reserve(poses.size());
  for (std::size_t i = 0; i < poses.size(); ++i) {
    GroundTruthFrame fr;
    fr.timestamp = poses[i].timestamp;
    fr.pose = poses[i].pose;
    fr.place = place_label(poses[i].pose);
    fr.landmark_ids = frames[i].landmark_ids;
    gt.frames.push_back(std::move(fr));
  }
  return gt;
}

std::vector<ObservedFrame> observe_trajectory(const Scene& scene,
                                              const std::vector<StampedPose>& poses,
                                              const PinholeCamera& cam, const NoiseSpec& noise,
                                              std::uint64_t seed, std::uint64_t salt) {
  std::vector<ObservedFrame> out;
  out.reserve(poses.size());
  for (std::size_t i = 0; i < poses.size(); ++i) {
    Rng rng(mix_seed(mix_seed(seed, salt), i));
    out.push_back(observe(scene, poses[i].pose, cam, noise, rng));
  }
  return out;
}

std::vector<FrameObservations> to_observation_file(const std::vector<StampedPose>& poses,
                                                   const std::vector<ObservedFrame>& frames) {
  std::vector<FrameObservations> out;
  out.reserve(frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i) {
    out.push_back(FrameObservations{poses[i].timestamp, frames[i].features});
  }
  return out;
}

}  // namespace

bool log_enabled(int level) { return log_level() >= level; }

void log_line(int level, const std::string& message) {
  if (log_enabled(level)) std::cout << message << "\n";
}

int cmd_simulate(const RunConfig& config, const SimulateOptions& options) {
  config.validate();
  if (options.out_dir.empty()) throw std::runtime_error("simulate: output directory required");
  const fs::path out(options.out_dir);
  const fs::path manifest_path = out / "manifest.txt";
  if (fs::exists(manifest_path) && !options.force) {
    throw std::runtime_error("simulate: " + manifest_path.string() +
                             " already exists (use --force to overwrite)");
  }
  fs::create_directories(out);

  SceneSpec scene_spec = config.scene;
  scene_spec.seed = config.seed;
  const Scene scene = generate_scene(scene_spec);

  std::vector<StampedPose> db_poses = generate_trajectory(scene, config.trajectory);
  if (config.cover_duplicate && scene_spec.duplicate_offset > 0.0) {
    TrajectorySpec second = config.trajectory;
    second.center_offset =
        config.trajectory.center_offset + Eigen::Vector3d(scene_spec.duplicate_offset, 0.0, 0.0);
    second.start_time =
        config.trajectory.start_time + config.trajectory.frames * config.trajectory.dt;
    const auto extra = generate_trajectory(scene, second);
    db_poses.insert(db_poses.end(), extra.begin(), extra.end());
  }
  const std::vector<StampedPose> query_poses = generate_trajectory(scene, config.query_trajectory);

  const auto db_frames =
      observe_trajectory(scene, db_poses, config.camera, config.noise, config.seed, kSaltDbObs);
  const auto query_frames = observe_trajectory(scene, query_poses, config.camera, config.noise,
                                               config.seed, kSaltQueryObs);

  const auto noisy_db_poses =
      perturb_poses(db_poses, config.noise.db_pose_sigma, mix_seed(config.seed, kSaltPoseNoise));

  scene.surfels.save((out / "map.srfl").string());
  save_observations((out / "db.obsv").string(), to_observation_file(db_poses, db_frames));
  save_observations((out / "query.obsv").string(), to_observation_file(query_poses, query_frames));
  save_trajectory((out / "db_poses.txt").string(), noisy_db_poses);
  save_trajectory((out / "db_poses_true.txt").string(), db_poses);
  save_trajectory((out / "query_poses.txt").string(), query_poses);
  save_ground_truth((out / "db.gtru").string(), make_ground_truth(scene, db_poses, db_frames));
  save_ground_truth((out / "query.gtru").string(),
                    make_ground_truth(scene, query_poses, query_frames));
  {
    std::ofstream cfg_os(out / "config.ini");
    cfg_os << config.to_text();
  }
  {
    std::ofstream manifest(manifest_path);
    manifest << "seed=" << config.seed << "\n";
    for (const char* name : {"map.srfl", "db.obsv", "query.obsv", "db_poses.txt",
                             "db_poses_true.txt", "query_poses.txt", "db.gtru", "query.gtru",
                             "config.ini"}) {
      manifest << name << "=" << fnv1a_file((out / name).string()) << "\n";
    }
  }
  log_line(1, "simulate: wrote " + options.out_dir + " (surfels=" +
                  std::to_string(scene.surfels.size()) +
                  " landmarks=" + std::to_string(scene.landmarks.size()) +
                  " db_frames=" + std::to_string(db_poses.size()) +
                  " query_frames=" + std::to_string(query_poses.size()) + ")");
  return 0;
}

int cmd_build_db(const RunConfig& config, const BuildDbOptions& options) {
  config.validate();
  const SurfelMap map = SurfelMap::load(options.map_path);
  const auto frames = load_observations(options.obs_path);
  if (frames.empty()) throw std::runtime_error("build-db: empty observation file");
  const auto poses = load_trajectory(options.poses_path);
  if (poses.size() != frames.size()) {
    throw std::runtime_error("build-db: frame/pose count mismatch (" +
                             std::to_string(frames.size()) + " frames, " +
                             std::to_string(poses.size()) + " poses)");
  }
  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (std::abs(frames[i].timestamp - poses[i].timestamp) > 1e-6) {
      throw std::runtime_error("build-db: timestamp mismatch at frame " + std::to_string(i));
    }
  }

  VisualDatabase db(config.database);
  if (!options.existing_db.empty()) {
    db = VisualDatabase::load(options.existing_db);
    if (!db.has_vocabulary()) {
      throw std::runtime_error("build-db: existing database has no vocabulary");
    }
  } else {
    std::vector<Descriptor256> sample;
    for (const auto& fr : frames) {
      sample.insert(sample.end(), fr.features.descriptors.begin(),
                    fr.features.descriptors.end());
    }
    if (static_cast<int>(sample.size()) > config.vocab_max_sample) {
      Rng rng(mix_seed(config.seed, kSaltVocabSample));
      for (int k = 0; k < config.vocab_max_sample; ++k) {
        const std::size_t pick = k + rng.uniform_index(sample.size() - k);
        std::swap(sample[k], sample[pick]);
      }
      sample.resize(config.vocab_max_sample);
    }
    db.set_vocabulary(Vocabulary::train(sample, config.vocab_size,
                                        mix_seed(config.seed, kSaltVocabTrain)));
  }

  std::ofstream report_os;
  if (!options.report_path.empty()) {
    report_os.open(options.report_path);
    if (!report_os) throw std::runtime_error("build-db: cannot write " + options.report_path);
  }
  int rejected = 0;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const FrameReport report = db.process_frame(frames[i].features, frames[i].timestamp,
                                                poses[i].pose, map, config.camera);
    if (report.rejected) ++rejected;
    if (report_os.is_open()) report_os << report.to_line() << "\n";
    log_line(2, report.to_line());
  }

  db.set_config_snapshot(config.to_text());
  db.save(options.out_path);
  log_line(1, "build-db: " + std::to_string(db.keyframes().size()) + " keyframes, " +
                  std::to_string(db.points().size()) + " map points, " +
                  std::to_string(rejected) + " rejected frames -> " + options.out_path);
  return 0;
}

int cmd_optimize_db(const RunConfig& config, const OptimizeDbOptions& options) {
  config.validate();
  VisualDatabase db = VisualDatabase::load(options.db_path);
  const SurfelMap map = SurfelMap::load(options.map_path);

  const OptimizationReport report = optimize_poses(db, config.camera, map, config.optimizer);
  std::size_t refreshed = 0;
  if (report.success) {
    refreshed = refresh_map_points(db, config.camera, map, config.optimizer);
  }
  db.save(options.out_path);

  const std::string line = report.to_line() + " refreshed=" + std::to_string(refreshed);
  log_line(1, line);
  if (!options.report_path.empty()) {
    std::ofstream os(options.report_path);
    if (!os) throw std::runtime_error("optimize-db: cannot write " + options.report_path);
    os << line << "\n";
  }
  if (!options.cost_csv_path.empty()) {
    std::ofstream os(options.cost_csv_path);
    if (!os) throw std::runtime_error("optimize-db: cannot write " + options.cost_csv_path);
    os << "iteration,cost\n";
    for (std::size_t i = 0; i < report.cost_per_iteration.size(); ++i) {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%zu,%.9e\n", i, report.cost_per_iteration[i]);
      os << buf;
    }
  }
  return 0;
}

int cmd_relocalize(const RunConfig& config, const RelocalizeOptions& options) {
  config.validate();
  const VisualDatabase db = VisualDatabase::load(options.db_path);
  if (!db.has_vocabulary()) {
    throw std::runtime_error("relocalize: database has no vocabulary");
  }
  const auto frames = load_observations(options.obs_path);

  std::vector<RelocRecord> records;
  records.reserve(frames.size());
  std::optional<SE3> last_inlier_pose;
  int verified = 0;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    RelocConfig rc = config.reloc;
    rc.seed = mix_seed(mix_seed(config.seed, kSaltReloc), i);
    const RelocalizationResult res =
        relocalize(db, frames[i].features, config.camera, rc, last_inlier_pose);
    RelocRecord rec;
    rec.timestamp = frames[i].timestamp;
    rec.status = res.status;
    rec.pose = res.pose;
    rec.n_in = res.n_in;
    rec.cluster_count = res.cluster_count;
    records.push_back(rec);
    if (res.status == RelocStatus::kVerified) ++verified;
    log_line(2, to_record_line(rec));
  }
  save_records(options.out_path, records);
  log_line(1, "relocalize: " + std::to_string(verified) + "/" + std::to_string(frames.size()) +
                  " verified -> " + options.out_path);
  return 0;
}

int cmd_eval(const RunConfig& config, const EvalOptions& options) {
  config.validate();
  const auto records = load_records(options.records_path);
  const auto gt = load_trajectory(options.gt_path);
  const EvalReport report = evaluate(records, gt, config.eval_theta_r);

  fs::create_directories(options.out_dir);
  const fs::path out(options.out_dir);
  {
    std::ofstream os(out / "summary.txt");
    if (!os) throw std::runtime_error("eval: cannot write summary");
    os << summary_text(report);
  }
  write_pr_csv((out / "pr_pv.csv").string(), report.pr_with_verification);
  write_pr_csv((out / "pr_nopv.csv").string(), report.pr_without_verification);
  log_line(1, summary_text(report));

  bool gates_ok = true;
  if (config.eval_min_recall && report.recall < *config.eval_min_recall) gates_ok = false;
  if (config.eval_max_mate_cm &&
      (!report.mate_cm || *report.mate_cm > *config.eval_max_mate_cm)) {
    gates_ok = false;
  }
  return gates_ok ? 0 : 2;
}

}  // namespace srfloc
