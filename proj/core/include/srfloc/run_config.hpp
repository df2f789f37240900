#pragma once

#include <optional>
#include <string>

#include "srfloc/camera.hpp"
#include "srfloc/database.hpp"
#include "srfloc/relocalizer.hpp"
#include "srfloc/simulator.hpp"
#include "srfloc/surfel_optimizer.hpp"

namespace srfloc {

// Sectioned key-value run configuration. Every experiment is reproducible
// from one config plus a seed; unknown sections or keys are rejected.
struct RunConfig {
  std::uint64_t seed = 42;

  SceneSpec scene;
  PinholeCamera camera{400.0, 400.0, 320.0, 240.0, 640, 480};
  TrajectorySpec trajectory;       // database pass
  TrajectorySpec query_trajectory; // held-out query pass
  bool cover_duplicate = false;    // database pass also sweeps the duplicated volume
  NoiseSpec noise;

  DatabaseConfig database;
  int vocab_size = 64;
  int vocab_max_sample = 4000;
  OptimizerSettings optimizer;
  RelocConfig reloc;

  double eval_theta_r = 0.3;
  std::optional<double> eval_min_recall;    // CI gate, unset = no gate
  std::optional<double> eval_max_mate_cm;   // CI gate, unset = no gate

  static RunConfig with_preset(const std::string& preset);  // room, corridor, two-lane
  void apply_file(const std::string& path);
  void apply_override(const std::string& section_key, const std::string& value);
  std::string to_text() const;
  void validate() const;
};

}  // namespace srfloc
