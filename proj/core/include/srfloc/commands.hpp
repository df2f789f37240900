#pragma once

#include <string>

#include "srfloc/run_config.hpp"

namespace srfloc {

// Command entry points shared by the CLI and the integration tests. All of
// them throw std::runtime_error on unusable inputs and return a process exit
// code otherwise.

struct SimulateOptions {
  std::string out_dir;
  bool force = false;
};
int cmd_simulate(const RunConfig& config, const SimulateOptions& options);

struct BuildDbOptions {
  std::string map_path;
  std::string obs_path;
  std::string poses_path;
  std::string out_path;
  std::string existing_db;  // update this database instead of starting fresh
  std::string report_path;  // frame reports, line-delimited
};
int cmd_build_db(const RunConfig& config, const BuildDbOptions& options);

struct OptimizeDbOptions {
  std::string db_path;
  std::string map_path;
  std::string out_path;
  std::string report_path;
  std::string cost_csv_path;  // per-iteration cost trace
};
int cmd_optimize_db(const RunConfig& config, const OptimizeDbOptions& options);

struct RelocalizeOptions {
  std::string db_path;
  std::string obs_path;
  std::string out_path;
};
int cmd_relocalize(const RunConfig& config, const RelocalizeOptions& options);

struct EvalOptions {
  std::string records_path;
  std::string gt_path;  // trajectory text file with true query poses
  std::string out_dir;
};
int cmd_eval(const RunConfig& config, const EvalOptions& options);

// SRFLOC_LOG={quiet,info,debug}; defaults to info.
bool log_enabled(int level);  // 0 quiet, 1 info, 2 debug
void log_line(int level, const std::string& message);

}  // namespace srfloc
