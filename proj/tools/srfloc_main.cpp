#include <CLI11.hpp>
#include <iostream>
#include <string>
#include <vector>

#include "srfloc/commands.hpp"
#include "srfloc/run_config.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::string preset = "room";
  std::vector<std::string> overrides;  // section.key=value
  std::uint64_t seed = 0;
  bool seed_set = false;
};

void add_common(CLI::App* cmd, CommonArgs* args) {
  cmd->add_option("--config", args->config_path, "Config file (sectioned key = value text)");
  cmd->add_option("--preset", args->preset, "Scene preset: room, corridor, two-lane")
      ->check(CLI::IsMember({"room", "corridor", "two-lane"}));
  cmd->add_option("--set", args->overrides, "Override a config key, e.g. --set noise.pixel_sigma=1");
  cmd->add_option_function<std::uint64_t>(
      "--seed",
      [args](const std::uint64_t& v) {
        args->seed = v;
        args->seed_set = true;
      },
      "Global seed override");
}

srfloc::RunConfig resolve_config(const CommonArgs& args) {
  srfloc::RunConfig cfg = srfloc::RunConfig::with_preset(args.preset);
  if (!args.config_path.empty()) cfg.apply_file(args.config_path);
  for (const auto& kv : args.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw std::runtime_error("--set expects section.key=value");
    cfg.apply_override(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (args.seed_set) cfg.seed = args.seed;
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Surfel-map visual relocalization toolkit"};
  app.require_subcommand(1);

  CommonArgs sim_args, build_args, opt_args, reloc_args, eval_args;

  auto* sim = app.add_subcommand("simulate", "Generate a synthetic scene, trajectories and "
                                             "observations");
  add_common(sim, &sim_args);
  srfloc::SimulateOptions sim_opts;
  sim->add_option("--out", sim_opts.out_dir, "Output directory")->required();
  sim->add_flag("--force", sim_opts.force, "Overwrite an existing output directory");

  auto* build = app.add_subcommand("build-db", "Build or update a visual database from posed "
                                               "observations");
  add_common(build, &build_args);
  srfloc::BuildDbOptions build_opts;
  build->add_option("--map", build_opts.map_path, "Surfel map file")->required();
  build->add_option("--obs", build_opts.obs_path, "Observation file")->required();
  build->add_option("--poses", build_opts.poses_path, "Trajectory text file")->required();
  build->add_option("--out", build_opts.out_path, "Output database file")->required();
  build->add_option("--db", build_opts.existing_db, "Existing database to update");
  build->add_option("--report", build_opts.report_path, "Frame report output file");

  auto* opt = app.add_subcommand("optimize-db", "Optimize keyframe poses with surfel "
                                                "reprojection constraints");
  add_common(opt, &opt_args);
  srfloc::OptimizeDbOptions opt_opts;
  opt->add_option("--db", opt_opts.db_path, "Input database")->required();
  opt->add_option("--map", opt_opts.map_path, "Surfel map file")->required();
  opt->add_option("--out", opt_opts.out_path, "Output database")->required();
  opt->add_option("--report", opt_opts.report_path, "Optimization report file");
  opt->add_option("--cost-csv", opt_opts.cost_csv_path, "Per-iteration cost CSV");

  auto* reloc = app.add_subcommand("relocalize", "Answer single-image queries against a "
                                                 "database");
  add_common(reloc, &reloc_args);
  srfloc::RelocalizeOptions reloc_opts;
  reloc->add_option("--db", reloc_opts.db_path, "Database file")->required();
  reloc->add_option("--obs", reloc_opts.obs_path, "Query observation file")->required();
  reloc->add_option("--out", reloc_opts.out_path, "Result records file")->required();

  auto* eval = app.add_subcommand("eval", "Score result records against ground truth");
  add_common(eval, &eval_args);
  srfloc::EvalOptions eval_opts;
  eval->add_option("--results", eval_opts.records_path, "Result records file")->required();
  eval->add_option("--gt", eval_opts.gt_path, "Ground-truth trajectory text file")->required();
  eval->add_option("--out", eval_opts.out_dir, "Report output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed()) return srfloc::cmd_simulate(resolve_config(sim_args), sim_opts);
    if (build->parsed()) return srfloc::cmd_build_db(resolve_config(build_args), build_opts);
    if (opt->parsed()) return srfloc::cmd_optimize_db(resolve_config(opt_args), opt_opts);
    if (reloc->parsed()) return srfloc::cmd_relocalize(resolve_config(reloc_args), reloc_opts);
    if (eval->parsed()) return srfloc::cmd_eval(resolve_config(eval_args), eval_opts);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
