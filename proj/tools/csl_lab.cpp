// csl_lab: command-line front end for the collapse laboratory.
//
//   csl_lab born        --config c.json --out dir   Born-rule statistics
//   csl_lab timing      --config c.json --out dir   collapse-time scaling + hook catalog
//   csl_lab nogo        --config c.json --out dir   coefficient-independence no-go table
//   csl_lab branchlab   --config c.json --out dir   branch isolation suite
//   csl_lab constraints --config c.json --out dir   published coupling bounds
//   csl_lab rerun       --manifest m.json --out dir reproduce a recorded run
//
// Exit codes: 0 pass, 1 scientific/statistical failure, 2 usage/config error.
// CSL_LAB_THREADS caps worker threads.

#include <CLI11.hpp>

#include "csl/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"csl_lab: stochastic collapse-model laboratory"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "out";
  std::string manifest_path;
  csl::cli::Overrides ov;
  std::uint64_t trials_override = 0;
  std::uint64_t seed_override = 0;
  bool have_trials = false, have_seed = false;

  auto add_common = [&](CLI::App* cmd, bool needs_config) {
    if (needs_config)
      cmd->add_option("--config", config_path, "JSON config path")->required();
    cmd->add_option("--out", out_dir, "output directory");
    cmd->add_flag("--emit-trajectories", ov.emit_trajectories, "dump per-trajectory CSV");
    cmd->add_option("--trials-override", trials_override, "override trial count")
        ->each([&](const std::string&) { have_trials = true; });
    cmd->add_option("--seed-override", seed_override, "override master seed")
        ->each([&](const std::string&) { have_seed = true; });
  };

  CLI::App* born = app.add_subcommand("born", "ensemble Born-rule statistics");
  CLI::App* timing = app.add_subcommand("timing", "collapse-time scaling and hook catalog");
  CLI::App* nogo = app.add_subcommand("nogo", "coefficient-independence no-go demonstration");
  CLI::App* branchlab = app.add_subcommand("branchlab", "branch isolation suite");
  CLI::App* constraints = app.add_subcommand("constraints", "published coupling bounds");
  for (CLI::App* c : {born, timing, nogo, branchlab, constraints}) add_common(c, true);

  CLI::App* rerun = app.add_subcommand("rerun", "reproduce a recorded run from its manifest");
  rerun->add_option("--manifest", manifest_path, "manifest.json path")->required();
  rerun->add_option("--out", out_dir, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : csl::cli::kExitUsage;
  }

  if (have_trials) ov.trials = trials_override;
  if (have_seed) ov.seed = seed_override;

  if (rerun->parsed()) return csl::cli::cmd_rerun(manifest_path, out_dir);
  for (CLI::App* c : {born, timing, nogo, branchlab, constraints}) {
    if (c->parsed())
      return csl::cli::run_command(c->get_name(), config_path, out_dir, ov);
  }
  return csl::cli::kExitUsage;
}
