// Command-line front end. Talks to the library through the C API only.
#include <CLI11.hpp>

#include <string>
#include <vector>

#include "smcdo/smcdo.h"

int main(int argc, char** argv) {
  CLI::App app{"Spatial Monte Carlo dropout experiments: train, evaluate, sweep and benchmark"};
  app.set_version_flag("--version", smcdo_version());
  app.require_subcommand(1);

  std::string config, out;
  std::vector<std::string> checkpoints;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  bool verbose = false;

  const std::vector<std::pair<const char*, const char*>> commands{
      {"train", "Train one checkpoint per train.rate_train value"},
      {"eval", "Evaluate a checkpoint over the configured conditions"},
      {"sweep", "Resumable evaluation grid over checkpoints, inference rates and corruptions"},
      {"bench", "Latency of every executor on one fixed input"},
      {"corrupt-preview", "Write corrupted test images for inspection"},
  };
  std::vector<CLI::App*> subs;
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config, "Experiment config (JSON)")->required();
    sub->add_option("--checkpoint", checkpoints, "Checkpoint .bin file (repeatable)");
    sub->add_option("--out", out, "Output directory (overrides output_dir)");
    sub->add_option("--seed", seed, "Seed for training, initialization and evaluation");
    sub->add_option("--threads", threads, "Worker threads for evaluation cells")->check(CLI::PositiveNumber);
    sub->add_flag("-v,--verbose", verbose, "Progress on stderr");
    subs.push_back(sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return SMCDO_ERR_CONFIG;
  }

  const CLI::App* chosen = nullptr;
  for (const auto* s : subs)
    if (s->parsed()) chosen = s;

  std::vector<const char*> ck;
  for (const auto& c : checkpoints) ck.push_back(c.c_str());
  smcdo_command_options opts{};
  opts.config_path = config.c_str();
  opts.checkpoints = ck.empty() ? nullptr : ck.data();
  opts.num_checkpoints = ck.size();
  opts.out_dir = out.empty() ? nullptr : out.c_str();
  opts.has_seed = chosen->count("--seed") > 0;
  opts.seed = seed;
  opts.threads = threads;
  opts.verbose = verbose;
  return smcdo_command_run(chosen->get_name().c_str(), &opts);
}
