// strac_cli: train and evaluate STRAC policies on the bundled dialogue
// domains, writing learning curves, checkpoints and training logs.

#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "strac/errors.hpp"
#include "strac/harness/config.hpp"
#include "strac/harness/experiment.hpp"
#include "strac/log.hpp"

namespace {

std::vector<std::string> split(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream in(text);
  for (std::string item; std::getline(in, item, ',');) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// "0,3,5" or "0-9".
std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  for (const auto& item : split(text)) {
    const auto dash = item.find('-');
    if (dash == std::string::npos) {
      seeds.push_back(std::stoull(item));
    } else {
      const auto lo = std::stoull(item.substr(0, dash));
      const auto hi = std::stoull(item.substr(dash + 1));
      for (auto s = lo; s <= hi; ++s) seeds.push_back(s);
    }
  }
  return seeds;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace strac;
  CLI::App app{"STRAC structured actor-critic dialogue policy trainer"};

  std::string config_file, mode, domains, profile, seeds, out_dir;
  int dialogues = 0, milestone = 0, eval = 0;
  std::int64_t seed = -1;
  bool no_hierarchy = false, no_noise = false, serial = false, total_count = false;
  bool episode_log = false, no_checkpoints = false;

  app.add_option("--config", config_file, "JSON experiment file; flags override it");
  app.add_option("--mode", mode, "single or multi")->check(CLI::IsMember({"single", "multi"}));
  app.add_option("--domains", domains, "comma-separated bundled domains (cr,sfr,lap)");
  app.add_option("--profile", profile, "bundled profile env1..env6");
  app.add_option("--dialogues", dialogues, "training dialogues per domain")->check(CLI::PositiveNumber);
  app.add_option("--milestone", milestone, "dialogues between evaluations")->check(CLI::PositiveNumber);
  app.add_option("--eval-dialogues", eval, "dialogues per evaluation")->check(CLI::PositiveNumber);
  auto* seed_opt = app.add_option("--seed", seed, "single seed")->check(CLI::NonNegativeNumber);
  app.add_option("--seeds", seeds, "seed list, e.g. 0-9 or 0,2,4")->excludes(seed_opt);
  app.add_flag("--no-hierarchy", no_hierarchy, "f_i = l_i instead of hierarchical composition");
  app.add_flag("--no-noise", no_noise, "plain linear layers instead of noisy layers");
  app.add_flag("--serial", serial, "run actors and learner on one thread, reproducibly");
  app.add_flag("--total", total_count, "in multi mode, --dialogues is the total over domains");
  app.add_option("--out", out_dir, "output directory");
  app.add_flag("--episode-log", episode_log, "also write episodes_seed<k>.csv");
  app.add_flag("--no-checkpoints", no_checkpoints, "skip checkpoint files");

  CLI11_PARSE(app, argc, argv);

  try {
    harness::ExperimentConfig cfg = harness::ExperimentConfig::defaults();
    if (!config_file.empty()) cfg = harness::load_config(config_file, cfg);
    if (!mode.empty()) cfg.mode = harness::mode_from_string(mode);
    if (!domains.empty()) {
      cfg.domains.clear();
      for (const auto& d : split(domains)) cfg.domains.push_back(env::bundled_domain(d));
    }
    if (!profile.empty()) cfg.profile = env::bundled_profile(profile);
    if (dialogues > 0) cfg.dialogues = dialogues;
    if (milestone > 0) cfg.milestone_every = milestone;
    if (eval > 0) cfg.eval_dialogues = eval;
    if (seed >= 0) cfg.seeds = {static_cast<std::uint64_t>(seed)};
    if (!seeds.empty()) cfg.seeds = parse_seeds(seeds);
    if (no_hierarchy) cfg.policy.hierarchical = false;
    if (no_noise) cfg.policy.noisy = false;
    if (serial) cfg.serial = true;
    if (total_count) cfg.count_per_domain = false;
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (episode_log) cfg.write_episode_log = true;
    if (no_checkpoints) cfg.write_checkpoints = false;
    cfg.validate();

    const harness::ExperimentResult result = harness::run_experiment(cfg);
    harness::write_curve(std::cout, result.mean);
  } catch (const std::exception& e) {
    log::error(e.what());
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
