#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include "strac/env/dialogue_env.hpp"
#include "strac/env/domain.hpp"
#include "strac/nn/parameters.hpp"
#include "strac/policy/graph_policy.hpp"
#include "strac/rl/learner.hpp"
#include "strac/rl/replay.hpp"

namespace strac::harness {

enum class Mode { kSingle, kMulti };

struct ExperimentConfig {
  // single: one independently trained policy per listed domain.
  // multi: one shared policy trained on all listed domains.
  Mode mode = Mode::kSingle;
  std::vector<env::DomainSpec> domains;
  env::EnvProfile profile;
  int dialogues = 4000;        // training dialogues (per domain by default)
  bool count_per_domain = true;  // false: `dialogues` is the total in multi mode
  int milestone_every = 200;
  int eval_dialogues = 500;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  policy::PolicyConfig policy;  // hierarchical / noisy ablation switches live here
  rl::LearnerConfig learner;
  std::size_t replay_capacity = 1000;
  bool serial = false;
  std::filesystem::path out_dir;  // empty: write nothing
  bool write_checkpoints = true;
  bool write_episode_log = false;  // episodes_seed<k>.csv, one row per step

  static ExperimentConfig defaults();
  // Dialogues each domain sees in one run.
  int dialogues_per_domain() const;
  // Throws ConfigError: no domains, no seeds, spacing not dividing the
  // dialogue count, non-positive counts, invalid hyperparameters.
  void validate() const;
};

struct MilestoneRecord {
  std::uint64_t seed = 0;
  int dialogues = 0;  // training dialogues seen by this domain
  std::string domain;
  double success_rate = 0.0;
  double mean_reward = 0.0;
};

struct DialogueResult {
  rl::Episode episode;
  std::uint64_t version = 0;
};

// Policy used by run_actor_dialogue / evaluation.
struct ActorPolicy {
  const policy::GraphPolicy* policy = nullptr;
  const nn::ParameterSet* params = nullptr;
  std::uint64_t version = 0;
};

// Rolls one dialogue with sampled actions under one noise sample drawn at
// dialogue start (when the policy is noisy). Records mu per step.
DialogueResult run_actor_dialogue(const ActorPolicy& actor, env::DialogueEnv& env,
                                  std::mt19937_64& rng);

// Callback form used by scripted oracles: returns an action for the belief.
using ScriptedPolicy = std::function<ActionId(const env::DialogueEnv&, const ActionMask&)>;

struct EvalResult {
  int dialogues = 0;
  int successes = 0;
  double total_reward = 0.0;

  double success_rate() const { return dialogues ? double(successes) / dialogues : 0.0; }
  double mean_reward() const { return dialogues ? total_reward / dialogues : 0.0; }
};

// Greedy, noise-free evaluation; never touches replay or learner state.
EvalResult evaluate_policy(const policy::GraphPolicy& policy, const nn::ParameterSet& params,
                           const env::DomainSpec& domain, const env::EnvProfile& profile,
                           int count, std::uint64_t seed);
EvalResult evaluate_scripted(const ScriptedPolicy& policy, const env::DomainSpec& domain,
                             const env::EnvProfile& profile, int count, std::uint64_t seed);
// Uniform choice among unmasked actions.
EvalResult evaluate_random(const env::DomainSpec& domain, const env::EnvProfile& profile,
                           int count, std::uint64_t seed);

MilestoneRecord evaluate_milestone(const policy::GraphPolicy& policy,
                                   const nn::ParameterSet& params,
                                   const env::DomainSpec& domain,
                                   const env::EnvProfile& profile, int count,
                                   std::uint64_t seed, int dialogues_seen);

struct ExperimentResult {
  std::vector<MilestoneRecord> records;  // every seed, in write order
  std::vector<MilestoneRecord> mean;     // seed column holds the seed count
};

// Runs every seed. In serial mode actors and learner share one thread with
// a fixed round-robin schedule, so results are bit-reproducible. Otherwise
// one actor thread per domain feeds a learner thread. Writes, when out_dir
// is set: curve_seed<k>.csv, curve_mean.csv, train_log_seed<k>.csv and
// checkpoint files, plus episodes_seed<k>.csv when write_episode_log is
// set. Checkpoint write failures throw.
ExperimentResult run_experiment(const ExperimentConfig& config);

// Single-seed run; `log` (may be null) receives training-log rows and
// `episodes` (may be null) episode-log rows.
std::vector<MilestoneRecord> run_seed(const ExperimentConfig& config, std::uint64_t seed,
                                      std::ostream* log, std::ostream* episodes = nullptr);

std::vector<MilestoneRecord> mean_curve(const std::vector<MilestoneRecord>& records);

// Curve file: header "seed,dialogues,domain,success_rate,mean_reward".
void write_curve(std::ostream& out, const std::vector<MilestoneRecord>& records);
std::vector<MilestoneRecord> read_curve(std::istream& in);

// Training log: header
//   update,domain,steps,value_loss,policy_loss,entropy,mean_rho,grad_norm
// with per-step means of the loss terms.
void write_train_log_header(std::ostream& out);

// Deterministic rng stream for (seed, purpose, index).
std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t purpose, std::uint64_t index);

}  // namespace strac::harness
