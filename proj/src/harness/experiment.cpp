#include "strac/harness/experiment.hpp"

#include <charconv>
#include <condition_variable>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "strac/errors.hpp"
#include "strac/log.hpp"

namespace strac::harness {

namespace {

enum Stream : std::uint64_t { kInit = 1, kLearner = 2, kActor = 3, kEval = 4 };

std::string num(double x) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, end);
}

}  // namespace

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t purpose, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(purpose), static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

ExperimentConfig ExperimentConfig::defaults() {
  ExperimentConfig c;
  c.domains.push_back(env::bundled_domain("cr"));
  c.profile = env::bundled_profile("env1");
  return c;
}

int ExperimentConfig::dialogues_per_domain() const {
  if (mode == Mode::kMulti && !count_per_domain) {
    return dialogues / static_cast<int>(domains.size());
  }
  return dialogues;
}

void ExperimentConfig::validate() const {
  if (domains.empty()) throw ConfigError("no domains selected");
  for (const auto& d : domains) d.validate();
  profile.validate();
  if (seeds.empty()) throw ConfigError("at least one seed is required");
  if (dialogues < 1) throw ConfigError("dialogues must be >= 1");
  if (milestone_every < 1) throw ConfigError("milestone spacing must be >= 1");
  if (eval_dialogues < 1) throw ConfigError("eval dialogues must be >= 1");
  if (mode == Mode::kMulti && !count_per_domain &&
      dialogues % static_cast<int>(domains.size()) != 0) {
    throw ConfigError("total dialogues must split evenly across domains");
  }
  if (dialogues_per_domain() % milestone_every != 0) {
    throw ConfigError("dialogues (" + std::to_string(dialogues_per_domain()) +
                      ") not divisible by milestone spacing (" +
                      std::to_string(milestone_every) + ")");
  }
  if (replay_capacity < 1) throw ConfigError("replay capacity must be >= 1");
  learner.validate();
}

DialogueResult run_actor_dialogue(const ActorPolicy& actor, env::DialogueEnv& env,
                                  std::mt19937_64& rng) {
  const policy::PolicyConfig& pc = actor.policy->config();
  env::Observation obs = env.reset(rng);
  policy::PolicyNoise noise;
  const bool noisy = pc.noisy || pc.noisy_heads;
  if (noisy) noise = actor.policy->sample_noise(rng);

  DialogueResult result;
  result.version = actor.version;
  result.episode.policy_version = actor.version;
  BeliefFeatures features = std::move(obs.features);
  ActionMask mask = std::move(obs.mask);
  while (true) {
    const policy::PolicyOutput out =
        actor.policy->evaluate(*actor.params, features, noisy ? &noise : nullptr);
    const policy::ActionChoice choice =
        policy::select_action(out, mask, policy::SelectMode::kSample, &rng);
    env::StepResult step = env.step(choice.action, rng);
    rl::TrajectoryStep rec;
    rec.features = std::move(features);
    rec.action = choice.action;
    rec.flat = choice.flat;
    rec.reward = step.reward;
    rec.mu = choice.mu;
    rec.terminal = step.done;
    rec.mask = std::move(mask);
    result.episode.steps.push_back(std::move(rec));
    if (step.done) {
      result.episode.success = step.success;
      break;
    }
    features = std::move(step.features);
    mask = std::move(step.mask);
  }
  return result;
}

namespace {

template <typename Choose>
EvalResult evaluate_with(const env::DomainSpec& domain, const env::EnvProfile& profile,
                         int count, std::uint64_t seed, Choose choose) {
  env::DialogueEnv env(domain, profile);
  std::mt19937_64 rng = make_rng(seed, kEval, 0);
  EvalResult r;
  for (int i = 0; i < count; ++i) {
    env::Observation obs = env.reset(rng);
    BeliefFeatures features = std::move(obs.features);
    ActionMask mask = std::move(obs.mask);
    double ret = 0.0;
    while (true) {
      const ActionId a = choose(env, features, mask, rng);
      env::StepResult step = env.step(a, rng);
      ret += step.reward;
      if (step.done) {
        r.successes += step.success ? 1 : 0;
        break;
      }
      features = std::move(step.features);
      mask = std::move(step.mask);
    }
    ++r.dialogues;
    r.total_reward += ret;
  }
  return r;
}

}  // namespace

EvalResult evaluate_policy(const policy::GraphPolicy& policy, const nn::ParameterSet& params,
                           const env::DomainSpec& domain, const env::EnvProfile& profile,
                           int count, std::uint64_t seed) {
  return evaluate_with(domain, profile, count, seed,
                       [&](const env::DialogueEnv&, const BeliefFeatures& f,
                           const ActionMask& mask, std::mt19937_64&) {
                         const policy::PolicyOutput out = policy.evaluate(params, f, nullptr);
                         return policy::select_action(out, mask, policy::SelectMode::kGreedy,
                                                      nullptr)
                             .action;
                       });
}

EvalResult evaluate_scripted(const ScriptedPolicy& policy, const env::DomainSpec& domain,
                             const env::EnvProfile& profile, int count, std::uint64_t seed) {
  return evaluate_with(domain, profile, count, seed,
                       [&](const env::DialogueEnv& env, const BeliefFeatures&,
                           const ActionMask& mask, std::mt19937_64&) { return policy(env, mask); });
}

EvalResult evaluate_random(const env::DomainSpec& domain, const env::EnvProfile& profile,
                           int count, std::uint64_t seed) {
  return evaluate_with(domain, profile, count, seed,
                       [&](const env::DialogueEnv& env, const BeliefFeatures&,
                           const ActionMask& mask, std::mt19937_64& rng) {
                         std::vector<int> allowed;
                         for (std::size_t a = 0; a < mask.size(); ++a) {
                           if (mask[a]) allowed.push_back(static_cast<int>(a));
                         }
                         const auto pick = std::uniform_int_distribution<std::size_t>(
                             0, allowed.size() - 1)(rng);
                         return from_flat(allowed[pick], env.slot_count());
                       });
}

MilestoneRecord evaluate_milestone(const policy::GraphPolicy& policy,
                                   const nn::ParameterSet& params,
                                   const env::DomainSpec& domain,
                                   const env::EnvProfile& profile, int count,
                                   std::uint64_t seed, int dialogues_seen) {
  const EvalResult r = evaluate_policy(policy, params, domain, profile, count, seed);
  MilestoneRecord m;
  m.dialogues = dialogues_seen;
  m.domain = domain.name;
  m.success_rate = r.success_rate();
  m.mean_reward = r.mean_reward();
  return m;
}

void write_train_log_header(std::ostream& out) {
  out << "update,domain,steps,value_loss,policy_loss,entropy,mean_rho,grad_norm\n";
}

namespace {

// One training run of a policy over a subset of the configured domains.
class Run {
 public:
  Run(const ExperimentConfig& cfg, std::vector<int> domains, std::uint64_t seed,
      std::ostream* log, std::ostream* episodes, std::filesystem::path checkpoint)
      : cfg_(cfg),
        domains_(std::move(domains)),
        seed_(seed),
        log_(log),
        episodes_(episodes),
        checkpoint_(std::move(checkpoint)),
        policy_(cfg.policy),
        learner_(policy_, init_params(), cfg.learner, make_rng(seed, kLearner, 0)()),
        memory_(cfg.replay_capacity) {
    for (std::size_t k = 0; k < domains_.size(); ++k) {
      local_ids_.push_back(static_cast<int>(k));
      envs_.emplace_back(cfg.domains[static_cast<std::size_t>(domains_[k])], cfg.profile);
      actor_rngs_.push_back(make_rng(seed, kActor, static_cast<std::uint64_t>(domains_[k])));
    }
  }

  std::vector<MilestoneRecord> execute() {
    milestone(0);
    if (cfg_.serial) {
      serial();
    } else {
      threaded();
    }
    return std::move(records_);
  }

 private:
  nn::ParameterSet init_params() const {
    std::mt19937_64 rng = make_rng(seed_, kInit, 0);
    return policy_.init_parameters(rng);
  }

  void one_dialogue(std::size_t k) {
    const rl::SnapshotPtr snap = learner_.snapshot();
    const ActorPolicy actor{&policy_, &snap->params, snap->version};
    DialogueResult r = run_actor_dialogue(actor, envs_[k], actor_rngs_[k]);
    if (episodes_ != nullptr) {
      // One actor per domain, so the appended count is a stable index.
      const std::uint64_t index = memory_.appended(local_ids_[k]);
      std::lock_guard lock(episode_mutex_);
      rl::write_episode_log(*episodes_, envs_[k].domain().name, index, r.episode);
    }
    memory_.append(local_ids_[k], std::move(r.episode));
  }

  void update() {
    const rl::UpdateStats u = learner_.multitask_update(memory_, local_ids_);
    if (log_ == nullptr) return;
    for (const auto& d : u.domains) {
      if (d.skipped) continue;
      const double steps = static_cast<double>(d.stats.steps);
      *log_ << u.version << ','
            << cfg_.domains[static_cast<std::size_t>(domains_[static_cast<std::size_t>(d.domain)])].name
            << ',' << d.stats.steps << ',' << num(d.stats.value_loss / steps) << ','
            << num(d.stats.policy_loss / steps) << ',' << num(d.stats.entropy / steps) << ','
            << num(d.stats.rho / steps) << ',' << num(u.grad_norm) << '\n';
    }
  }

  void milestone(int seen) {
    const nn::ParameterSet& params = learner_.params();
    for (int d : domains_) {
      MilestoneRecord m = evaluate_milestone(
          policy_, params, cfg_.domains[static_cast<std::size_t>(d)], cfg_.profile,
          cfg_.eval_dialogues, seed_ * 1000003ULL + static_cast<std::uint64_t>(d), seen);
      m.seed = seed_;
      log::info("seed " + std::to_string(seed_) + " " + m.domain + " @" + std::to_string(seen) +
                ": success " + num(m.success_rate) + ", reward " + num(m.mean_reward));
      records_.push_back(std::move(m));
    }
    if (!checkpoint_.empty()) {
      std::ofstream out(checkpoint_, std::ios::binary | std::ios::trunc);
      if (out) params.save(out);
      out.flush();
      if (!out) throw IoError("failed to write checkpoint " + checkpoint_.string());
    }
  }

  void serial() {
    const int per_domain = cfg_.dialogues_per_domain();
    for (int t = 1; t <= per_domain; ++t) {
      for (std::size_t k = 0; k < domains_.size(); ++k) {
        one_dialogue(k);
        update();
      }
      if (t % cfg_.milestone_every == 0) milestone(t);
    }
  }

  // Actors run freely up to the next milestone boundary and then wait until
  // the learner has consumed their dialogues and evaluated.
  void threaded() {
    const int per_domain = cfg_.dialogues_per_domain();
    const std::size_t actors = domains_.size();
    std::mutex m;
    std::condition_variable cv;
    int boundary = cfg_.milestone_every;
    std::uint64_t completed = 0;
    bool stop = false;
    std::exception_ptr failure;

    auto fail = [&](std::exception_ptr e) {
      std::lock_guard lock(m);
      if (!failure) failure = e;
      stop = true;
      cv.notify_all();
    };

    std::vector<std::thread> threads;
    for (std::size_t k = 0; k < actors; ++k) {
      threads.emplace_back([&, k] {
        try {
          for (int done = 0; done < per_domain;) {
            {
              std::unique_lock lock(m);
              cv.wait(lock, [&] { return stop || done < boundary; });
              if (stop) return;
            }
            one_dialogue(k);
            ++done;
            std::lock_guard lock(m);
            ++completed;
            cv.notify_all();
          }
        } catch (...) {
          fail(std::current_exception());
        }
      });
    }

    std::thread learner([&] {
      try {
        std::uint64_t processed = 0;
        for (int seen = cfg_.milestone_every; seen <= per_domain; seen += cfg_.milestone_every) {
          const std::uint64_t target = static_cast<std::uint64_t>(seen) * actors;
          while (processed < target) {
            {
              std::unique_lock lock(m);
              cv.wait(lock, [&] { return stop || completed > processed; });
              if (stop) return;
            }
            update();
            ++processed;
          }
          milestone(seen);
          std::lock_guard lock(m);
          boundary = seen + cfg_.milestone_every;
          cv.notify_all();
        }
      } catch (...) {
        fail(std::current_exception());
      }
    });

    learner.join();
    {
      std::lock_guard lock(m);
      stop = true;
      cv.notify_all();
    }
    for (auto& t : threads) t.join();
    if (failure) std::rethrow_exception(failure);
  }

  const ExperimentConfig& cfg_;
  std::vector<int> domains_;
  std::vector<int> local_ids_;
  std::uint64_t seed_;
  std::ostream* log_;
  std::ostream* episodes_;
  std::mutex episode_mutex_;
  std::filesystem::path checkpoint_;
  policy::GraphPolicy policy_;
  rl::Learner learner_;
  rl::ReplayMemory memory_;
  std::vector<env::DialogueEnv> envs_;
  std::vector<std::mt19937_64> actor_rngs_;
  std::vector<MilestoneRecord> records_;
};

std::filesystem::path checkpoint_path(const ExperimentConfig& cfg, std::uint64_t seed,
                                      const std::string& suffix) {
  if (cfg.out_dir.empty() || !cfg.write_checkpoints) return {};
  return cfg.out_dir / ("checkpoint_seed" + std::to_string(seed) + suffix + ".bin");
}

}  // namespace

std::vector<MilestoneRecord> run_seed(const ExperimentConfig& config, std::uint64_t seed,
                                      std::ostream* log, std::ostream* episodes) {
  config.validate();
  std::vector<MilestoneRecord> out;
  if (config.mode == Mode::kMulti) {
    std::vector<int> all;
    for (std::size_t d = 0; d < config.domains.size(); ++d) all.push_back(static_cast<int>(d));
    out = Run(config, all, seed, log, episodes, checkpoint_path(config, seed, "")).execute();
  } else {
    for (std::size_t d = 0; d < config.domains.size(); ++d) {
      const std::string suffix =
          config.domains.size() > 1 ? "_" + config.domains[d].name : std::string();
      auto part = Run(config, {static_cast<int>(d)}, seed, log, episodes,
                      checkpoint_path(config, seed, suffix))
                      .execute();
      out.insert(out.end(), part.begin(), part.end());
    }
  }
  return out;
}

std::vector<MilestoneRecord> mean_curve(const std::vector<MilestoneRecord>& records) {
  struct Acc {
    std::size_t order;
    MilestoneRecord sum;
    int count = 0;
  };
  std::map<std::pair<int, std::string>, Acc> groups;
  for (const auto& r : records) {
    auto [it, fresh] = groups.try_emplace({r.dialogues, r.domain}, Acc{groups.size(), {}, 0});
    Acc& a = it->second;
    if (fresh) {
      a.sum.dialogues = r.dialogues;
      a.sum.domain = r.domain;
    }
    a.sum.success_rate += r.success_rate;
    a.sum.mean_reward += r.mean_reward;
    ++a.count;
  }
  std::vector<MilestoneRecord> out(groups.size());
  for (auto& [key, a] : groups) {
    MilestoneRecord m = a.sum;
    m.seed = static_cast<std::uint64_t>(a.count);
    m.success_rate /= a.count;
    m.mean_reward /= a.count;
    out[a.order] = std::move(m);
  }
  return out;
}

void write_curve(std::ostream& out, const std::vector<MilestoneRecord>& records) {
  out << "seed,dialogues,domain,success_rate,mean_reward\n";
  for (const auto& r : records) {
    out << r.seed << ',' << r.dialogues << ',' << r.domain << ',' << num(r.success_rate) << ','
        << num(r.mean_reward) << '\n';
  }
}

std::vector<MilestoneRecord> read_curve(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "seed,dialogues,domain,success_rate,mean_reward") {
    throw DataError("not a curve file");
  }
  std::vector<MilestoneRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string seed, dialogues, domain, success, reward;
    if (!std::getline(row, seed, ',') || !std::getline(row, dialogues, ',') ||
        !std::getline(row, domain, ',') || !std::getline(row, success, ',') ||
        !std::getline(row, reward)) {
      throw DataError("malformed curve row: " + line);
    }
    MilestoneRecord r;
    r.seed = std::stoull(seed);
    r.dialogues = std::stoi(dialogues);
    r.domain = domain;
    r.success_rate = std::stod(success);
    r.mean_reward = std::stod(reward);
    out.push_back(std::move(r));
  }
  return out;
}

namespace {

template <typename Fn>
void write_file(const std::filesystem::path& path, Fn fn) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string());
  fn(out);
  out.flush();
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config) {
  config.validate();
  if (!config.out_dir.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(config.out_dir, ec);
    if (ec) throw IoError("cannot create " + config.out_dir.string() + ": " + ec.message());
  }
  ExperimentResult result;
  for (std::uint64_t seed : config.seeds) {
    std::vector<MilestoneRecord> records;
    if (config.out_dir.empty()) {
      records = run_seed(config, seed, nullptr);
    } else {
      std::ofstream episodes;
      const auto episode_file = config.out_dir / ("episodes_seed" + std::to_string(seed) + ".csv");
      if (config.write_episode_log) {
        episodes.open(episode_file, std::ios::trunc);
        if (!episodes) throw IoError("cannot open " + episode_file.string());
        rl::write_episode_log_header(episodes);
      }
      write_file(config.out_dir / ("train_log_seed" + std::to_string(seed) + ".csv"),
                 [&](std::ostream& log) {
                   write_train_log_header(log);
                   records = run_seed(config, seed, &log,
                                      config.write_episode_log ? &episodes : nullptr);
                 });
      if (config.write_episode_log) {
        episodes.flush();
        if (!episodes) throw IoError("failed writing " + episode_file.string());
      }
      write_file(config.out_dir / ("curve_seed" + std::to_string(seed) + ".csv"),
                 [&](std::ostream& out) { write_curve(out, records); });
    }
    result.records.insert(result.records.end(), records.begin(), records.end());
  }
  result.mean = mean_curve(result.records);
  if (!config.out_dir.empty()) {
    write_file(config.out_dir / "curve_mean.csv",
               [&](std::ostream& out) { write_curve(out, result.mean); });
  }
  return result;
}

}  // namespace strac::harness
