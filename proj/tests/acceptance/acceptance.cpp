// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. `strac_acceptance --only 1,2,3` runs a subset; learning
// curves of the long runs land under --out.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "fixtures.hpp"
#include "strac/harness/experiment.hpp"
#include "strac/log.hpp"
#include "tabular.hpp"

namespace {

using namespace strac;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(double x, int precision = 3) {
  std::ostringstream s;
  s << std::setprecision(precision) << x;
  return s.str();
}

// Final / initial records of every seed for one domain.
struct SeedSummary {
  std::vector<double> initial, final;
};

SeedSummary summarize(const std::vector<harness::MilestoneRecord>& records,
                      const std::string& domain, int final_dialogues) {
  SeedSummary s;
  for (const auto& r : records) {
    if (r.domain != domain) continue;
    if (r.dialogues == 0) s.initial.push_back(r.success_rate);
    if (r.dialogues == final_dialogues) s.final.push_back(r.success_rate);
  }
  return s;
}

double mean(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double stddev(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

std::string list(const std::vector<double>& v) {
  std::string out;
  for (double x : v) out += (out.empty() ? "" : " ") + fmt(x);
  return "[" + out + "]";
}

// Gradient check on the full policy with 3 slots and frozen noise.
Outcome gradient_correctness() {
  const auto start = Clock::now();
  const policy::GraphPolicy policy;
  const env::DomainSpec domain = env::bundled_domain("cr");
  rl::LearnerConfig cfg;
  cfg.vtrace.n = 3;
  double worst_value = 0.0, worst_policy = 0.0, coord_value = 0.0, coord_policy = 0.0;
  int coordinates = 0;
  const int instances = 20;
  for (int i = 0; i < instances; ++i) {
    std::mt19937_64 rng(1000 + static_cast<unsigned>(i));
    const nn::ParameterSet params = policy.init_parameters(rng);
    const policy::PolicyNoise noise = policy.sample_noise(rng);
    const auto episodes = testing::rollouts(policy, params, domain, env::bundled_profile("env3"),
                                            2, 2000 + static_cast<unsigned>(i));
    auto segments = testing::all_segments(episodes, cfg.vtrace.n);
    std::shuffle(segments.begin(), segments.end(), rng);
    segments.resize(std::min<std::size_t>(segments.size(), 4));
    const testing::GradCheck gc =
        testing::check_learner_gradients(policy, params, segments, &noise, cfg, rng, 2, 1e-6);
    worst_value = std::max(worst_value, gc.norm_rel_value);
    worst_policy = std::max(worst_policy, gc.norm_rel_policy);
    coord_value = std::max(coord_value, gc.max_rel_value);
    coord_policy = std::max(coord_policy, gc.max_rel_policy);
    coordinates += gc.coordinates;
  }
  const double elapsed = seconds_since(start);
  Outcome o;
  o.pass = worst_value < 1e-5 && worst_policy < 1e-5 && elapsed < 60.0;
  o.detail = std::to_string(instances) + " instances, " + std::to_string(coordinates) +
             " coordinates; max norm-wise relative error value " + fmt(worst_value) +
             ", policy " + fmt(worst_policy) + " (< 1e-5); largest single-coordinate error " +
             fmt(coord_value) + " / " + fmt(coord_policy) + "; " + fmt(elapsed) + " s (< 60 s)";
  return o;
}

Outcome vtrace_oracle() {
  const auto start = Clock::now();
  std::mt19937_64 rng(7);
  double err_untruncated = 0.0, err_truncated = 0.0;
  for (int i = 0; i < 50; ++i) {
    const testing::TabularMdp m = testing::random_mdp(rng);
    const testing::Policy mu = testing::random_policy(rng);
    const testing::Policy pi = testing::random_policy(rng);
    rl::VTraceConfig cfg;
    cfg.gamma = 0.9;
    cfg.n = 2;
    cfg.rho_bar = rl::VTraceConfig::kUntruncated;
    cfg.c_bar = 5.0;
    err_untruncated = std::max(
        err_untruncated, testing::max_abs_diff(testing::vtrace_fixed_point(m, mu, pi, cfg),
                                               testing::policy_value(m, pi, cfg.gamma)));
    cfg.rho_bar = 1.0;
    cfg.c_bar = 1.0;
    const testing::Policy pi_bar = testing::truncated_policy(mu, pi, cfg.rho_bar);
    err_truncated = std::max(
        err_truncated, testing::max_abs_diff(testing::vtrace_fixed_point(m, mu, pi, cfg),
                                             testing::policy_value(m, pi_bar, cfg.gamma)));
  }
  const double elapsed = seconds_since(start);
  Outcome o;
  o.pass = err_untruncated < 1e-6 && err_truncated < 1e-6 && elapsed < 60.0;
  o.detail = "50 MDPs; |V - V^pi| " + fmt(err_untruncated) + " (rho_bar=inf), |V - V^pi_bar| " +
             fmt(err_truncated) + " (rho_bar=1) (< 1e-6); " + fmt(elapsed) + " s (< 60 s)";
  return o;
}

Outcome on_policy_reduction() {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    rl::VTraceConfig cfg;
    cfg.rho_bar = 1.0;
    cfg.c_bar = 1.0;
    cfg.n = 1 + trial % 8;
    cfg.gamma = std::uniform_real_distribution<double>(0.5, 1.0)(rng);
    const std::size_t len = 1 + static_cast<std::size_t>(rng() % static_cast<unsigned>(cfg.n));
    std::vector<double> r(len), v(len + 1), p(len);
    for (auto& x : r) x = u(rng);
    for (auto& x : v) x = u(rng);
    for (auto& x : p) x = std::uniform_real_distribution<double>(1e-3, 1.0)(rng);
    const bool ends = rng() % 2 == 0;
    const rl::TruncatedWeights w = rl::truncated_weights(p, p, cfg);
    const rl::VTraceResult out = rl::vtrace_targets(r, v, w.rho, w.c, ends, cfg);
    const auto ref = testing::nstep_returns(r, v, ends, cfg.gamma, cfg.n);
    for (std::size_t k = 0; k < len; ++k) worst = std::max(worst, std::abs(out.targets[k] - ref[k]));
  }
  return {worst <= 1e-12, "1000 segments; max |v - G_n| " + fmt(worst) + " (<= 1e-12)"};
}

Outcome structural_invariants() {
  const policy::GraphPolicy policy;
  std::mt19937_64 rng(13);
  double equivariance = 0.0, normalisation = 0.0;
  bool hierarchy_exact = true, value_exact = true;
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 1 + trial % 11;
    const nn::ParameterSet params = policy.init_parameters(rng);
    const policy::PolicyNoise noise = policy.sample_noise(rng);
    const BeliefFeatures f = testing::random_features(n, rng);
    std::vector<int> sigma(static_cast<std::size_t>(n));
    std::iota(sigma.begin(), sigma.end(), 0);
    std::shuffle(sigma.begin(), sigma.end(), rng);
    BeliefFeatures g = f;
    for (int i = 0; i < n; ++i) {
      g.slots[static_cast<std::size_t>(i)] = f.slots[static_cast<std::size_t>(sigma[static_cast<std::size_t>(i)])];
    }
    const policy::PolicyOutput a = policy.evaluate(params, f, &noise);
    const policy::PolicyOutput b = policy.evaluate(params, g, &noise);
    equivariance = std::max(equivariance, std::abs(a.value - b.value));
    equivariance = std::max(equivariance, (a.logits.head(kGlobalActions) - b.logits.head(kGlobalActions)).cwiseAbs().maxCoeff());
    for (int i = 0; i < n; ++i) {
      const int src = sigma[static_cast<std::size_t>(i)];
      equivariance = std::max(equivariance,
                              (b.logits.segment(to_flat({i + 1, 0}, n), kSlotActions) -
                               a.logits.segment(to_flat({src + 1, 0}, n), kSlotActions))
                                  .cwiseAbs()
                                  .maxCoeff());
      equivariance = std::max(equivariance, std::abs(b.node_value(i + 1) - a.node_value(src + 1)));
    }
    for (const auto* o : {&a, &b}) {
      for (int i = 0; i <= n; ++i) {
        const int width = i == 0 ? kGlobalActions : kSlotActions;
        const int begin = i == 0 ? 0 : to_flat({i, 0}, n);
        hierarchy_exact = hierarchy_exact && o->logits.segment(begin, width).maxCoeff() == o->node_pref(i);
      }
      value_exact = value_exact && o->value == o->p_slot.cwiseProduct(o->node_value).sum();
      normalisation = std::max({normalisation, std::abs(o->pi.sum() - 1.0), std::abs(o->p_slot.sum() - 1.0)});
    }
  }

  // Parameters trained on a 3-slot and on an 11-slot domain serialise to the
  // same number of bytes.
  auto trained_size = [&](const char* name) {
    std::mt19937_64 r(17);
    const nn::ParameterSet params = policy.init_parameters(r);
    rl::ReplayMemory mem;
    for (const auto& ep : testing::rollouts(policy, params, env::bundled_domain(name),
                                            env::bundled_profile("env1"), 3, 18)) {
      mem.append(0, ep);
    }
    rl::Learner learner(policy, params, rl::LearnerConfig{}, 19);
    const int domains[] = {0};
    learner.multitask_update(mem, domains);
    std::ostringstream out;
    learner.params().save(out);
    return out.str().size();
  };
  const std::size_t small = trained_size("cr"), large = trained_size("lap");

  Outcome o;
  o.pass = equivariance < 1e-9 && hierarchy_exact && value_exact && normalisation < 1e-12 &&
           small == large;
  o.detail = "equivariance " + fmt(equivariance) + " (< 1e-9); max_j f_ij == h_i " +
             (hierarchy_exact ? "exact" : "VIOLATED") + "; V == p_slot.q " +
             (value_exact ? "exact" : "VIOLATED") + "; normalisation " + fmt(normalisation) +
             " (< 1e-12); checkpoint bytes 3-slot " + std::to_string(small) + ", 11-slot " +
             std::to_string(large);
  return o;
}

harness::ExperimentConfig base_config(const fs::path& out) {
  harness::ExperimentConfig c = harness::ExperimentConfig::defaults();
  c.seeds = {0, 1, 2, 3, 4};
  c.serial = true;
  c.eval_dialogues = 500;
  c.out_dir = out;
  c.write_checkpoints = true;
  return c;
}

Outcome learning(const fs::path& out) {
  harness::ExperimentConfig c = base_config(out / "learning_cr_env1");
  c.dialogues = 4000;
  c.milestone_every = 400;
  const auto start = Clock::now();
  const harness::ExperimentResult r = harness::run_experiment(c);
  const double per_seed = seconds_since(start) / static_cast<double>(c.seeds.size());
  const SeedSummary s = summarize(r.records, "cr", c.dialogues);
  const double final = mean(s.final), initial = mean(s.initial);
  Outcome o;
  o.pass = final >= 0.90 && final - initial >= 0.3 && per_seed <= 1800.0;
  o.detail = "cr/env1, 4000 dialogues, seeds 0-4: final success " + fmt(final) + " " +
             list(s.final) + " (>= 0.90); untrained " + fmt(initial) + ", gain " +
             fmt(final - initial) + " (>= 0.3); " + fmt(per_seed / 60.0) + " min/seed";
  return o;
}

Outcome multitask(const fs::path& out) {
  const std::vector<env::DomainSpec> domains{env::bundled_domain("cr"), env::bundled_domain("sfr"),
                                             env::bundled_domain("lap")};
  auto run = [&](harness::Mode mode, const char* tag) {
    harness::ExperimentConfig c = base_config(out / tag);
    c.mode = mode;
    c.domains = domains;
    c.dialogues = 400;
    c.milestone_every = 200;
    const auto r = harness::run_experiment(c);
    std::vector<double> per_domain;
    std::string text;
    for (const auto& d : domains) {
      const double m = mean(summarize(r.records, d.name, 400).final);
      per_domain.push_back(m);
      text += d.name + " " + fmt(m) + " ";
    }
    return std::make_pair(mean(per_domain), text);
  };
  const auto multi = run(harness::Mode::kMulti, "multitask_M");
  const auto single = run(harness::Mode::kSingle, "multitask_S");
  Outcome o;
  o.pass = multi.first >= single.first - 0.02;
  o.detail = "env1, 400 dialogues per domain, seeds 0-4: STRAC-M " + fmt(multi.first) + " (" +
             multi.second + ") vs STRAC-S " + fmt(single.first) + " (" + single.second +
             "); needs M >= S - 0.02";
  return o;
}

// Across-seed standard deviation of success at every trained milestone,
// averaged over milestones.
double curve_spread(const std::vector<harness::MilestoneRecord>& records) {
  std::map<int, std::vector<double>> by_milestone;
  for (const auto& r : records) {
    if (r.dialogues > 0) by_milestone[r.dialogues].push_back(r.success_rate);
  }
  std::vector<double> sds;
  for (const auto& [d, v] : by_milestone) sds.push_back(stddev(v));
  return mean(sds);
}

inline constexpr int kAblationDialogues = 2000;
inline constexpr int kAblationMilestone = 250;

Outcome ablations(const fs::path& out) {
  auto run = [&](const char* profile, bool hierarchical, bool noisy, const std::string& tag) {
    harness::ExperimentConfig c = base_config(out / ("ablation_" + tag));
    c.domains = {env::bundled_domain("lap")};
    c.profile = env::bundled_profile(profile);
    c.dialogues = kAblationDialogues;
    c.milestone_every = kAblationMilestone;
    c.eval_dialogues = 200;
    c.policy.hierarchical = hierarchical;
    c.policy.noisy = noisy;
    return harness::run_experiment(c).records;
  };
  const auto full2 = run("env2", true, true, "lap_env2_full");
  const auto nohier2 = run("env2", false, true, "lap_env2_nohier");
  const auto nonoise2 = run("env2", true, false, "lap_env2_nonoise");
  const auto full4 = run("env4", true, true, "lap_env4_full");
  const auto nonoise4 = run("env4", true, false, "lap_env4_nonoise");

  const double full_final = mean(summarize(full2, "lap", kAblationDialogues).final);
  const double nohier_final = mean(summarize(nohier2, "lap", kAblationDialogues).final);
  const double sd_full = (curve_spread(full2) + curve_spread(full4)) / 2.0;
  const double sd_nonoise = (curve_spread(nonoise2) + curve_spread(nonoise4)) / 2.0;
  Outcome o;
  o.pass = nohier_final < full_final && sd_nonoise > sd_full;
  o.detail = "lap, " + std::to_string(kAblationDialogues) +
             " dialogues, seeds 0-4: env2 final success full " + fmt(full_final) +
             " vs -hierarchy " + fmt(nohier_final) + "; across-seed sd (env2 " +
             fmt(curve_spread(full2)) + "/" + fmt(curve_spread(nonoise2)) + ", env4 " +
             fmt(curve_spread(full4)) + "/" + fmt(curve_spread(nonoise4)) + ") full " +
             fmt(sd_full) + " vs -noisynet " + fmt(sd_nonoise);
  return o;
}

std::string slurp(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

Outcome determinism(const fs::path& out) {
  const fs::path a = out / "determinism_a", b = out / "determinism_b";
  fs::remove_all(a);
  fs::remove_all(b);
  auto run = [](const fs::path& dir) {
    const std::string cmd = std::string(STRAC_CLI_PATH) +
                            " --serial --seed 3 --domains cr,sfr --mode multi --profile env3"
                            " --dialogues 100 --milestone 50 --eval-dialogues 50 --out " +
                            dir.string() + " > /dev/null 2>&1";
    return std::system(cmd.c_str());
  };
  const int ra = run(a), rb = run(b);
  bool same = ra == 0 && rb == 0;
  std::string detail = "two CLI runs (--serial, seed 3, cr+sfr multi): ";
  for (const char* f : {"curve_seed3.csv", "curve_mean.csv"}) {
    const std::string x = slurp(a / f), y = slurp(b / f);
    const bool eq = !x.empty() && x == y;
    same = same && eq;
    detail += std::string(f) + (eq ? " identical " : " DIFFERENT ");
  }
  return {same, detail + "(" + std::to_string(slurp(a / "curve_seed3.csv").size()) + " bytes)"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"STRAC acceptance criteria"};
  std::string only, out = "acceptance_runs";
  app.add_option("--only", only, "comma-separated criterion numbers");
  app.add_option("--out", out, "directory for learning-curve outputs");
  CLI11_PARSE(app, argc, argv);

  std::set<int> selected;
  std::stringstream in(only);
  for (std::string item; std::getline(in, item, ',');) {
    if (!item.empty()) selected.insert(std::stoi(item));
  }
  const fs::path out_dir = fs::absolute(out);
  fs::create_directories(out_dir);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient correctness", gradient_correctness},
      {"V-trace oracle equivalence", vtrace_oracle},
      {"on-policy reduction", on_policy_reduction},
      {"structural invariants", structural_invariants},
      {"learning on cr/env1", [&] { return learning(out_dir); }},
      {"multi-task advantage at 400 dialogues", [&] { return multitask(out_dir); }},
      {"ablations", [&] { return ablations(out_dir); }},
      {"serial determinism", [&] { return determinism(out_dir); }},
  };

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  [" << id << "] " << criteria[i].first << ": "
              << o.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
