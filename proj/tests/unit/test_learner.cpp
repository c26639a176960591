#include <doctest.h>

#include "fixtures.hpp"
#include "tabular.hpp"
#include "strac/errors.hpp"
#include "strac/rl/learner.hpp"

using namespace strac;
using namespace strac::rl;

namespace {

struct Setup {
  policy::GraphPolicy policy;
  nn::ParameterSet params;
  std::vector<EpisodePtr> episodes;
  std::vector<Segment> segments;
};

Setup make_setup(std::uint64_t seed, int episodes, int n, bool noisy = true,
                 const char* profile = "env3") {
  policy::PolicyConfig pc;
  pc.noisy = noisy;
  Setup s{policy::GraphPolicy(pc), {}, {}, {}};
  std::mt19937_64 rng(seed);
  s.params = s.policy.init_parameters(rng);
  s.episodes = testing::rollouts(s.policy, s.params, env::bundled_domain("cr"),
                                 env::bundled_profile(profile), episodes, seed + 1);
  s.segments = testing::all_segments(s.episodes, n);
  return s;
}

void set_param(nn::ParameterSet& params, const std::string& name, double value) {
  const auto id = params.find(name);
  REQUIRE(id.has_value());
  params[*id].setConstant(value);
}

double max_abs(const nn::Gradients& g) {
  double m = 0.0;
  for (const auto& t : g.tensors) m = std::max(m, t.cwiseAbs().maxCoeff());
  return m;
}

double max_abs_diff(const nn::Gradients& a, const nn::Gradients& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.tensors.size(); ++i) {
    m = std::max(m, (a.tensors[i] - b.tensors[i]).cwiseAbs().maxCoeff());
  }
  return m;
}

}  // namespace

TEST_CASE("loss weights and learner config validation") {
  LearnerConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.batch = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = LearnerConfig{};
  cfg.clip_norm = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = LearnerConfig{};
  cfg.weights.entropy = -1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("value gradient vanishes when targets equal the values") {
  Setup s = make_setup(1, 4, 5);
  SegmentTargets t = compute_targets(s.policy, s.params, s.segments, nullptr, VTraceConfig{});
  for (std::size_t i = 0; i < s.segments.size(); ++i) {
    for (std::size_t k = 0; k < t.vtrace[i].targets.size(); ++k) {
      t.vtrace[i].targets[k] = t.values[i][k];
    }
  }
  nn::Gradients g = nn::Gradients::zeros_like(s.params);
  const SegmentStats st = value_gradient(s.policy, s.params, s.segments, t, nullptr, g);
  CHECK(max_abs(g) == 0.0);
  CHECK(st.value_loss == 0.0);
}

TEST_CASE("value gradient on a constant value function") {
  // Zero value weights and equal biases beta: V(b) = beta for every state.
  // A one-step terminal segment with reward beta + 1 has target beta + 1,
  // so the descent gradient on the two value biases sums to -1.
  policy::GraphPolicy policy;
  std::mt19937_64 rng(2);
  nn::ParameterSet params = policy.init_parameters(rng);
  const double beta = 0.75;
  set_param(params, "head.slot_value.w_mu", 0.0);
  set_param(params, "head.global_value.w_mu", 0.0);
  set_param(params, "head.slot_value.b_mu", beta);
  set_param(params, "head.global_value.b_mu", beta);

  auto ep = std::make_shared<Episode>();
  TrajectoryStep step;
  step.features = testing::random_features(3, rng);
  step.action = ActionId{0, 0};
  step.flat = 0;
  step.reward = beta + 1.0;
  step.terminal = true;
  step.mask.assign(static_cast<std::size_t>(flat_action_count(3)), 1);
  // On-policy, so rho = 1 and the target is the reward.
  const auto out = policy.evaluate(params, step.features, nullptr);
  step.mu = std::exp(policy::masked_log_softmax(out.logits, step.mask)(0));
  ep->steps.push_back(step);
  validate_episode(*ep);
  const std::vector<Segment> segs{segment_at(ep, 0, 5)};

  const SegmentTargets t = compute_targets(policy, params, segs, nullptr, VTraceConfig{});
  CHECK(t.values[0][0] == doctest::Approx(beta).epsilon(1e-14));
  CHECK(t.vtrace[0].targets[0] == doctest::Approx(beta + 1.0).epsilon(1e-14));

  nn::Gradients g = nn::Gradients::zeros_like(params);
  value_gradient(policy, params, segs, t, nullptr, g);
  const double bias_sum = g.tensors[*params.find("head.slot_value.b_mu")].sum() +
                          g.tensors[*params.find("head.global_value.b_mu")].sum();
  CHECK(bias_sum == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("learner gradients match finite differences") {
  Setup s = make_setup(3, 3, 3);
  std::mt19937_64 rng(4);
  const policy::PolicyNoise noise = s.policy.sample_noise(rng);
  const std::vector<Segment> segs(s.segments.begin(),
                                  s.segments.begin() + std::min<std::size_t>(6, s.segments.size()));
  LearnerConfig cfg;
  cfg.vtrace.n = 3;
  cfg.weights.entropy = 0.05;  // make the entropy term visible
  const testing::GradCheck gc = testing::check_learner_gradients(s.policy, s.params, segs, &noise,
                                                                 cfg, rng, 2);
  CHECK(gc.coordinates > 100);
  MESSAGE("coordinate-wise max " << gc.max_rel_value << " " << gc.max_rel_policy);
  CHECK(gc.norm_rel_value < 1e-6);
  CHECK(gc.norm_rel_policy < 1e-6);
}

TEST_CASE("entropy gradient vanishes at the uniform policy") {
  Setup s = make_setup(5, 3, 5);
  for (const char* name : {"head.slot_pref.w_mu", "head.slot_pref.b_mu", "head.slot_prims.w_mu",
                           "head.slot_prims.b_mu", "head.global_pref.w_mu",
                           "head.global_pref.b_mu", "head.global_prims.w_mu",
                           "head.global_prims.b_mu"}) {
    set_param(s.params, name, 0.0);
  }
  const SegmentTargets t = compute_targets(s.policy, s.params, s.segments, nullptr, VTraceConfig{});
  nn::Gradients g = nn::Gradients::zeros_like(s.params);
  policy_gradient(s.policy, s.params, s.segments, t, nullptr, LossWeights{0.0, 1.0}, g);
  CHECK(max_abs(g) < 1e-12);
}

TEST_CASE("policy gradient vanishes with zero advantages and no entropy bonus") {
  Setup s = make_setup(6, 3, 5);
  SegmentTargets t = compute_targets(s.policy, s.params, s.segments, nullptr, VTraceConfig{});
  for (auto& v : t.vtrace) std::fill(v.advantages.begin(), v.advantages.end(), 0.0);
  nn::Gradients g = nn::Gradients::zeros_like(s.params);
  policy_gradient(s.policy, s.params, s.segments, t, nullptr, LossWeights{0.3, 0.0}, g);
  CHECK(max_abs(g) == 0.0);
}

TEST_CASE("gradients are additive over segments") {
  Setup s = make_setup(7, 2, 5);
  std::mt19937_64 rng(8);
  const policy::PolicyNoise noise = s.policy.sample_noise(rng);
  const std::vector<Segment> one{s.segments[0]};
  const std::vector<Segment> twice{s.segments[0], s.segments[0]};
  LearnerConfig cfg;
  GradientAccumulator a = GradientAccumulator::zeros_like(s.params);
  GradientAccumulator b = GradientAccumulator::zeros_like(s.params);
  accumulate_segments(s.policy, s.params, one, &noise, cfg, a);
  accumulate_segments(s.policy, s.params, twice, &noise, cfg, b);
  nn::Gradients doubled = a.combined();
  doubled *= 2.0;
  CHECK(max_abs_diff(doubled, b.combined()) < 1e-12 * std::max(1.0, max_abs(doubled)));
  CHECK(b.steps == 2 * a.steps);

  // Accumulating twice into one accumulator also doubles.
  accumulate_segments(s.policy, s.params, one, &noise, cfg, a);
  CHECK(max_abs_diff(a.combined(), b.combined()) < 1e-12 * std::max(1.0, max_abs(doubled)));
  a.reset();
  CHECK(a.steps == 0);
  CHECK(max_abs(a.combined()) == 0.0);
}

TEST_CASE("combined pass agrees with the separate loss gradients") {
  Setup s = make_setup(9, 5, 5);
  std::mt19937_64 rng(10);
  const policy::PolicyNoise noise = s.policy.sample_noise(rng);
  LearnerConfig cfg;
  const SegmentTargets t = compute_targets(s.policy, s.params, s.segments, &noise, cfg.vtrace);
  nn::Gradients gv = nn::Gradients::zeros_like(s.params);
  nn::Gradients gp = nn::Gradients::zeros_like(s.params);
  const SegmentStats sv = value_gradient(s.policy, s.params, s.segments, t, &noise, gv);
  const SegmentStats sp = policy_gradient(s.policy, s.params, s.segments, t, &noise, cfg.weights, gp);
  gv += gp;

  GradientAccumulator acc = GradientAccumulator::zeros_like(s.params);
  const SegmentStats sc = accumulate_segments(s.policy, s.params, s.segments, &noise, cfg, acc);
  CHECK(max_abs_diff(gv, acc.combined()) < 1e-10 * std::max(1.0, max_abs(gv)));
  CHECK(sc.steps == sv.steps);
  CHECK(acc.steps == sv.steps);
  CHECK(sc.value_loss == doctest::Approx(sv.value_loss).epsilon(1e-12));
  CHECK(sc.policy_loss == doctest::Approx(sp.policy_loss).epsilon(1e-12));
  CHECK(sc.entropy == doctest::Approx(sp.entropy).epsilon(1e-12));
}

TEST_CASE("on-policy targets are n-step returns with unit weights") {
  // Noise-free policy, data from the same parameters: pi = mu up to rounding.
  Setup s = make_setup(11, 10, 4, false, "env1");
  VTraceConfig cfg;
  cfg.n = 4;
  cfg.gamma = 0.9;
  const SegmentTargets t = compute_targets(s.policy, s.params, s.segments, nullptr, cfg);
  for (std::size_t i = 0; i < s.segments.size(); ++i) {
    const Segment& seg = s.segments[i];
    std::vector<double> r;
    for (int k = 0; k < seg.length; ++k) {
      r.push_back(seg.step(k).reward);
      CHECK(t.pi[i][static_cast<std::size_t>(k)] ==
            doctest::Approx(seg.step(k).mu).epsilon(1e-12));
      CHECK(t.vtrace[i].rho[static_cast<std::size_t>(k)] == doctest::Approx(1.0).epsilon(1e-12));
    }
    const auto ref = testing::nstep_returns(r, t.values[i], seg.ends_episode(), cfg.gamma, cfg.n);
    for (std::size_t k = 0; k < ref.size(); ++k) {
      CHECK(std::abs(t.vtrace[i].targets[k] - ref[k]) < 1e-9);
    }
  }
}

TEST_CASE("a descent step on the entropy term raises entropy") {
  Setup s = make_setup(12, 4, 5);
  const LossWeights w{0.0, 1.0};
  const SegmentTargets t = compute_targets(s.policy, s.params, s.segments, nullptr, VTraceConfig{});
  nn::Gradients g = nn::Gradients::zeros_like(s.params);
  const SegmentStats before = policy_gradient(s.policy, s.params, s.segments, t, nullptr, w, g);
  nn::ParameterSet moved = s.params;
  for (nn::ParamId id = 0; id < moved.size(); ++id) moved[id] -= 1e-3 * g.tensors[id];
  nn::Gradients unused = nn::Gradients::zeros_like(s.params);
  const SegmentTargets t2 = compute_targets(s.policy, moved, s.segments, nullptr, VTraceConfig{});
  const SegmentStats after = policy_gradient(s.policy, moved, s.segments, t2, nullptr, w, unused);
  CHECK(after.entropy > before.entropy);
}

TEST_CASE("learner update bumps the version and leaves replay alone") {
  Setup s = make_setup(13, 6, 5);
  ReplayMemory mem;
  for (const auto& ep : s.episodes) mem.append(0, ep);
  const auto before = mem.episodes(0);

  Learner learner(s.policy, s.params, LearnerConfig{}, 14);
  CHECK(learner.version() == 0);
  const SnapshotPtr snap0 = learner.snapshot();
  const int domains[] = {0, 1};
  const UpdateStats st = learner.multitask_update(mem, domains);
  CHECK(st.applied);
  CHECK(st.version == 1);
  CHECK(learner.version() == 1);
  REQUIRE(st.domains.size() == 2);
  CHECK_FALSE(st.domains[0].skipped);
  CHECK(st.domains[1].skipped);
  CHECK(st.domains[0].stats.steps > 0);

  const SnapshotPtr snap1 = learner.snapshot();
  CHECK(snap1->version == 1);
  CHECK(snap0->version == 0);
  CHECK_FALSE(snap0->params[0] == snap1->params[0]);  // old snapshot kept intact
  CHECK(snap0->params[0] == s.params[0]);

  const auto after = mem.episodes(0);
  REQUIRE(after.size() == before.size());
  for (std::size_t i = 0; i < after.size(); ++i) CHECK(after[i] == before[i]);
  CHECK(learner.adam().step_count() == 1);

  const int empty_only[] = {5};
  const UpdateStats none = learner.multitask_update(mem, empty_only);
  CHECK_FALSE(none.applied);
  CHECK(learner.version() == 1);
}

TEST_CASE("short training run beats the untrained policy on a tiny domain") {
  env::DomainSpec tiny;
  tiny.name = "tiny";
  tiny.slots = {{"colour", 3}};
  tiny.database = {{0}, {1}, {2}};
  tiny.max_turns = 10;
  const env::EnvProfile profile = env::bundled_profile("env1");

  policy::GraphPolicy policy;
  std::mt19937_64 rng(15);
  const nn::ParameterSet init = policy.init_parameters(rng);
  LearnerConfig cfg;
  cfg.adam.learning_rate = 1e-3;
  cfg.batch = 16;
  Learner learner(policy, init, cfg, 16);
  ReplayMemory mem;
  env::DialogueEnv env(tiny, profile);
  const int domains[] = {0};
  for (int u = 0; u < 200; ++u) {
    const SnapshotPtr snap = learner.snapshot();
    harness::ActorPolicy actor{&policy, &snap->params, snap->version};
    mem.append(0, harness::run_actor_dialogue(actor, env, rng).episode);
    learner.multitask_update(mem, domains);
  }
  const auto untrained = harness::evaluate_policy(policy, init, tiny, profile, 200, 17);
  const auto trained = harness::evaluate_policy(policy, learner.params(), tiny, profile, 200, 17);
  MESSAGE("untrained " << untrained.mean_reward() << " trained " << trained.mean_reward());
  CHECK(trained.mean_reward() > untrained.mean_reward() + 1.0);
}
