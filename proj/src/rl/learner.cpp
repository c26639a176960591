#include "strac/rl/learner.hpp"

#include <cmath>
#include <string>

#include "strac/errors.hpp"
#include "strac/log.hpp"

namespace strac::rl {

using nn::Tensor;
using nn::Var;

void LossWeights::validate() const {
  if (!(policy > 0.0)) throw ConfigError("lambda_1 must be > 0");
  if (!(entropy >= 0.0)) throw ConfigError("lambda_2 must be >= 0");
}

void LearnerConfig::validate() const {
  vtrace.validate();
  weights.validate();
  if (batch < 1) throw ConfigError("batch must be >= 1");
  if (!(clip_norm > 0.0)) throw ConfigError("clip_norm must be > 0");
  if (!(adam.learning_rate > 0.0)) throw ConfigError("learning rate must be > 0");
}

GradientAccumulator GradientAccumulator::zeros_like(const nn::ParameterSet& params) {
  return {nn::Gradients::zeros_like(params), nn::Gradients::zeros_like(params), 0};
}

void GradientAccumulator::reset() {
  d_theta.set_zero();
  d_beta.set_zero();
  steps = 0;
}

nn::Gradients GradientAccumulator::combined() const {
  nn::Gradients g = d_theta;
  g += d_beta;
  return g;
}

namespace {

// Column layout of one batched forward over segment states followed, per
// segment, by its bootstrap state when the segment stops inside an episode.
struct Layout {
  policy::PolicyBatch batch;
  std::vector<std::vector<int>> step_col;
  std::vector<int> boot_col;  // -1 when the segment ends the episode
  Tensor mask;
  std::vector<int> actions;
  std::size_t steps = 0;
};

Layout make_layout(std::span<const Segment> segments) {
  if (segments.empty()) throw UsageError("no segments to learn from");
  Layout lay;
  std::vector<const BeliefFeatures*> states;
  std::vector<const ActionMask*> masks;
  lay.step_col.resize(segments.size());
  lay.boot_col.assign(segments.size(), -1);
  for (std::size_t s = 0; s < segments.size(); ++s) {
    const Segment& seg = segments[s];
    if (seg.length < 1) throw UsageError("empty segment");
    for (int k = 0; k < seg.length; ++k) {
      lay.step_col[s].push_back(static_cast<int>(states.size()));
      states.push_back(&seg.step(k).features);
      masks.push_back(&seg.step(k).mask);
      lay.actions.push_back(seg.step(k).flat);
      ++lay.steps;
    }
    if (!seg.ends_episode()) {
      lay.boot_col[s] = static_cast<int>(states.size());
      states.push_back(&seg.bootstrap_state());
      masks.push_back(nullptr);
      lay.actions.push_back(0);
    }
  }
  lay.batch = policy::PolicyBatch::from_features(states);
  const int actions = flat_action_count(lay.batch.slots);
  lay.mask = Tensor::Ones(actions, static_cast<Eigen::Index>(states.size()));
  for (std::size_t b = 0; b < masks.size(); ++b) {
    if (masks[b] == nullptr) continue;
    for (int a = 0; a < actions; ++a) {
      lay.mask(a, static_cast<Eigen::Index>(b)) = (*masks[b])[static_cast<std::size_t>(a)] ? 1.0 : 0.0;
    }
  }
  return lay;
}

enum Terms : unsigned { kValue = 1u, kPolicy = 2u };

struct RunRequest {
  unsigned terms = 0;
  const SegmentTargets* given = nullptr;  // null: compute from this forward
  const VTraceConfig* vtrace = nullptr;
  LossWeights weights;
  nn::Gradients* value_into = nullptr;
  nn::Gradients* policy_into = nullptr;
  SegmentTargets* targets_out = nullptr;
};

SegmentTargets targets_from(const Layout& lay, std::span<const Segment> segments,
                            const Tensor& value, const Tensor& logp,
                            const VTraceConfig& cfg) {
  SegmentTargets t;
  t.values.resize(segments.size());
  t.pi.resize(segments.size());
  t.vtrace.reserve(segments.size());
  for (std::size_t s = 0; s < segments.size(); ++s) {
    const Segment& seg = segments[s];
    auto& v = t.values[s];
    auto& pi = t.pi[s];
    std::vector<double> mu, rewards;
    for (int k = 0; k < seg.length; ++k) {
      const int col = lay.step_col[s][static_cast<std::size_t>(k)];
      v.push_back(value(0, col));
      pi.push_back(std::exp(logp(lay.actions[static_cast<std::size_t>(col)], col)));
      mu.push_back(seg.step(k).mu);
      rewards.push_back(seg.step(k).reward);
    }
    v.push_back(lay.boot_col[s] >= 0 ? value(0, lay.boot_col[s]) : 0.0);
    const TruncatedWeights w = truncated_weights(pi, mu, cfg);
    t.vtrace.push_back(vtrace_targets(rewards, v, w.rho, w.c, seg.ends_episode(), cfg));
  }
  return t;
}

SegmentStats run(const policy::GraphPolicy& policy, const nn::ParameterSet& params,
                 std::span<const Segment> segments, const policy::PolicyNoise* noise,
                 const RunRequest& req) {
  const Layout lay = make_layout(segments);
  const auto cols = static_cast<Eigen::Index>(lay.actions.size());

  nn::Tape tape;
  nn::ParamBinder bind(tape, params, req.terms != 0);
  const policy::PolicyGraph g = policy.forward(bind, lay.batch, noise);
  const Var logp = nn::masked_log_softmax_cols(tape, g.logits, lay.mask);
  const Tensor& value = tape.value(g.value);
  const Tensor& logp_v = tape.value(logp);

  SegmentTargets computed;
  const SegmentTargets* targets = req.given;
  if (targets == nullptr) {
    computed = targets_from(lay, segments, value, logp_v, *req.vtrace);
    targets = &computed;
  }
  if (targets->vtrace.size() != segments.size()) {
    throw UsageError("targets do not match the segments");
  }

  SegmentStats stats;
  stats.steps = lay.steps;
  Tensor target_row = value;
  Tensor value_w = Tensor::Zero(1, cols);
  Tensor policy_w = Tensor::Zero(1, cols);
  Tensor entropy_w = Tensor::Zero(1, cols);
  const Tensor entropy = [&] {
    nn::Tape scratch;
    return scratch.value(nn::entropy_from_log_probs(scratch, scratch.constant(logp_v), lay.mask));
  }();

  for (std::size_t s = 0; s < segments.size(); ++s) {
    const VTraceResult& vt = targets->vtrace[s];
    for (int k = 0; k < segments[s].length; ++k) {
      const int col = lay.step_col[s][static_cast<std::size_t>(k)];
      const auto kk = static_cast<std::size_t>(k);
      const double lp = logp_v(lay.actions[static_cast<std::size_t>(col)], col);
      const double diff = vt.targets[kk] - value(0, col);
      target_row(0, col) = vt.targets[kk];
      value_w(0, col) = 0.5;
      stats.value_loss += 0.5 * diff * diff;
      stats.rho += vt.rho[kk];
      stats.entropy += entropy(0, col);
      if (lp < kMinLogProb) {
        // Stale-policy collapse: the clamped log has zero gradient.
        ++stats.clamped;
        stats.policy_loss -= vt.rho[kk] * vt.advantages[kk] * kMinLogProb;
      } else {
        policy_w(0, col) = -req.weights.policy * vt.rho[kk] * vt.advantages[kk];
        stats.policy_loss -= vt.rho[kk] * vt.advantages[kk] * lp;
      }
      entropy_w(0, col) = -req.weights.entropy;
    }
  }
  if (stats.clamped > 0) {
    log::warn("clamped log pi(a) on " + std::to_string(stats.clamped) +
              " steps; behaviour policy far from the learner");
  }
  if (req.targets_out != nullptr) *req.targets_out = *targets;
  if (req.terms == 0) return stats;

  auto backprop = [&](Var loss, nn::Gradients& into) {
    nn::check_finite(tape.value(loss), "learner loss");
    tape.backward(loss);
    bind.accumulate_grads(into);
  };

  Var value_loss = nn::weighted_sum(
      tape, nn::square(tape, nn::sub(tape, g.value, tape.constant(target_row))), value_w);
  Var policy_loss = nn::add(
      tape, nn::weighted_sum(tape, nn::pick_rows(tape, logp, lay.actions), policy_w),
      nn::weighted_sum(tape, nn::entropy_from_log_probs(tape, logp, lay.mask), entropy_w));

  const bool both = (req.terms & kValue) && (req.terms & kPolicy);
  if (both && req.value_into == req.policy_into) {
    backprop(nn::add(tape, value_loss, policy_loss), *req.value_into);
  } else if (both) {
    // Separate sinks need separate passes; rerun for the policy part.
    backprop(value_loss, *req.value_into);
    RunRequest rest = req;
    rest.terms = kPolicy;
    rest.given = targets;
    rest.targets_out = nullptr;
    run(policy, params, segments, noise, rest);
  } else if (req.terms & kValue) {
    backprop(value_loss, *req.value_into);
  } else {
    backprop(policy_loss, *req.policy_into);
  }
  return stats;
}

}  // namespace

SegmentTargets compute_targets(const policy::GraphPolicy& policy,
                               const nn::ParameterSet& params,
                               std::span<const Segment> segments,
                               const policy::PolicyNoise* noise,
                               const VTraceConfig& cfg) {
  SegmentTargets out;
  RunRequest req;
  req.vtrace = &cfg;
  req.targets_out = &out;
  run(policy, params, segments, noise, req);
  return out;
}

SegmentStats value_gradient(const policy::GraphPolicy& policy,
                            const nn::ParameterSet& params,
                            std::span<const Segment> segments,
                            const SegmentTargets& targets,
                            const policy::PolicyNoise* noise, nn::Gradients& into) {
  RunRequest req;
  req.terms = kValue;
  req.given = &targets;
  req.value_into = &into;
  return run(policy, params, segments, noise, req);
}

SegmentStats policy_gradient(const policy::GraphPolicy& policy,
                             const nn::ParameterSet& params,
                             std::span<const Segment> segments,
                             const SegmentTargets& targets,
                             const policy::PolicyNoise* noise,
                             const LossWeights& weights, nn::Gradients& into) {
  RunRequest req;
  req.terms = kPolicy;
  req.given = &targets;
  req.weights = weights;
  req.policy_into = &into;
  return run(policy, params, segments, noise, req);
}

SegmentStats accumulate_segments(const policy::GraphPolicy& policy,
                                 const nn::ParameterSet& params,
                                 std::span<const Segment> segments,
                                 const policy::PolicyNoise* noise,
                                 const LearnerConfig& cfg, GradientAccumulator& acc) {
  // Value and policy terms share one backward pass into d_theta; d_beta
  // stays zero because both networks are one parameter set.
  RunRequest req;
  req.terms = kValue | kPolicy;
  req.vtrace = &cfg.vtrace;
  req.weights = cfg.weights;
  req.value_into = &acc.d_theta;
  req.policy_into = &acc.d_theta;
  const SegmentStats stats = run(policy, params, segments, noise, req);
  acc.steps += stats.steps;
  return stats;
}

Learner::Learner(policy::GraphPolicy policy, nn::ParameterSet params, LearnerConfig cfg,
                 std::uint64_t seed)
    : policy_(std::move(policy)),
      params_(std::move(params)),
      cfg_(cfg),
      adam_(params_, cfg.adam),
      rng_(seed),
      acc_(GradientAccumulator::zeros_like(params_)) {
  cfg_.validate();
  policy_.check_layout(params_);
  snapshot_ = std::make_shared<const Snapshot>(Snapshot{0, params_});
}

SnapshotPtr Learner::snapshot() const {
  std::lock_guard lock(snapshot_mutex_);
  return snapshot_;
}

std::uint64_t Learner::version() const { return snapshot()->version; }

UpdateStats Learner::multitask_update(const ReplayMemory& memory, std::span<const int> domains) {
  UpdateStats out;
  out.version = version();
  const policy::PolicyConfig& pc = policy_.config();
  policy::PolicyNoise noise;
  const bool noisy = pc.noisy || pc.noisy_heads;
  if (noisy) noise = policy_.sample_noise(rng_);

  acc_.reset();
  for (int d : domains) {
    DomainUpdateStats ds;
    ds.domain = d;
    const std::vector<Segment> segs =
        memory.sample_segments(d, cfg_.batch, cfg_.vtrace.n, rng_);
    if (segs.empty()) {
      ds.skipped = true;
      log::info("domain " + std::to_string(d) + " has no episodes yet; skipped");
    } else {
      ds.stats = accumulate_segments(policy_, params_, segs, noisy ? &noise : nullptr, cfg_, acc_);
    }
    out.domains.push_back(ds);
  }
  if (acc_.steps == 0) return out;

  nn::Gradients g = acc_.combined();
  g *= 1.0 / static_cast<double>(acc_.steps);
  out.grad_norm = g.global_norm();
  if (!std::isfinite(out.grad_norm)) {
    acc_.reset();
    throw NumericError("non-finite gradient; update aborted");
  }
  if (out.grad_norm > cfg_.clip_norm) g *= cfg_.clip_norm / out.grad_norm;
  adam_.step(params_, g);
  acc_.reset();

  auto next = std::make_shared<const Snapshot>(Snapshot{out.version + 1, params_});
  {
    std::lock_guard lock(snapshot_mutex_);
    snapshot_ = std::move(next);
  }
  out.version += 1;
  out.applied = true;
  return out;
}

}  // namespace strac::rl
