#pragma once

// Helpers shared by the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "strac/env/dialogue_env.hpp"
#include "strac/harness/experiment.hpp"
#include "strac/policy/graph_policy.hpp"
#include "strac/rl/learner.hpp"
#include "strac/rl/replay.hpp"

namespace strac::testing {

inline BeliefFeatures random_features(int slots, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  BeliefFeatures f;
  f.global = nn::Vector::NullaryExpr(kGlobalFeatureDim, [&] { return u(rng); });
  for (int i = 0; i < slots; ++i) {
    f.slots.push_back(nn::Vector::NullaryExpr(kSlotFeatureDim, [&] { return u(rng); }));
  }
  return f;
}

inline double rel_error(double a, double b) {
  const double scale = std::max({std::abs(a), std::abs(b), 1e-8});
  return std::abs(a - b) / scale;
}

// Episodes generated by the actor loop under `params`.
inline std::vector<rl::EpisodePtr> rollouts(const policy::GraphPolicy& policy,
                                            const nn::ParameterSet& params,
                                            const env::DomainSpec& domain,
                                            const env::EnvProfile& profile, int count,
                                            std::uint64_t seed) {
  env::DialogueEnv env(domain, profile);
  std::mt19937_64 rng(seed);
  std::vector<rl::EpisodePtr> out;
  for (int i = 0; i < count; ++i) {
    harness::ActorPolicy actor{&policy, &params, 0};
    out.push_back(std::make_shared<const rl::Episode>(
        harness::run_actor_dialogue(actor, env, rng).episode));
  }
  return out;
}

inline std::vector<rl::Segment> all_segments(const std::vector<rl::EpisodePtr>& episodes, int n) {
  std::vector<rl::Segment> out;
  for (const auto& ep : episodes) {
    for (int s = 0; s < rl::segment_count(*ep, n); ++s) out.push_back(rl::segment_at(ep, s, n));
  }
  return out;
}

struct Objectives {
  double value = 0.0;   // sum 1/2 (v_k - V(b_k))^2
  double policy = 0.0;  // sum -l1 rho A log pi(a) - l2 H(pi)
};

// Tape-free evaluation of the two minimised learner losses with the
// V-trace quantities held fixed.
inline Objectives learner_objectives(const policy::GraphPolicy& policy,
                                     const nn::ParameterSet& params,
                                     const std::vector<rl::Segment>& segments,
                                     const rl::SegmentTargets& targets,
                                     const policy::PolicyNoise* noise,
                                     const rl::LossWeights& w) {
  Objectives o;
  for (std::size_t s = 0; s < segments.size(); ++s) {
    const rl::Segment& seg = segments[s];
    std::vector<const BeliefFeatures*> states;
    for (int k = 0; k < seg.length; ++k) states.push_back(&seg.step(k).features);
    const auto outs = policy.evaluate(params, policy::PolicyBatch::from_features(states), noise);
    for (int k = 0; k < seg.length; ++k) {
      const auto kk = static_cast<std::size_t>(k);
      const policy::PolicyOutput& out = outs[kk];
      const double diff = targets.vtrace[s].targets[kk] - out.value;
      o.value += 0.5 * diff * diff;
      const nn::Vector lp = policy::masked_log_softmax(out.logits, seg.step(k).mask);
      double h = 0.0;
      for (Eigen::Index a = 0; a < lp.size(); ++a) {
        if (seg.step(k).mask[static_cast<std::size_t>(a)]) h -= std::exp(lp(a)) * lp(a);
      }
      o.policy -= w.policy * targets.vtrace[s].rho[kk] * targets.vtrace[s].advantages[kk] *
                  lp(seg.step(k).flat);
      o.policy -= w.entropy * h;
    }
  }
  return o;
}

// Per-coordinate relative errors are reported, but entries of order 1e-6
// sit at the round-off floor of a step-1e-6 difference, so the pass
// criterion uses the norm-wise error over all probed coordinates:
//   |g - fd|_2 / max(|g|_2, |fd|_2).
struct GradCheck {
  double max_rel_value = 0.0;
  double max_rel_policy = 0.0;
  double norm_rel_value = 0.0;
  double norm_rel_policy = 0.0;
  int coordinates = 0;
};

inline double norm_rel_error(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double scale = std::sqrt(std::max({na, nb, 1e-300}));
  return std::sqrt(diff) / scale;
}

// Central differences (step h) on `per_tensor` random entries of every
// parameter tensor, against value_gradient / policy_gradient.
inline GradCheck check_learner_gradients(const policy::GraphPolicy& policy,
                                         const nn::ParameterSet& params,
                                         const std::vector<rl::Segment>& segments,
                                         const policy::PolicyNoise* noise,
                                         const rl::LearnerConfig& cfg, std::mt19937_64& rng,
                                         int per_tensor, double h = 1e-6) {
  const rl::SegmentTargets targets =
      rl::compute_targets(policy, params, segments, noise, cfg.vtrace);
  nn::Gradients gv = nn::Gradients::zeros_like(params);
  nn::Gradients gp = nn::Gradients::zeros_like(params);
  rl::value_gradient(policy, params, segments, targets, noise, gv);
  rl::policy_gradient(policy, params, segments, targets, noise, cfg.weights, gp);

  GradCheck result;
  std::vector<double> av, fv, ap, fp;
  nn::ParameterSet probe = params;
  for (nn::ParamId id = 0; id < params.size(); ++id) {
    const Eigen::Index size = params[id].size();
    std::uniform_int_distribution<Eigen::Index> pick(0, size - 1);
    for (int c = 0; c < per_tensor; ++c) {
      const Eigen::Index e = pick(rng);
      const double base = params[id](e);
      probe[id](e) = base + h;
      const Objectives plus = learner_objectives(policy, probe, segments, targets, noise, cfg.weights);
      probe[id](e) = base - h;
      const Objectives minus = learner_objectives(policy, probe, segments, targets, noise, cfg.weights);
      probe[id](e) = base;
      const double fd_v = (plus.value - minus.value) / (2 * h);
      const double fd_p = (plus.policy - minus.policy) / (2 * h);
      result.max_rel_value = std::max(result.max_rel_value, rel_error(gv.tensors[id](e), fd_v));
      result.max_rel_policy = std::max(result.max_rel_policy, rel_error(gp.tensors[id](e), fd_p));
      av.push_back(gv.tensors[id](e));
      fv.push_back(fd_v);
      ap.push_back(gp.tensors[id](e));
      fp.push_back(fd_p);
      ++result.coordinates;
    }
  }
  result.norm_rel_value = norm_rel_error(av, fv);
  result.norm_rel_policy = norm_rel_error(ap, fp);
  return result;
}

}  // namespace strac::testing
