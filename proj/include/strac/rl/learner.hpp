#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <random>
#include <span>
#include <vector>

#include "strac/nn/adam.hpp"
#include "strac/nn/parameters.hpp"
#include "strac/policy/graph_policy.hpp"
#include "strac/rl/replay.hpp"
#include "strac/rl/vtrace.hpp"

namespace strac::rl {

struct LossWeights {
  double policy = 0.3;     // lambda_1
  double entropy = 0.001;  // lambda_2

  void validate() const;
};

struct LearnerConfig {
  VTraceConfig vtrace;
  LossWeights weights;
  nn::AdamConfig adam;
  int batch = 64;  // segments per domain per update
  double clip_norm = 10.0;

  void validate() const;
};

// d_beta collects the value-loss gradient, d_theta the policy and entropy
// terms. Both are descent directions of the minimised loss
//   sum_k 1/2 (v_k - V(b_k))^2 - l1 rho_k A_k log pi(a_k|b_k) - l2 H(pi(.|b_k))
// and `steps` counts the contributing steps (the normaliser N).
struct GradientAccumulator {
  nn::Gradients d_theta;
  nn::Gradients d_beta;
  std::size_t steps = 0;

  static GradientAccumulator zeros_like(const nn::ParameterSet& params);
  void reset();
  nn::Gradients combined() const;
};

struct SegmentStats {
  std::size_t steps = 0;
  double value_loss = 0.0;   // sum of 1/2 (v - V)^2
  double policy_loss = 0.0;  // sum of -rho A log pi(a)
  double entropy = 0.0;      // sum of H(pi)
  double rho = 0.0;          // sum of rho
  std::size_t clamped = 0;   // steps whose log pi(a) hit the clamp
};

// V-trace quantities for a batch of segments under the current parameters,
// from one forward pass. Index [s][k] is step k of segment s.
struct SegmentTargets {
  std::vector<VTraceResult> vtrace;
  std::vector<std::vector<double>> values;  // V(b_k), L + 1 entries
  std::vector<std::vector<double>> pi;      // pi(a_k | b_k) under the stored mask
};

// Lower clamp applied to log pi(a_k | b_k) in the policy term.
inline constexpr double kMinLogProb = -50.0;

// All segments must share one slot count. `noise` may be null.
SegmentTargets compute_targets(const policy::GraphPolicy& policy,
                               const nn::ParameterSet& params,
                               std::span<const Segment> segments,
                               const policy::PolicyNoise* noise,
                               const VTraceConfig& cfg);

// Adds sum_k (V(b_k) - v_k) dV(b_k) to `into` (descent on the MSE).
SegmentStats value_gradient(const policy::GraphPolicy& policy,
                            const nn::ParameterSet& params,
                            std::span<const Segment> segments,
                            const SegmentTargets& targets,
                            const policy::PolicyNoise* noise, nn::Gradients& into);

// Adds -sum_k [l1 rho_k A_k dlog pi(a_k|b_k) + l2 dH(pi(.|b_k))] to `into`.
SegmentStats policy_gradient(const policy::GraphPolicy& policy,
                             const nn::ParameterSet& params,
                             std::span<const Segment> segments,
                             const SegmentTargets& targets,
                             const policy::PolicyNoise* noise,
                             const LossWeights& weights, nn::Gradients& into);

// compute_targets + value_gradient + policy_gradient sharing one forward
// and one backward pass. Results agree with the separate calls.
SegmentStats accumulate_segments(const policy::GraphPolicy& policy,
                                 const nn::ParameterSet& params,
                                 std::span<const Segment> segments,
                                 const policy::PolicyNoise* noise,
                                 const LearnerConfig& cfg, GradientAccumulator& acc);

// Immutable parameters tagged with the learner update count.
struct Snapshot {
  std::uint64_t version = 0;
  nn::ParameterSet params;
};
using SnapshotPtr = std::shared_ptr<const Snapshot>;

struct DomainUpdateStats {
  int domain = 0;
  bool skipped = false;
  SegmentStats stats;
};

struct UpdateStats {
  std::uint64_t version = 0;  // version after the update
  bool applied = false;
  double grad_norm = 0.0;     // before clipping, after normalisation
  std::vector<DomainUpdateStats> domains;
};

// Owns the shared parameters and Adam state. Only the learner thread calls
// multitask_update(); snapshot() may be called from any thread.
class Learner {
 public:
  Learner(policy::GraphPolicy policy, nn::ParameterSet params, LearnerConfig cfg,
          std::uint64_t seed);

  // For every domain: sample `batch` segments and accumulate gradients.
  // Then one clipped Adam step on the sum divided by N. Domains with empty
  // memory are skipped with a logged notice; if all are empty nothing
  // changes.
  UpdateStats multitask_update(const ReplayMemory& memory, std::span<const int> domains);

  SnapshotPtr snapshot() const;
  std::uint64_t version() const;
  const nn::ParameterSet& params() const { return params_; }
  const policy::GraphPolicy& policy() const { return policy_; }
  const LearnerConfig& config() const { return cfg_; }
  const nn::AdamState& adam() const { return adam_; }

 private:
  policy::GraphPolicy policy_;
  nn::ParameterSet params_;
  LearnerConfig cfg_;
  nn::AdamState adam_;
  std::mt19937_64 rng_;
  GradientAccumulator acc_;
  mutable std::mutex snapshot_mutex_;
  SnapshotPtr snapshot_;
};

}  // namespace strac::rl
