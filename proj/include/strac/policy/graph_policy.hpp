#pragma once

#include <random>
#include <span>
#include <vector>

#include "strac/nn/autodiff.hpp"
#include "strac/nn/layers.hpp"
#include "strac/nn/parameters.hpp"
#include "strac/types.hpp"

namespace strac::policy {

enum class EdgeType { kS2S, kS2I, kI2S };

// Fully connected sub-agent graph: node 0 is the slot-independent I-node,
// nodes 1..slots are S-nodes. Every ordered pair i != j has one typed edge.
struct GraphSpec {
  int slots = 1;

  int node_count() const { return slots + 1; }
  int edge_count() const { return (slots + 1) * slots; }
  static bool is_slot(int node) { return node != 0; }
  // Throws UsageError for a self loop or out-of-range node.
  EdgeType edge_type(int from, int to) const;
};

struct PolicyConfig {
  int slot_feature_dim = kSlotFeatureDim;
  int global_feature_dim = kGlobalFeatureDim;
  int slot_state_dim = 40;
  int global_state_dim = 250;
  int slot_message_dim = 20;     // messages into S-nodes
  int global_message_dim = 100;  // messages into the I-node
  int parse_layers = 2;
  bool hierarchical = true;
  bool noisy = true;         // hidden layers
  bool noisy_heads = false;  // output heads
};

// One noise sample per layer (entries for noise-free layers are empty).
struct PolicyNoise {
  std::vector<nn::NoiseSample> layers;
};

// A batch of states from one domain (all with `slots` S-nodes).
// slot_features column b*slots + (i-1) holds phi_i of state b.
struct PolicyBatch {
  int slots = 0;
  int size = 0;
  nn::Tensor slot_features;
  nn::Tensor global_features;

  static PolicyBatch from_features(std::span<const BeliefFeatures* const> states);
  static PolicyBatch from_features(const BeliefFeatures& state);
};

// Node representations on the tape: slots (d_S x B*n), global (d_I x B).
struct NodeStates {
  nn::Var slots;
  nn::Var global;
};

// Head outputs on the tape. Row order of the stacked tensors is node order
// (I-node first) so that `logits` follows the flat action layout.
struct PolicyGraph {
  nn::Var slot_pref, slot_prims, slot_value;        // 1, 3, 1 rows x B*n
  nn::Var global_pref, global_prims, global_value;  // 1, 5, 1 rows x B
  nn::Var logits;                                   // (5 + 3n) x B
  nn::Var node_pref;                                // (n + 1) x B
  nn::Var p_slot;                                   // (n + 1) x B
  nn::Var value;                                    // 1 x B
};

// Plain values for one state. Per-node vectors are indexed by node id.
struct PolicyOutput {
  int slots = 0;
  nn::Vector node_pref;                  // h_i
  std::vector<nn::Vector> primitive_pref;  // l_i
  nn::Vector node_value;                 // q_i
  nn::Vector logits;                     // flat f
  nn::Vector pi;                         // softmax(f), unmasked
  nn::Vector p_slot;                     // softmax(h)
  double value = 0.0;                    // p_slot . q
};

// GNN policy and value function shared across domains of any slot count.
//
// Input model:   h0_i = relu(F_type(i) phi_i)
// Parsing layer: m_ij = W_type(i->j) h_i, mbar_j = mean_{i != j} m_ij,
//                z_j = relu(W_type(j) h_j + mbar_j),
//                h_j' = relu(P_type(j) z_j + p_type(j)).
// The message / update shapes are 40->20, 40->100, 250->20, 40->20, 250->100
// at every layer; P maps z back to the 40 / 250 state size so both layers
// reuse the same shapes.
// Heads:         h_i, l_i, q_i from per-type linear layers;
//                f_i = h_i + (l_i - max l_i) (or l_i without hierarchy),
//                pi = softmax(f), p_slot = softmax(h), V = p_slot . q.
class GraphPolicy {
 public:
  explicit GraphPolicy(PolicyConfig config = {});

  const PolicyConfig& config() const { return config_; }

  nn::ParameterSet init_parameters(std::mt19937_64& rng) const;
  // Throws ConfigError unless params has exactly this policy's layout.
  void check_layout(const nn::ParameterSet& params) const;
  PolicyNoise sample_noise(std::mt19937_64& rng) const;
  const std::vector<nn::NoisyDenseLayer>& layers() const { return layers_; }

  NodeStates encode_inputs(nn::ParamBinder& bind, const PolicyBatch& batch,
                           const PolicyNoise* noise) const;
  NodeStates parse_graph(nn::ParamBinder& bind, NodeStates h0, int slots,
                         const PolicyNoise* noise) const;
  PolicyGraph decision_heads(nn::ParamBinder& bind, NodeStates hl, int slots,
                             const PolicyNoise* noise) const;
  PolicyGraph forward(nn::ParamBinder& bind, const PolicyBatch& batch,
                      const PolicyNoise* noise) const;

  std::vector<PolicyOutput> evaluate(const nn::ParameterSet& params,
                                     const PolicyBatch& batch,
                                     const PolicyNoise* noise) const;
  PolicyOutput evaluate(const nn::ParameterSet& params,
                        const BeliefFeatures& state,
                        const PolicyNoise* noise) const;

 private:
  struct ParseLayer {
    int s2s, s2i, i2s, update_s, update_i, project_s, project_i;
  };
  void build(nn::ParameterSet& params, std::mt19937_64& rng);
  const nn::NoiseSample* noise_for(const PolicyNoise* noise, int layer) const;
  nn::Var apply(nn::ParamBinder& bind, int layer, nn::Var x,
                const PolicyNoise* noise) const;

  PolicyConfig config_;
  std::vector<nn::NoisyDenseLayer> layers_;
  nn::ParameterSet reference_layout_;
  int input_s_ = 0, input_i_ = 0;
  std::vector<ParseLayer> parse_;
  int pref_s_ = 0, prims_s_ = 0, value_s_ = 0;
  int pref_i_ = 0, prims_i_ = 0, value_i_ = 0;
};

enum class SelectMode { kSample, kGreedy };

struct ActionChoice {
  ActionId action;
  int flat = 0;
  double mu = 0.0;  // probability of `flat` under the masked distribution
};

// log softmax over the unmasked entries; masked entries are -inf.
nn::Vector masked_log_softmax(const nn::Vector& logits, const ActionMask& mask);

// Masked logits are excluded before the softmax. Greedy picks the largest
// unmasked logit, lowest flat index on ties. Throws ConfigError if every
// action is masked. rng is only used in sample mode.
ActionChoice select_action(const PolicyOutput& output, const ActionMask& mask,
                           SelectMode mode, std::mt19937_64* rng);

}  // namespace strac::policy
