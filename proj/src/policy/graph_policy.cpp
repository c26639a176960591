#include "strac/policy/graph_policy.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "strac/errors.hpp"

namespace strac::policy {

using nn::ParamBinder;
using nn::Tape;
using nn::Tensor;
using nn::Var;
using nn::Vector;

EdgeType GraphSpec::edge_type(int from, int to) const {
  if (from == to || from < 0 || to < 0 || from > slots || to > slots) {
    throw UsageError("no edge " + std::to_string(from) + "->" + std::to_string(to));
  }
  if (is_slot(from) && is_slot(to)) return EdgeType::kS2S;
  return is_slot(from) ? EdgeType::kS2I : EdgeType::kI2S;
}

PolicyBatch PolicyBatch::from_features(std::span<const BeliefFeatures* const> states) {
  if (states.empty()) throw UsageError("empty policy batch");
  PolicyBatch batch;
  batch.slots = states.front()->slot_count();
  batch.size = static_cast<int>(states.size());
  if (batch.slots < 1) throw DimensionError("a state needs at least one slot");
  const Eigen::Index ds = states.front()->slots.front().size();
  const Eigen::Index dg = states.front()->global.size();
  batch.slot_features.resize(ds, static_cast<Eigen::Index>(batch.size) * batch.slots);
  batch.global_features.resize(dg, batch.size);
  for (int b = 0; b < batch.size; ++b) {
    const BeliefFeatures& s = *states[static_cast<std::size_t>(b)];
    if (s.slot_count() != batch.slots) {
      throw DimensionError("policy batch mixes slot counts");
    }
    if (s.global.size() != dg) throw DimensionError("global feature size mismatch");
    batch.global_features.col(b) = s.global;
    for (int i = 0; i < batch.slots; ++i) {
      const Vector& phi = s.slots[static_cast<std::size_t>(i)];
      if (phi.size() != ds) throw DimensionError("slot feature size mismatch");
      batch.slot_features.col(b * batch.slots + i) = phi;
    }
  }
  return batch;
}

PolicyBatch PolicyBatch::from_features(const BeliefFeatures& state) {
  const BeliefFeatures* one[] = {&state};
  return from_features(std::span<const BeliefFeatures* const>(one));
}

GraphPolicy::GraphPolicy(PolicyConfig config) : config_(config) {
  if (config_.parse_layers < 1) throw ConfigError("parse_layers must be >= 1");
  std::mt19937_64 scratch(0);
  build(reference_layout_, scratch);
}

void GraphPolicy::build(nn::ParameterSet& params, std::mt19937_64& rng) {
  layers_.clear();
  parse_.clear();
  const PolicyConfig& c = config_;
  auto add = [&](const std::string& name, int in, int out, bool bias, bool noisy) {
    layers_.push_back(nn::NoisyDenseLayer::create(params, name, in, out, bias, noisy, rng));
    return static_cast<int>(layers_.size()) - 1;
  };
  input_s_ = add("input.slot", c.slot_feature_dim, c.slot_state_dim, true, c.noisy);
  input_i_ = add("input.global", c.global_feature_dim, c.global_state_dim, true, c.noisy);
  for (int l = 0; l < c.parse_layers; ++l) {
    const std::string p = "parse" + std::to_string(l) + ".";
    ParseLayer layer{};
    layer.s2s = add(p + "msg_s2s", c.slot_state_dim, c.slot_message_dim, false, c.noisy);
    layer.s2i = add(p + "msg_s2i", c.slot_state_dim, c.global_message_dim, false, c.noisy);
    layer.i2s = add(p + "msg_i2s", c.global_state_dim, c.slot_message_dim, false, c.noisy);
    layer.update_s = add(p + "update_s", c.slot_state_dim, c.slot_message_dim, false, c.noisy);
    layer.update_i = add(p + "update_i", c.global_state_dim, c.global_message_dim, false, c.noisy);
    layer.project_s = add(p + "project_s", c.slot_message_dim, c.slot_state_dim, true, c.noisy);
    layer.project_i = add(p + "project_i", c.global_message_dim, c.global_state_dim, true, c.noisy);
    parse_.push_back(layer);
  }
  const bool nh = c.noisy_heads;
  pref_s_ = add("head.slot_pref", c.slot_state_dim, 1, true, nh);
  prims_s_ = add("head.slot_prims", c.slot_state_dim, kSlotActions, true, nh);
  value_s_ = add("head.slot_value", c.slot_state_dim, 1, true, nh);
  pref_i_ = add("head.global_pref", c.global_state_dim, 1, true, nh);
  prims_i_ = add("head.global_prims", c.global_state_dim, kGlobalActions, true, nh);
  value_i_ = add("head.global_value", c.global_state_dim, 1, true, nh);
}

nn::ParameterSet GraphPolicy::init_parameters(std::mt19937_64& rng) const {
  // build() is deterministic in layer order, so ids match layers_.
  GraphPolicy copy(config_);
  nn::ParameterSet params;
  copy.build(params, rng);
  return params;
}

void GraphPolicy::check_layout(const nn::ParameterSet& params) const {
  if (!params.same_layout(reference_layout_)) {
    throw ConfigError("parameter set does not match the policy layout");
  }
}

PolicyNoise GraphPolicy::sample_noise(std::mt19937_64& rng) const {
  PolicyNoise noise;
  noise.layers.resize(layers_.size());
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    if (layers_[k].noisy) noise.layers[k] = layers_[k].sample_noise(rng);
  }
  return noise;
}

const nn::NoiseSample* GraphPolicy::noise_for(const PolicyNoise* noise, int layer) const {
  if (noise == nullptr || !layers_[static_cast<std::size_t>(layer)].noisy) return nullptr;
  if (noise->layers.size() != layers_.size()) {
    throw DimensionError("policy noise sample does not match the layer count");
  }
  return &noise->layers[static_cast<std::size_t>(layer)];
}

Var GraphPolicy::apply(ParamBinder& bind, int layer, Var x, const PolicyNoise* noise) const {
  return nn::noisy_forward(bind, layers_[static_cast<std::size_t>(layer)], x,
                           noise_for(noise, layer));
}

NodeStates GraphPolicy::encode_inputs(ParamBinder& bind, const PolicyBatch& batch,
                                      const PolicyNoise* noise) const {
  Tape& t = bind.tape();
  nn::check_shape(batch.slot_features, config_.slot_feature_dim,
                  static_cast<Eigen::Index>(batch.size) * batch.slots, "slot features");
  nn::check_shape(batch.global_features, config_.global_feature_dim, batch.size,
                  "global features");
  Var phi_s = t.constant(batch.slot_features);
  Var phi_i = t.constant(batch.global_features);
  return NodeStates{nn::relu(t, apply(bind, input_s_, phi_s, noise)),
                    nn::relu(t, apply(bind, input_i_, phi_i, noise))};
}

NodeStates GraphPolicy::parse_graph(ParamBinder& bind, NodeStates h, int slots,
                                    const PolicyNoise* noise) const {
  Tape& t = bind.tape();
  // An S-node hears from n-1 S-nodes and the I-node; the I-node from n S-nodes.
  const double inv_senders = 1.0 / static_cast<double>(slots);
  for (const ParseLayer& layer : parse_) {
    Var s2s = apply(bind, layer.s2s, h.slots, noise);
    Var i2s = apply(bind, layer.i2s, h.global, noise);
    Var s2i = apply(bind, layer.s2i, h.slots, noise);
    Var into_s = nn::scale(t, nn::add(t, nn::group_sum_except_self(t, s2s, slots),
                                      nn::repeat_cols(t, i2s, slots)),
                           inv_senders);
    Var into_i = nn::scale(t, nn::group_sum(t, s2i, slots), inv_senders);

    Var z_s = nn::relu(t, nn::add(t, apply(bind, layer.update_s, h.slots, noise), into_s));
    Var z_i = nn::relu(t, nn::add(t, apply(bind, layer.update_i, h.global, noise), into_i));
    h.slots = nn::relu(t, apply(bind, layer.project_s, z_s, noise));
    h.global = nn::relu(t, apply(bind, layer.project_i, z_i, noise));
  }
  return h;
}

PolicyGraph GraphPolicy::decision_heads(ParamBinder& bind, NodeStates h, int slots,
                                        const PolicyNoise* noise) const {
  Tape& t = bind.tape();
  PolicyGraph g{};
  g.slot_pref = apply(bind, pref_s_, h.slots, noise);
  g.slot_prims = apply(bind, prims_s_, h.slots, noise);
  g.slot_value = apply(bind, value_s_, h.slots, noise);
  g.global_pref = apply(bind, pref_i_, h.global, noise);
  g.global_prims = apply(bind, prims_i_, h.global, noise);
  g.global_value = apply(bind, value_i_, h.global, noise);

  Var f_s = g.slot_prims;
  Var f_i = g.global_prims;
  if (config_.hierarchical) {
    f_s = nn::hierarchical_compose(t, g.slot_pref, g.slot_prims);
    f_i = nn::hierarchical_compose(t, g.global_pref, g.global_prims);
  }
  g.logits = nn::stack_nodes(t, f_i, f_s, slots);
  g.node_pref = nn::stack_nodes(t, g.global_pref, g.slot_pref, slots);
  g.p_slot = nn::softmax_cols(t, g.node_pref);
  Var q = nn::stack_nodes(t, g.global_value, g.slot_value, slots);
  g.value = nn::col_dot(t, g.p_slot, q);
  return g;
}

PolicyGraph GraphPolicy::forward(ParamBinder& bind, const PolicyBatch& batch,
                                 const PolicyNoise* noise) const {
  check_layout(bind.params());
  NodeStates h0 = encode_inputs(bind, batch, noise);
  NodeStates hl = parse_graph(bind, h0, batch.slots, noise);
  return decision_heads(bind, hl, batch.slots, noise);
}

std::vector<PolicyOutput> GraphPolicy::evaluate(const nn::ParameterSet& params,
                                                const PolicyBatch& batch,
                                                const PolicyNoise* noise) const {
  Tape tape;
  ParamBinder bind(tape, params, false);
  const PolicyGraph g = forward(bind, batch, noise);
  const int n = batch.slots;
  std::vector<PolicyOutput> out(static_cast<std::size_t>(batch.size));
  for (int b = 0; b < batch.size; ++b) {
    PolicyOutput& o = out[static_cast<std::size_t>(b)];
    o.slots = n;
    o.node_pref = tape.value(g.node_pref).col(b);
    o.p_slot = tape.value(g.p_slot).col(b);
    o.logits = tape.value(g.logits).col(b);
    o.value = tape.value(g.value)(0, b);
    o.node_value.resize(n + 1);
    o.node_value(0) = tape.value(g.global_value)(0, b);
    o.primitive_pref.resize(static_cast<std::size_t>(n) + 1);
    o.primitive_pref[0] = tape.value(g.global_prims).col(b);
    for (int i = 0; i < n; ++i) {
      o.node_value(i + 1) = tape.value(g.slot_value)(0, b * n + i);
      o.primitive_pref[static_cast<std::size_t>(i) + 1] =
          tape.value(g.slot_prims).col(b * n + i);
    }
    const ActionMask all(static_cast<std::size_t>(o.logits.size()), 1);
    o.pi = masked_log_softmax(o.logits, all).array().exp().matrix();
  }
  return out;
}

PolicyOutput GraphPolicy::evaluate(const nn::ParameterSet& params,
                                   const BeliefFeatures& state,
                                   const PolicyNoise* noise) const {
  return evaluate(params, PolicyBatch::from_features(state), noise).front();
}

Vector masked_log_softmax(const Vector& logits, const ActionMask& mask) {
  if (static_cast<Eigen::Index>(mask.size()) != logits.size()) {
    throw DimensionError("action mask has " + std::to_string(mask.size()) +
                         " flags for " + std::to_string(logits.size()) + " actions");
  }
  // Same arithmetic sequence as nn::masked_log_softmax_cols.
  double top = -std::numeric_limits<double>::infinity();
  for (Eigen::Index r = 0; r < logits.size(); ++r) {
    if (mask[static_cast<std::size_t>(r)] != 0 && logits(r) > top) top = logits(r);
  }
  if (!std::isfinite(top)) throw ConfigError("every action is masked");
  double z = 0.0;
  for (Eigen::Index r = 0; r < logits.size(); ++r) {
    if (mask[static_cast<std::size_t>(r)] != 0) z += std::exp(logits(r) - top);
  }
  const double log_z = top + std::log(z);
  Vector out = Vector::Constant(logits.size(), -std::numeric_limits<double>::infinity());
  for (Eigen::Index r = 0; r < logits.size(); ++r) {
    if (mask[static_cast<std::size_t>(r)] != 0) out(r) = logits(r) - log_z;
  }
  return out;
}

ActionChoice select_action(const PolicyOutput& output, const ActionMask& mask,
                           SelectMode mode, std::mt19937_64* rng) {
  const Vector logp = masked_log_softmax(output.logits, mask);
  int chosen = -1;
  if (mode == SelectMode::kGreedy) {
    for (Eigen::Index r = 0; r < logp.size(); ++r) {
      if (mask[static_cast<std::size_t>(r)] == 0) continue;
      if (chosen < 0 || output.logits(r) > output.logits(chosen)) chosen = static_cast<int>(r);
    }
  } else {
    if (rng == nullptr) throw UsageError("sampling needs an rng");
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    const double u = uni(*rng);
    double cumulative = 0.0;
    for (Eigen::Index r = 0; r < logp.size(); ++r) {
      if (mask[static_cast<std::size_t>(r)] == 0) continue;
      chosen = static_cast<int>(r);
      cumulative += std::exp(logp(r));
      if (u < cumulative) break;
    }
    // Rounding can leave u past the last cumulative sum; never return an
    // action whose probability underflowed to zero.
    if (std::exp(logp(chosen)) == 0.0) return select_action(output, mask, SelectMode::kGreedy, nullptr);
  }
  ActionChoice choice;
  choice.flat = chosen;
  choice.action = from_flat(chosen, output.slots);
  choice.mu = std::exp(logp(chosen));
  return choice;
}

}  // namespace strac::policy
