#include "strac/env/belief.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "strac/errors.hpp"

namespace strac::env {

SlotBelief::SlotBelief(int values) : probs(static_cast<std::size_t>(values) + 1, 0.0) {
  probs[0] = 1.0;
}

int SlotBelief::top_value() const {
  int best = -1;
  double best_p = 0.0;
  for (int v = 0; v < value_count(); ++v) {
    const double p = probs[static_cast<std::size_t>(v) + 1];
    if (p > best_p) {
      best_p = p;
      best = v;
    }
  }
  return best;
}

double SlotBelief::top_prob() const {
  const int v = top_value();
  return v < 0 ? 0.0 : probs[static_cast<std::size_t>(v) + 1];
}

int SlotBelief::second_value() const {
  const int top = top_value();
  int best = -1;
  double best_p = 0.0;
  for (int v = 0; v < value_count(); ++v) {
    const double p = probs[static_cast<std::size_t>(v) + 1];
    if (v != top && p > best_p) {
      best_p = p;
      best = v;
    }
  }
  return best;
}

double SlotBelief::second_prob() const {
  const int v = second_value();
  return v < 0 ? 0.0 : probs[static_cast<std::size_t>(v) + 1];
}

double SlotBelief::normalized_entropy() const {
  double h = 0.0;
  for (double p : probs) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return std::clamp(h / std::log(static_cast<double>(value_count())), 0.0, 1.0);
}

namespace {

// Prior over values once the user has conveyed something about the slot.
std::vector<double> value_prior(const SlotBelief& b) {
  const int m = b.value_count();
  std::vector<double> prior(static_cast<std::size_t>(m));
  for (int v = 0; v < m; ++v) {
    prior[static_cast<std::size_t>(v)] =
        b.probs[static_cast<std::size_t>(v) + 1] + b.probs[0] / m;
  }
  return prior;
}

void set_posterior(SlotBelief& b, std::vector<double> post,
                   const std::vector<double>& fallback) {
  double z = std::accumulate(post.begin(), post.end(), 0.0);
  if (!(z > 0.0)) {
    post = fallback;
    z = std::accumulate(post.begin(), post.end(), 0.0);
  }
  b.probs[0] = 0.0;
  for (std::size_t v = 0; v < post.size(); ++v) b.probs[v + 1] = post[v] / z;
}

}  // namespace

void SlotBelief::observe_value(int observed, double error_rate) {
  const int m = value_count();
  if (observed < 0 || observed >= m) throw UsageError("observed value out of range");
  const double wrong = m > 1 ? error_rate / (m - 1) : 0.0;
  std::vector<double> like(static_cast<std::size_t>(m), wrong);
  like[static_cast<std::size_t>(observed)] = 1.0 - error_rate;
  std::vector<double> post = value_prior(*this);
  for (int v = 0; v < m; ++v) post[static_cast<std::size_t>(v)] *= like[static_cast<std::size_t>(v)];
  set_posterior(*this, std::move(post), like);
}

void SlotBelief::observe_confirmation(int value, bool affirmed, double error_rate) {
  const int m = value_count();
  if (value < 0 || value >= m) throw UsageError("confirmed value out of range");
  std::vector<double> like(static_cast<std::size_t>(m));
  for (int v = 0; v < m; ++v) {
    const bool match = v == value;
    // P(affirm | true v) = 1 - e when v is the confirmed value, e otherwise.
    const double p_affirm = match ? 1.0 - error_rate : error_rate;
    like[static_cast<std::size_t>(v)] = affirmed ? p_affirm : 1.0 - p_affirm;
  }
  std::vector<double> post = value_prior(*this);
  for (int v = 0; v < m; ++v) post[static_cast<std::size_t>(v)] *= like[static_cast<std::size_t>(v)];
  set_posterior(*this, std::move(post), like);
}

BeliefState BeliefState::initial(const DomainSpec& domain) {
  BeliefState b;
  b.max_turns = domain.max_turns;
  for (const auto& s : domain.slots) b.slots.emplace_back(s.values);
  return b;
}

std::vector<int> matching_entities(const BeliefState& belief, const DomainSpec& domain) {
  std::vector<int> out;
  for (std::size_t e = 0; e < domain.database.size(); ++e) {
    bool ok = true;
    for (std::size_t i = 0; i < belief.slots.size() && ok; ++i) {
      const SlotBelief& s = belief.slots[i];
      if (s.dontcare || s.all_none()) continue;
      ok = domain.database[e][i] == s.top_value();
    }
    if (ok) out.push_back(static_cast<int>(e));
  }
  return out;
}

BeliefFeatures dip_features(const BeliefState& belief, const DomainSpec& domain) {
  BeliefFeatures f;
  const auto n = belief.slots.size();
  const double entities = static_cast<double>(domain.database.size());
  f.slots.reserve(n);
  double top_sum = 0.0;
  int filled = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const SlotBelief& s = belief.slots[i];
    nn::Vector phi = nn::Vector::Zero(kSlotFeatureDim);
    phi(0) = s.top_prob();
    phi(1) = s.second_prob();
    phi(2) = s.none_prob();
    phi(3) = s.normalized_entropy();
    phi(4) = std::log(static_cast<double>(s.value_count())) / std::log(100.0);
    const int top = s.top_value();
    if (top >= 0) {
      const auto hits = std::count_if(domain.database.begin(), domain.database.end(),
                                      [&](const auto& e) { return e[i] == top; });
      phi(5) = static_cast<double>(hits) / entities;
    }
    phi(6) = s.requested_last_turn ? 1.0 : 0.0;
    phi(7) = s.filled() ? 1.0 : 0.0;
    phi(8) = s.confirmed ? 1.0 : 0.0;
    phi(9) = s.dontcare ? 1.0 : 0.0;
    phi(10) = s.changed_last_turn ? 1.0 : 0.0;
    phi(11) = std::min(1.0, s.times_asked / 5.0);
    phi(12) = s.top_prob() > 0.9 ? 1.0 : 0.0;
    f.slots.push_back(std::move(phi));
    top_sum += s.top_prob();
    filled += s.filled() ? 1 : 0;
  }

  nn::Vector g = nn::Vector::Zero(kGlobalFeatureDim);
  g(0) = static_cast<double>(belief.turn) / belief.max_turns;
  const auto matches = matching_entities(belief, domain).size();
  const int bucket = matches == 0 ? 0 : matches == 1 ? 1 : matches <= 4 ? 2 : 3;
  g(1 + bucket) = 1.0;
  g(5 + static_cast<int>(belief.last_user_act)) = 1.0;
  g(11 + static_cast<int>(belief.last_system_act)) = 1.0;
  g(20) = top_sum / static_cast<double>(n);
  g(21) = static_cast<double>(filled) / static_cast<double>(n);
  g(22) = filled == static_cast<int>(n) ? 1.0 : 0.0;
  g(23) = belief.wrong_informs / 2.0;
  g(24) = belief.informed ? 1.0 : 0.0;
  f.global = std::move(g);
  return f;
}

ActionMask compute_mask(const BeliefState& belief, const EnvProfile& profile) {
  const int n = static_cast<int>(belief.slots.size());
  ActionMask mask(static_cast<std::size_t>(flat_action_count(n)), 1);
  if (!profile.masks_on) return mask;
  const bool all_filled = std::all_of(belief.slots.begin(), belief.slots.end(),
                                      [](const SlotBelief& s) { return s.filled(); });
  auto global = [&](GlobalAction a) -> std::uint8_t& {
    return mask[static_cast<std::size_t>(to_flat({0, static_cast<int>(a)}, n))];
  };
  if (!all_filled) global(GlobalAction::kInform) = 0;
  if (!belief.informed) global(GlobalAction::kInformAlternatives) = 0;
  if (belief.turn == 0) global(GlobalAction::kRepeat) = 0;
  for (int i = 0; i < n; ++i) {
    if (belief.slots[static_cast<std::size_t>(i)].all_none()) {
      mask[static_cast<std::size_t>(to_flat({i + 1, static_cast<int>(SlotAction::kConfirm)}, n))] = 0;
      mask[static_cast<std::size_t>(to_flat({i + 1, static_cast<int>(SlotAction::kSelect)}, n))] = 0;
    }
  }
  return mask;
}

}  // namespace strac::env
