#include "strac/env/dialogue_env.hpp"

#include <algorithm>

#include "strac/errors.hpp"

namespace strac::env {

bool UserGoal::satisfied_by(const std::vector<int>& entity_values) const {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (constrained[i] && entity_values[i] != values[i]) return false;
  }
  return true;
}

DialogueEnv::DialogueEnv(DomainSpec domain, EnvProfile profile)
    : domain_(std::move(domain)), profile_(std::move(profile)) {
  domain_.validate();
  profile_.validate();
  belief_ = BeliefState::initial(domain_);
}

Observation DialogueEnv::reset(std::mt19937_64& rng) {
  const int n = slot_count();
  goal_ = UserGoal{};
  goal_.entity = std::uniform_int_distribution<int>(
      0, static_cast<int>(domain_.database.size()) - 1)(rng);
  goal_.values = domain_.database[static_cast<std::size_t>(goal_.entity)];
  std::bernoulli_distribution constrain(kConstrainedSlotRate);
  goal_.constrained.assign(static_cast<std::size_t>(n), false);
  for (int i = 0; i < n; ++i) goal_.constrained[static_cast<std::size_t>(i)] = constrain(rng);
  if (std::none_of(goal_.constrained.begin(), goal_.constrained.end(), [](bool c) { return c; })) {
    goal_.constrained[static_cast<std::size_t>(std::uniform_int_distribution<int>(0, n - 1)(rng))] = true;
  }

  belief_ = BeliefState::initial(domain_);
  active_ = true;
  last_answered_act_ = SystemAct::kNone;
  last_answered_slot_ = -1;
  return Observation{dip_features(belief_, domain_), compute_mask(belief_, profile_)};
}

bool DialogueEnv::user_cooperates(std::mt19937_64& rng) {
  if (profile_.style == UserStyle::kStandard) return true;
  return std::bernoulli_distribution(kUnfriendlyAnswerRate)(rng);
}

void DialogueEnv::inform_value(int slot, double error_rate, std::mt19937_64& rng) {
  SlotBelief& s = belief_.slots[static_cast<std::size_t>(slot)];
  const int m = s.value_count();
  int said = goal_.values[static_cast<std::size_t>(slot)];
  if (std::bernoulli_distribution(error_rate)(rng)) {
    // Substitute a uniformly random wrong value.
    int wrong = std::uniform_int_distribution<int>(0, m - 2)(rng);
    if (wrong >= said) ++wrong;
    said = wrong;
  }
  s.observe_value(said, profile_.semantic_error_rate);
  belief_.last_user_act = UserAct::kInform;
}

void DialogueEnv::answer_slot(SystemAct act, int slot, std::mt19937_64& rng) {
  if (!user_cooperates(rng)) {
    belief_.last_user_act = UserAct::kSilent;
    return;
  }
  last_answered_act_ = act;
  last_answered_slot_ = slot;
  const auto idx = static_cast<std::size_t>(slot);
  SlotBelief& s = belief_.slots[idx];
  const double e = profile_.semantic_error_rate;
  const bool constrained = goal_.constrained[idx];

  if (act == SystemAct::kConfirm && !s.all_none()) {
    const int top = s.top_value();
    bool affirm = !constrained || goal_.values[idx] == top;
    if (std::bernoulli_distribution(e)(rng)) affirm = !affirm;
    s.observe_confirmation(top, affirm, e);
    if (affirm) s.confirmed = true;
    belief_.last_user_act = affirm ? UserAct::kAffirm : UserAct::kNegate;
    return;
  }
  if (!constrained) {
    s.dontcare = true;
    belief_.last_user_act = UserAct::kDontCare;
    return;
  }
  // Choosing between two offered values is a clearer channel than free
  // answers: select halves the substitution rate.
  inform_value(slot, act == SystemAct::kSelect ? e / 2.0 : e, rng);
}

int DialogueEnv::pick_entity(bool alternative) const {
  const std::vector<int> matches = matching_entities(belief_, domain_);
  if (!alternative) return matches.empty() ? -1 : matches.front();

  // Swap the least confident evidenced slot to its runner-up value.
  int weakest = -1;
  for (int i = 0; i < slot_count(); ++i) {
    const SlotBelief& s = belief_.slots[static_cast<std::size_t>(i)];
    if (s.dontcare || s.all_none() || s.second_value() < 0) continue;
    if (weakest < 0 || s.top_prob() < belief_.slots[static_cast<std::size_t>(weakest)].top_prob()) {
      weakest = i;
    }
  }
  if (weakest >= 0) {
    const int alt = belief_.slots[static_cast<std::size_t>(weakest)].second_value();
    for (std::size_t e = 0; e < domain_.database.size(); ++e) {
      const auto& entity = domain_.database[e];
      bool ok = entity[static_cast<std::size_t>(weakest)] == alt;
      for (int i = 0; i < slot_count() && ok; ++i) {
        const SlotBelief& s = belief_.slots[static_cast<std::size_t>(i)];
        if (i == weakest || s.dontcare || s.all_none()) continue;
        ok = entity[static_cast<std::size_t>(i)] == s.top_value();
      }
      if (ok) return static_cast<int>(e);
    }
  }
  return matches.size() > 1 ? matches[1] : -1;
}

bool DialogueEnv::offer(int entity) {
  belief_.informed = true;
  if (entity >= 0 && goal_.satisfied_by(domain_.database[static_cast<std::size_t>(entity)])) {
    belief_.last_user_act = UserAct::kAffirm;
    return true;
  }
  ++belief_.wrong_informs;
  belief_.last_user_act = UserAct::kNegate;
  return false;
}

StepResult DialogueEnv::step(ActionId action, std::mt19937_64& rng) {
  if (!active_) throw UsageError("step() on a finished dialogue; call reset()");
  const int n = slot_count();
  to_flat(action, n);  // range check

  std::vector<std::vector<double>> before;
  before.reserve(belief_.slots.size());
  for (auto& s : belief_.slots) {
    before.push_back(s.probs);
    s.requested_last_turn = false;
  }

  bool success = false;
  bool terminal = false;
  if (action.node > 0) {
    const int slot = action.node - 1;
    switch (static_cast<SlotAction>(action.primitive)) {
      case SlotAction::kRequest:
        belief_.slots[static_cast<std::size_t>(slot)].requested_last_turn = true;
        ++belief_.slots[static_cast<std::size_t>(slot)].times_asked;
        belief_.last_system_act = SystemAct::kRequest;
        answer_slot(SystemAct::kRequest, slot, rng);
        break;
      case SlotAction::kConfirm:
        belief_.last_system_act = SystemAct::kConfirm;
        answer_slot(SystemAct::kConfirm, slot, rng);
        break;
      case SlotAction::kSelect:
        belief_.last_system_act = SystemAct::kSelect;
        answer_slot(SystemAct::kSelect, slot, rng);
        break;
    }
  } else {
    switch (static_cast<GlobalAction>(action.primitive)) {
      case GlobalAction::kInform:
        belief_.last_system_act = SystemAct::kInform;
        success = offer(pick_entity(false));
        terminal = success || belief_.wrong_informs >= kMaxWrongInforms;
        break;
      case GlobalAction::kInformAlternatives:
        belief_.last_system_act = SystemAct::kInformAlternatives;
        success = offer(pick_entity(true));
        terminal = success || belief_.wrong_informs >= kMaxWrongInforms;
        break;
      case GlobalAction::kBye:
        belief_.last_system_act = SystemAct::kBye;
        belief_.last_user_act = UserAct::kSilent;
        // A user who has not been offered anything yet ignores the goodbye.
        terminal = belief_.informed;
        break;
      case GlobalAction::kRepeat:
        belief_.last_system_act = SystemAct::kRepeat;
        if (last_answered_act_ != SystemAct::kNone) {
          answer_slot(last_answered_act_, last_answered_slot_, rng);
        } else {
          belief_.last_user_act = UserAct::kSilent;
        }
        break;
      case GlobalAction::kRequestMore: {
        belief_.last_system_act = SystemAct::kRequestMore;
        belief_.last_user_act = UserAct::kSilent;
        if (profile_.style == UserStyle::kUnfriendly) break;
        std::vector<int> pending;
        for (int i = 0; i < n; ++i) {
          const auto idx = static_cast<std::size_t>(i);
          if (goal_.constrained[idx] && belief_.slots[idx].top_value() != goal_.values[idx]) {
            pending.push_back(i);
          }
        }
        if (!pending.empty()) {
          const int slot = pending[static_cast<std::size_t>(std::uniform_int_distribution<int>(
              0, static_cast<int>(pending.size()) - 1)(rng))];
          inform_value(slot, profile_.semantic_error_rate, rng);
        }
        break;
      }
    }
  }

  ++belief_.turn;
  if (!terminal && belief_.turn >= belief_.max_turns) terminal = true;
  for (std::size_t i = 0; i < belief_.slots.size(); ++i) {
    belief_.slots[i].changed_last_turn = belief_.slots[i].probs != before[i];
  }
  active_ = !terminal;

  StepResult out;
  out.reward = kTurnPenalty + (success ? kSuccessBonus : 0.0);
  out.done = terminal;
  out.success = success;
  out.features = dip_features(belief_, domain_);
  out.mask = compute_mask(belief_, profile_);
  return out;
}

}  // namespace strac::env
