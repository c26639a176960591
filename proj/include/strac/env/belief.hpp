#pragma once

#include <vector>

#include "strac/env/domain.hpp"
#include "strac/types.hpp"

namespace strac::env {

enum class UserAct : int {
  kStart = 0,
  kInform = 1,
  kAffirm = 2,
  kNegate = 3,
  kDontCare = 4,
  kSilent = 5,
};
inline constexpr int kUserActCount = 6;

// Summary of the last system action, for the global features.
enum class SystemAct : int {
  kNone = 0,
  kRequest = 1,
  kConfirm = 2,
  kSelect = 3,
  kInform = 4,
  kInformAlternatives = 5,
  kBye = 6,
  kRepeat = 7,
  kRequestMore = 8,
};
inline constexpr int kSystemActCount = 9;

// Distribution over {none, value_0 .. value_{m-1}} for one slot.
struct SlotBelief {
  std::vector<double> probs;  // probs[0] = none, probs[1 + v] = value v
  bool dontcare = false;
  bool confirmed = false;
  bool requested_last_turn = false;
  bool changed_last_turn = false;
  int times_asked = 0;

  explicit SlotBelief(int values = 2);

  int value_count() const { return static_cast<int>(probs.size()) - 1; }
  double none_prob() const { return probs[0]; }
  bool all_none() const { return probs[0] >= 1.0; }
  // Best value index, or -1 while all mass sits on "none".
  int top_value() const;
  double top_prob() const;     // 0 while all-none
  int second_value() const;    // -1 if there is none with mass > 0
  double second_prob() const;
  // Entropy of the full distribution divided by log(m), clamped to [0,1].
  double normalized_entropy() const;
  // Top-hypothesis probability above 0.5, or the user said "any".
  bool filled() const { return dontcare || top_prob() > 0.5; }

  // Bayesian update after the user conveys value `observed` through a
  // channel that substitutes a uniformly random wrong value with prob. e.
  // The "none" mass is spread uniformly over values first.
  void observe_value(int observed, double error_rate);
  // Update after affirm/negate of `value`, each flipped with probability e.
  void observe_confirmation(int value, bool affirmed, double error_rate);
};

struct BeliefState {
  std::vector<SlotBelief> slots;
  int turn = 0;
  int max_turns = 25;
  UserAct last_user_act = UserAct::kStart;
  SystemAct last_system_act = SystemAct::kNone;
  int wrong_informs = 0;
  bool informed = false;

  static BeliefState initial(const DomainSpec& domain);
};

// Entities consistent with the top hypotheses of every slot that carries
// evidence and is not "any".
std::vector<int> matching_entities(const BeliefState& belief, const DomainSpec& domain);

// Handcrafted domain-independent features. Per slot (16):
//   0 top prob, 1 second prob, 2 none prob, 3 normalised entropy,
//   4 log value count, 5 fraction of entities with the top value,
//   6 requested last turn, 7 filled, 8 confirmed, 9 "any", 10 changed last
//   turn, 11 times asked / 5, 12 top prob > 0.9, 13-15 zero padding.
// Global (32):
//   0 turn / max_turns, 1-4 one-hot matching-entity bucket (0, 1, 2-4, 5+),
//   5-10 last user act one-hot, 11-19 last system act one-hot,
//   20 mean top prob, 21 fraction filled, 22 all filled, 23 wrong informs / 2,
//   24 informed before, 25-31 zero padding.
BeliefFeatures dip_features(const BeliefState& belief, const DomainSpec& domain);

// Masks off: everything allowed. Masks on: inform masked until every slot is
// filled; inform-alternatives masked until an inform happened; confirm and
// select of slot i masked while slot i is all-"none"; repeat masked at turn 0.
ActionMask compute_mask(const BeliefState& belief, const EnvProfile& profile);

}  // namespace strac::env
