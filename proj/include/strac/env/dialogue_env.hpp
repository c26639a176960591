#pragma once

#include <random>
#include <vector>

#include "strac/env/belief.hpp"
#include "strac/env/domain.hpp"
#include "strac/types.hpp"

namespace strac::env {

inline constexpr double kTurnPenalty = -1.0;
inline constexpr double kSuccessBonus = 20.0;
inline constexpr int kMaxWrongInforms = 2;
inline constexpr double kUnfriendlyAnswerRate = 0.7;
inline constexpr double kConstrainedSlotRate = 0.8;

// Hidden user goal drawn from one database entity; slots that are not
// constrained are "any" for the user.
struct UserGoal {
  int entity = 0;
  std::vector<int> values;
  std::vector<bool> constrained;

  bool satisfied_by(const std::vector<int>& entity_values) const;
};

struct Observation {
  BeliefFeatures features;
  ActionMask mask;
};

struct StepResult {
  BeliefFeatures features;
  double reward = 0.0;
  bool done = false;
  bool success = false;
  ActionMask mask;
};

// Simulated slot-filling dialogue. Every system turn costs -1; a successful
// inform ends the dialogue and adds +20 on that turn, so a success after T
// turns returns 20 - T and a failure returns -T. Failure: two wrong
// informs, bye, or max_turns reached.
class DialogueEnv {
 public:
  DialogueEnv(DomainSpec domain, EnvProfile profile);

  Observation reset(std::mt19937_64& rng);
  StepResult step(ActionId action, std::mt19937_64& rng);

  const DomainSpec& domain() const { return domain_; }
  const EnvProfile& profile() const { return profile_; }
  const BeliefState& belief() const { return belief_; }
  const UserGoal& goal() const { return goal_; }
  bool active() const { return active_; }
  int slot_count() const { return domain_.slot_count(); }

 private:
  // User response to a slot-level act, through the noisy channel.
  void answer_slot(SystemAct act, int slot, std::mt19937_64& rng);
  void inform_value(int slot, double error_rate, std::mt19937_64& rng);
  bool user_cooperates(std::mt19937_64& rng);
  // Returns true when the offered entity satisfies the goal.
  bool offer(int entity);
  int pick_entity(bool alternative) const;

  DomainSpec domain_;
  EnvProfile profile_;
  BeliefState belief_;
  UserGoal goal_;
  bool active_ = false;
  SystemAct last_answered_act_ = SystemAct::kNone;
  int last_answered_slot_ = -1;
};

}  // namespace strac::env
