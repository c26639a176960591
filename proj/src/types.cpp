#include "strac/types.hpp"

#include <string>

#include "strac/errors.hpp"

namespace strac {

int to_flat(ActionId a, int slots) {
  if (a.node == 0) {
    if (a.primitive < 0 || a.primitive >= kGlobalActions) {
      throw DimensionError("global primitive out of range: " + std::to_string(a.primitive));
    }
    return a.primitive;
  }
  if (a.node < 0 || a.node > slots || a.primitive < 0 || a.primitive >= kSlotActions) {
    throw DimensionError("action (" + std::to_string(a.node) + "," +
                         std::to_string(a.primitive) + ") out of range");
  }
  return kGlobalActions + kSlotActions * (a.node - 1) + a.primitive;
}

ActionId from_flat(int flat, int slots) {
  if (flat < 0 || flat >= flat_action_count(slots)) {
    throw DimensionError("flat action out of range: " + std::to_string(flat));
  }
  if (flat < kGlobalActions) return ActionId{0, flat};
  const int rest = flat - kGlobalActions;
  return ActionId{1 + rest / kSlotActions, rest % kSlotActions};
}

}  // namespace strac
