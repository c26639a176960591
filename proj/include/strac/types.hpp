#pragma once

#include <compare>
#include <cstdint>
#include <vector>

#include "strac/nn/tensor.hpp"

namespace strac {

// Primitive actions per sub-agent: slot nodes have request/confirm/select,
// the slot-independent node has inform/inform-alternatives/bye/repeat/
// request-more.
inline constexpr int kSlotActions = 3;
inline constexpr int kGlobalActions = 5;

// Fixed feature sizes, independent of the domain.
inline constexpr int kSlotFeatureDim = 16;
inline constexpr int kGlobalFeatureDim = 32;

enum class SlotAction : int { kRequest = 0, kConfirm = 1, kSelect = 2 };
enum class GlobalAction : int {
  kInform = 0,
  kInformAlternatives = 1,
  kBye = 2,
  kRepeat = 3,
  kRequestMore = 4,
};

// node 0 is the slot-independent node; nodes 1..n are slots.
struct ActionId {
  int node = 0;
  int primitive = 0;

  auto operator<=>(const ActionId&) const = default;
};

// Flat action layout: the five global actions first, then three per slot in
// slot order. flat = node == 0 ? primitive : 5 + 3 * (node - 1) + primitive.
inline int flat_action_count(int slots) { return kGlobalActions + kSlotActions * slots; }
int to_flat(ActionId a, int slots);
ActionId from_flat(int flat, int slots);

// Per-turn decomposed belief features.
struct BeliefFeatures {
  nn::Vector global;              // kGlobalFeatureDim
  std::vector<nn::Vector> slots;  // one kSlotFeatureDim vector per slot

  int slot_count() const { return static_cast<int>(slots.size()); }
};

// One flag per flat action; non-zero means allowed.
using ActionMask = std::vector<std::uint8_t>;

}  // namespace strac
