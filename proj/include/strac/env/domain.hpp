#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace strac::env {

struct SlotSpec {
  std::string name;
  int values = 2;
};

// Ontology plus entity database. Entities assign a value index in
// [0, slots[i].values) to every slot.
struct DomainSpec {
  std::string name;
  std::vector<SlotSpec> slots;
  std::vector<std::vector<int>> database;
  int max_turns = 25;

  int slot_count() const { return static_cast<int>(slots.size()); }
  // Throws ConfigError: no slots, a slot with < 2 values, empty database,
  // malformed entity, max_turns < 1.
  void validate() const;
};

enum class UserStyle { kStandard, kUnfriendly };

struct EnvProfile {
  std::string name;
  double semantic_error_rate = 0.0;
  bool masks_on = true;
  UserStyle style = UserStyle::kStandard;

  void validate() const;
};

// Bundled synthetic domains: "cr" (3 slots, 30 entities), "sfr" (6 slots,
// 150 entities), "lap" (11 slots, 120 entities). Databases are generated
// from a fixed seed, so they are identical on every run.
DomainSpec bundled_domain(std::string_view name);
std::vector<std::string> bundled_domain_names();

// Bundled profiles "env1".."env6":
//   env1 e=0.00 masks on    env2 e=0.00 masks off
//   env3 e=0.15 masks on    env4 e=0.15 masks off
//   env5 e=0.15 masks on, unfriendly user
//   env6 e=0.30 masks on
EnvProfile bundled_profile(std::string_view name);
std::vector<std::string> bundled_profile_names();

std::string_view to_string(UserStyle style);
UserStyle user_style_from_string(std::string_view text);

}  // namespace strac::env
