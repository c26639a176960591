#include "strac/env/domain.hpp"

#include <random>
#include <set>

#include "strac/errors.hpp"

namespace strac::env {

void DomainSpec::validate() const {
  if (slots.empty()) throw ConfigError("domain " + name + " has no slots");
  for (const auto& s : slots) {
    if (s.values < 2) {
      throw ConfigError("slot " + s.name + " in " + name + " needs >= 2 values");
    }
  }
  if (database.empty()) throw ConfigError("domain " + name + " has an empty database");
  for (const auto& entity : database) {
    if (entity.size() != slots.size()) {
      throw ConfigError("entity in " + name + " does not assign every slot");
    }
    for (std::size_t i = 0; i < entity.size(); ++i) {
      if (entity[i] < 0 || entity[i] >= slots[i].values) {
        throw ConfigError("entity value out of range for slot " + slots[i].name);
      }
    }
  }
  if (max_turns < 1) throw ConfigError("max_turns must be >= 1");
}

void EnvProfile::validate() const {
  if (!(semantic_error_rate >= 0.0 && semantic_error_rate <= 1.0)) {
    throw ConfigError("semantic error rate must lie in [0,1]");
  }
}

namespace {

DomainSpec generate(std::string name, std::vector<SlotSpec> slots, int entities,
                    std::uint64_t seed) {
  DomainSpec d;
  d.name = std::move(name);
  d.slots = std::move(slots);
  std::mt19937_64 rng(seed);
  std::set<std::vector<int>> seen;
  while (static_cast<int>(d.database.size()) < entities) {
    std::vector<int> entity;
    for (const auto& s : d.slots) {
      entity.push_back(std::uniform_int_distribution<int>(0, s.values - 1)(rng));
    }
    if (seen.insert(entity).second) d.database.push_back(std::move(entity));
  }
  d.validate();
  return d;
}

}  // namespace

DomainSpec bundled_domain(std::string_view name) {
  if (name == "cr") {
    return generate("cr", {{"pricerange", 3}, {"area", 5}, {"food", 12}}, 30, 101);
  }
  if (name == "sfr") {
    return generate("sfr",
                    {{"pricerange", 4},
                     {"area", 10},
                     {"food", 20},
                     {"allowedforkids", 2},
                     {"goodformeal", 4},
                     {"near", 8}},
                    150, 202);
  }
  if (name == "lap") {
    return generate("lap",
                    {{"family", 5},
                     {"purpose", 3},
                     {"pricerange", 3},
                     {"weightrange", 3},
                     {"batteryrating", 3},
                     {"drive", 3},
                     {"platform", 3},
                     {"isforbusiness", 2},
                     {"sysmemory", 4},
                     {"processorclass", 5},
                     {"utility", 4}},
                    120, 303);
  }
  throw ConfigError("unknown bundled domain: " + std::string(name));
}

std::vector<std::string> bundled_domain_names() { return {"cr", "sfr", "lap"}; }

EnvProfile bundled_profile(std::string_view name) {
  if (name == "env1") return {"env1", 0.00, true, UserStyle::kStandard};
  if (name == "env2") return {"env2", 0.00, false, UserStyle::kStandard};
  if (name == "env3") return {"env3", 0.15, true, UserStyle::kStandard};
  if (name == "env4") return {"env4", 0.15, false, UserStyle::kStandard};
  if (name == "env5") return {"env5", 0.15, true, UserStyle::kUnfriendly};
  if (name == "env6") return {"env6", 0.30, true, UserStyle::kStandard};
  throw ConfigError("unknown bundled profile: " + std::string(name));
}

std::vector<std::string> bundled_profile_names() {
  return {"env1", "env2", "env3", "env4", "env5", "env6"};
}

std::string_view to_string(UserStyle style) {
  return style == UserStyle::kStandard ? "standard" : "unfriendly";
}

UserStyle user_style_from_string(std::string_view text) {
  if (text == "standard") return UserStyle::kStandard;
  if (text == "unfriendly") return UserStyle::kUnfriendly;
  throw ConfigError("unknown user style: " + std::string(text));
}

}  // namespace strac::env
