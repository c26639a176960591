#pragma once

#include <filesystem>
#include <string>

#include "strac/harness/experiment.hpp"

namespace strac::harness {

// JSON experiment file. Every key is optional; missing keys keep defaults.
//
// {
//   "mode": "single" | "multi",
//   "domains": ["cr", {"name": "toy", "max_turns": 25,
//                      "slots": [{"name": "area", "values": 3}],
//                      "database": [[0], [2]]}],
//   "profile": "env1" | {"name": "p", "semantic_error_rate": 0.1,
//                        "masks_on": true, "user": "standard"},
//   "dialogues": 4000, "count_per_domain": true,
//   "milestone_every": 200, "eval_dialogues": 500,
//   "seeds": [0, 1, 2],
//   "hierarchical": true, "noisy": true, "noisy_heads": false,
//   "serial": false, "replay_capacity": 1000, "checkpoints": true,
//   "out": "runs/a",
//   "hyper": {"gamma": 0.99, "n": 5, "rho_bar": 1, "c_bar": 5,
//             "lambda1": 0.3, "lambda2": 0.001, "learning_rate": 1e-4,
//             "batch": 64, "clip_norm": 10}
// }
//
// Strings in "domains" / "profile" name bundled entries. Throws ConfigError
// on unknown keys or malformed values.
ExperimentConfig config_from_json(const std::string& text,
                                  ExperimentConfig base = ExperimentConfig::defaults());
ExperimentConfig load_config(const std::filesystem::path& file,
                             ExperimentConfig base = ExperimentConfig::defaults());

env::DomainSpec domain_from_json(const std::string& text);
env::EnvProfile profile_from_json(const std::string& text);

Mode mode_from_string(const std::string& text);
std::string to_string(Mode mode);

}  // namespace strac::harness
