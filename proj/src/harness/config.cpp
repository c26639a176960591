#include "strac/harness/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "strac/errors.hpp"

namespace strac::harness {

using nlohmann::json;

namespace {

void reject_unknown(const json& obj, const std::set<std::string>& known, const std::string& where) {
  for (const auto& [key, _] : obj.items()) {
    if (!known.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
T get(const json& obj, const char* key, const std::string& where) {
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

env::DomainSpec parse_domain(const json& j) {
  if (j.is_string()) return env::bundled_domain(j.get<std::string>());
  if (!j.is_object()) throw ConfigError("a domain is a bundled name or an object");
  reject_unknown(j, {"name", "slots", "database", "max_turns"}, "domain");
  env::DomainSpec d;
  d.name = get<std::string>(j, "name", "domain");
  for (const auto& s : j.at("slots")) {
    reject_unknown(s, {"name", "values"}, "slot");
    d.slots.push_back({get<std::string>(s, "name", "slot"), get<int>(s, "values", "slot")});
  }
  d.database = get<std::vector<std::vector<int>>>(j, "database", "domain");
  if (j.contains("max_turns")) d.max_turns = get<int>(j, "max_turns", "domain");
  d.validate();
  return d;
}

env::EnvProfile parse_profile(const json& j) {
  if (j.is_string()) return env::bundled_profile(j.get<std::string>());
  if (!j.is_object()) throw ConfigError("a profile is a bundled name or an object");
  reject_unknown(j, {"name", "semantic_error_rate", "masks_on", "user"}, "profile");
  env::EnvProfile p;
  p.name = j.value("name", std::string("custom"));
  if (j.contains("semantic_error_rate")) {
    p.semantic_error_rate = get<double>(j, "semantic_error_rate", "profile");
  }
  if (j.contains("masks_on")) p.masks_on = get<bool>(j, "masks_on", "profile");
  if (j.contains("user")) p.style = env::user_style_from_string(get<std::string>(j, "user", "profile"));
  p.validate();
  return p;
}

json parse_text(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("invalid JSON: ") + e.what());
  }
}

}  // namespace

Mode mode_from_string(const std::string& text) {
  if (text == "single") return Mode::kSingle;
  if (text == "multi") return Mode::kMulti;
  throw ConfigError("mode must be single or multi, got " + text);
}

std::string to_string(Mode mode) { return mode == Mode::kSingle ? "single" : "multi"; }

env::DomainSpec domain_from_json(const std::string& text) { return parse_domain(parse_text(text)); }

env::EnvProfile profile_from_json(const std::string& text) {
  return parse_profile(parse_text(text));
}

ExperimentConfig config_from_json(const std::string& text, ExperimentConfig base) {
  const json j = parse_text(text);
  if (!j.is_object()) throw ConfigError("experiment config must be a JSON object");
  reject_unknown(j,
                 {"mode", "domains", "profile", "dialogues", "count_per_domain",
                  "milestone_every", "eval_dialogues", "seeds", "hierarchical", "noisy",
                  "noisy_heads", "serial", "replay_capacity", "checkpoints", "episode_log", "out",
                  "hyper"},
                 "config");
  ExperimentConfig c = std::move(base);
  const std::string where = "config";
  if (j.contains("mode")) c.mode = mode_from_string(get<std::string>(j, "mode", where));
  if (j.contains("domains")) {
    c.domains.clear();
    for (const auto& d : j.at("domains")) c.domains.push_back(parse_domain(d));
  }
  if (j.contains("profile")) c.profile = parse_profile(j.at("profile"));
  if (j.contains("dialogues")) c.dialogues = get<int>(j, "dialogues", where);
  if (j.contains("count_per_domain")) c.count_per_domain = get<bool>(j, "count_per_domain", where);
  if (j.contains("milestone_every")) c.milestone_every = get<int>(j, "milestone_every", where);
  if (j.contains("eval_dialogues")) c.eval_dialogues = get<int>(j, "eval_dialogues", where);
  if (j.contains("seeds")) c.seeds = get<std::vector<std::uint64_t>>(j, "seeds", where);
  if (j.contains("hierarchical")) c.policy.hierarchical = get<bool>(j, "hierarchical", where);
  if (j.contains("noisy")) c.policy.noisy = get<bool>(j, "noisy", where);
  if (j.contains("noisy_heads")) c.policy.noisy_heads = get<bool>(j, "noisy_heads", where);
  if (j.contains("serial")) c.serial = get<bool>(j, "serial", where);
  if (j.contains("replay_capacity")) {
    c.replay_capacity = get<std::size_t>(j, "replay_capacity", where);
  }
  if (j.contains("checkpoints")) c.write_checkpoints = get<bool>(j, "checkpoints", where);
  if (j.contains("episode_log")) c.write_episode_log = get<bool>(j, "episode_log", where);
  if (j.contains("out")) c.out_dir = get<std::string>(j, "out", where);
  if (j.contains("hyper")) {
    const json& h = j.at("hyper");
    reject_unknown(h,
                   {"gamma", "n", "rho_bar", "c_bar", "lambda1", "lambda2", "learning_rate",
                    "batch", "clip_norm"},
                   "hyper");
    rl::LearnerConfig& l = c.learner;
    if (h.contains("gamma")) l.vtrace.gamma = get<double>(h, "gamma", "hyper");
    if (h.contains("n")) l.vtrace.n = get<int>(h, "n", "hyper");
    if (h.contains("rho_bar")) l.vtrace.rho_bar = get<double>(h, "rho_bar", "hyper");
    if (h.contains("c_bar")) l.vtrace.c_bar = get<double>(h, "c_bar", "hyper");
    if (h.contains("lambda1")) l.weights.policy = get<double>(h, "lambda1", "hyper");
    if (h.contains("lambda2")) l.weights.entropy = get<double>(h, "lambda2", "hyper");
    if (h.contains("learning_rate")) l.adam.learning_rate = get<double>(h, "learning_rate", "hyper");
    if (h.contains("batch")) l.batch = get<int>(h, "batch", "hyper");
    if (h.contains("clip_norm")) l.clip_norm = get<double>(h, "clip_norm", "hyper");
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& file, ExperimentConfig base) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot read config " + file.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return config_from_json(buf.str(), std::move(base));
}

}  // namespace strac::harness
