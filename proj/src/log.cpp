#include "strac/log.hpp"

#include <atomic>
#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string>

namespace strac::log {

namespace {

Level parse(const char* text) {
  if (text == nullptr) return Level::kWarn;
  const std::string s(text);
  if (s == "debug") return Level::kDebug;
  if (s == "info") return Level::kInfo;
  if (s == "error") return Level::kError;
  if (s == "off") return Level::kOff;
  return Level::kWarn;
}

std::atomic<Level>& current() {
  static std::atomic<Level> lvl{parse(std::getenv("STRAC_LOG_LEVEL"))};
  return lvl;
}

constexpr const char* kNames[] = {"debug", "info", "warn", "error"};

}  // namespace

Level level() { return current().load(); }
void set_level(Level lvl) { current().store(lvl); }

void write(Level lvl, std::string_view message) {
  if (lvl < level() || lvl == Level::kOff) return;
  static std::mutex mu;
  std::lock_guard lock(mu);
  std::cerr << "[strac " << kNames[static_cast<int>(lvl)] << "] " << message << '\n';
}

}  // namespace strac::log
