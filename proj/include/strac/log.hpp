#pragma once

#include <string_view>

namespace strac::log {

enum class Level { kDebug = 0, kInfo = 1, kWarn = 2, kError = 3, kOff = 4 };

// Initialised from the STRAC_LOG_LEVEL environment variable
// (debug|info|warn|error|off, default warn) on first use.
Level level();
void set_level(Level level);

void write(Level level, std::string_view message);
inline void debug(std::string_view m) { write(Level::kDebug, m); }
inline void info(std::string_view m) { write(Level::kInfo, m); }
inline void warn(std::string_view m) { write(Level::kWarn, m); }
inline void error(std::string_view m) { write(Level::kError, m); }

}  // namespace strac::log
