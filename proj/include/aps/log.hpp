#pragma once
// Minimal leveled logging to stderr. The level comes from the APS_LOG
// environment variable (error, warn, info, debug); default warn.

#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string>
#include <string_view>

namespace aps::log {

enum class Level { Error = 0, Warn = 1, Info = 2, Debug = 3 };

inline Level parse_level(std::string_view s, Level fallback = Level::Warn) {
  if (s == "error") return Level::Error;
  if (s == "warn" || s == "warning") return Level::Warn;
  if (s == "info") return Level::Info;
  if (s == "debug") return Level::Debug;
  return fallback;
}

inline Level& threshold() {
  static Level level = [] {
    const char* env = std::getenv("APS_LOG");
    return env ? parse_level(env) : Level::Warn;
  }();
  return level;
}

inline void write(Level level, std::string_view msg) {
  if (level > threshold()) return;
  static std::mutex mu;
  static constexpr const char* names[] = {"error", "warn", "info", "debug"};
  std::lock_guard lock(mu);
  std::cerr << "[aps " << names[static_cast<int>(level)] << "] " << msg << '\n';
}

inline void error(std::string_view msg) { write(Level::Error, msg); }
inline void warn(std::string_view msg) { write(Level::Warn, msg); }
inline void info(std::string_view msg) { write(Level::Info, msg); }
inline void debug(std::string_view msg) { write(Level::Debug, msg); }

}  // namespace aps::log
