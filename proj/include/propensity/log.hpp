#pragma once

#include <cstdlib>
#include <iostream>
#include <string>
#include <string_view>

namespace propensity::log {

enum class Level { quiet = 0, info = 1, debug = 2 };

// Reads PROPENSITY_LOG once per process: "quiet" (default), "info", "debug".
inline Level level() {
  static const Level lvl = [] {
    const char* env = std::getenv("PROPENSITY_LOG");
    if (env == nullptr) return Level::quiet;
    const std::string_view v(env);
    if (v == "debug") return Level::debug;
    if (v == "info") return Level::info;
    return Level::quiet;
  }();
  return lvl;
}

inline void info(const std::string& msg) {
  if (level() >= Level::info) std::cerr << "[info] " << msg << "\n";
}

inline void debug(const std::string& msg) {
  if (level() >= Level::debug) std::cerr << "[debug] " << msg << "\n";
}

}  // namespace propensity::log
