#pragma once

#include <cstdlib>
#include <iostream>
#include <mutex>
#include <sstream>
#include <string>
#include <string_view>

namespace vif::log {

enum class Level { Error = 0, Info = 1, Debug = 2 };

inline Level level_from_env() {
  const char* env = std::getenv("VIF_LOG");
  if (env == nullptr) return Level::Error;
  const std::string_view v(env);
  if (v == "debug") return Level::Debug;
  if (v == "info") return Level::Info;
  return Level::Error;
}

inline Level& current_level() {
  static Level level = level_from_env();
  return level;
}

inline bool enabled(Level lvl) { return static_cast<int>(lvl) <= static_cast<int>(current_level()); }

inline void write(Level lvl, std::string_view msg) {
  if (!enabled(lvl)) return;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  const char* tag = lvl == Level::Error ? "error" : (lvl == Level::Info ? "info" : "debug");
  std::cerr << "[vif:" << tag << "] " << msg << '\n';
}

template <typename... Args>
void emit(Level lvl, const Args&... args) {
  if (!enabled(lvl)) return;
  std::ostringstream os;
  (os << ... << args);
  write(lvl, os.str());
}

template <typename... Args>
void error(const Args&... args) { emit(Level::Error, args...); }
template <typename... Args>
void info(const Args&... args) { emit(Level::Info, args...); }
template <typename... Args>
void debug(const Args&... args) { emit(Level::Debug, args...); }

}  // namespace vif::log
