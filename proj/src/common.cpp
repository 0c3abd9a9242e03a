#include "geod/common.hpp"

#include <cstdlib>
#include <mutex>

namespace geod {

LogLevel log_level() {
  static LogLevel level = [] {
    const char* env = std::getenv("GEOD_LOG");
    if (env == nullptr) return LogLevel::kInfo;
    std::string v(env);
    if (v == "error") return LogLevel::kError;
    if (v == "debug") return LogLevel::kDebug;
    return LogLevel::kInfo;
  }();
  return level;
}

void log_msg(LogLevel level, const std::string& msg) {
  static std::mutex mu;
  const char* tag = level == LogLevel::kError ? "error" : level == LogLevel::kInfo ? "info" : "debug";
  std::lock_guard<std::mutex> lock(mu);
  std::fprintf(stderr, "[geod:%s] %s\n", tag, msg.c_str());
}

}  // namespace geod
