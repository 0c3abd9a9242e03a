#pragma once

#include <cstdint>
#include <cstdio>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

namespace geod {

// All recoverable failures surface as geod::Error; the CLI maps uncaught
// Errors to exit code 2 and argument problems to exit code 1.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

#define GEOD_CHECK(cond, msg)                                   \
  do {                                                          \
    if (!(cond)) {                                              \
      std::ostringstream oss_;                                  \
      oss_ << msg;                                              \
      throw ::geod::Error(oss_.str());                          \
    }                                                           \
  } while (0)

// ---------------------------------------------------------------------------
// Logging. Level comes from the GEOD_LOG environment variable
// (error|info|debug, default info). Everything goes to stderr so stdout
// stays clean for machine-readable output (run.json echo, eval reports).
// ---------------------------------------------------------------------------

enum class LogLevel { kError = 0, kInfo = 1, kDebug = 2 };

LogLevel log_level();

void log_msg(LogLevel level, const std::string& msg);

#define GEOD_LOG_AT(level, msg)                       \
  do {                                                \
    if (::geod::log_level() >= (level)) {             \
      std::ostringstream oss_;                        \
      oss_ << msg;                                    \
      ::geod::log_msg((level), oss_.str());           \
    }                                                 \
  } while (0)

#define LOG_ERROR(msg) GEOD_LOG_AT(::geod::LogLevel::kError, msg)
#define LOG_INFO(msg) GEOD_LOG_AT(::geod::LogLevel::kInfo, msg)
#define LOG_DEBUG(msg) GEOD_LOG_AT(::geod::LogLevel::kDebug, msg)

// ---------------------------------------------------------------------------
// Deterministic RNG. One engine per logical stream; child streams are split
// off with next_seed() so reordering one consumer never shifts another.
// ---------------------------------------------------------------------------

class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed ^ 0x9e3779b97f4a7c15ULL) {}

  double uniform(double lo, double hi) {
    std::uniform_real_distribution<double> d(lo, hi);
    return d(gen_);
  }

  double normal() {
    std::normal_distribution<double> d(0.0, 1.0);
    return d(gen_);
  }

  // Inclusive bounds.
  int uniform_int(int lo, int hi) {
    std::uniform_int_distribution<int> d(lo, hi);
    return d(gen_);
  }

  uint64_t next_seed() { return gen_(); }

 private:
  std::mt19937_64 gen_;
};

}  // namespace geod
