#include "pace/logging.hpp"

#include <cstdlib>
#include <string_view>

#include <spdlog/spdlog.h>

namespace pace {

void init_logging_from_env() {
  spdlog::level::level_enum level = spdlog::level::warn;
  if (const char* env = std::getenv("PACE_LOG_LEVEL")) {
    const std::string_view v(env);
    if (v == "error") level = spdlog::level::err;
    if (v == "warn") level = spdlog::level::warn;
    if (v == "info") level = spdlog::level::info;
    if (v == "debug") level = spdlog::level::debug;
  }
  spdlog::set_level(level);
}

}  // namespace pace
