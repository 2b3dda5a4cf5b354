#include "dsft/log.hpp"

#include <spdlog/sinks/stdout_color_sinks.h>

#include <cstdlib>

namespace dsft {

void init_logging() {
  auto logger = spdlog::get("dsft");
  if (!logger) logger = spdlog::stderr_color_mt("dsft");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%H:%M:%S] [%^%l%$] %v");
  spdlog::set_level(spdlog::level::info);
  if (const char* env = std::getenv("DSFT_LOG")) {
    spdlog::set_level(spdlog::level::from_str(env));
  }
}

}  // namespace dsft
