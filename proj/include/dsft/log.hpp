#pragma once

#include <spdlog/spdlog.h>

namespace dsft {

// Reads DSFT_LOG (trace|debug|info|warn|error|off) and configures the stderr logger.
void init_logging();

}  // namespace dsft
