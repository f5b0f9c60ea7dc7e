#pragma once

#include <optional>
#include <string_view>

#include <spdlog/common.h>

namespace misfit {

/// Maps "error", "info" or "debug" to a level; anything else is empty.
std::optional<spdlog::level::level_enum> parse_log_level(std::string_view name);

/// Routes the default logger to stderr at the level named by MISFIT_LOG (info when unset).
void configure_logging();

}  // namespace misfit
