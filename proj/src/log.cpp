#include "misfit/log.hpp"

#include <cstdlib>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

namespace misfit {

std::optional<spdlog::level::level_enum> parse_log_level(std::string_view name) {
    if (name == "error") return spdlog::level::err;
    if (name == "info") return spdlog::level::info;
    if (name == "debug") return spdlog::level::debug;
    return std::nullopt;
}

void configure_logging() {
    auto logger = spdlog::get("misfit");
    if (!logger) {
        logger = spdlog::stderr_color_mt("misfit");
        logger->set_pattern("[%H:%M:%S.%e] [%^%l%$] %v");
        spdlog::set_default_logger(logger);
    }
    const char* env = std::getenv("MISFIT_LOG");
    const auto level = env ? parse_log_level(env) : spdlog::level::info;
    spdlog::set_level(level.value_or(spdlog::level::info));
    if (env && !level) spdlog::warn("MISFIT_LOG={} not recognized; using info", env);
}

}  // namespace misfit
