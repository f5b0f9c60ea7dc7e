#pragma once

#include <optional>

#include <nlohmann/json.hpp>

namespace misfit {

inline nlohmann::ordered_json json_optional(const std::optional<double>& v) {
    return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

}  // namespace misfit
