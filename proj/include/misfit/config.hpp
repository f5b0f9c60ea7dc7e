#pragma once

#include <cstddef>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "misfit/ablation.hpp"
#include "misfit/pipeline.hpp"
#include "misfit/toy.hpp"

namespace misfit {

/// Everything one CLI invocation can be configured with.
///
/// The JSON document holds the AdaptConfig fields at top level plus the
/// objects "encoder", "toy" and "ablation" and the counts "n_source" and
/// "n_target". Every key is optional; unknown keys are rejected.
struct RunConfig {
    AdaptConfig adapt;
    ToySceneSpec toy;
    AblationGrid ablation;
    std::size_t n_source = 200;
    std::size_t n_target = 200;

    void validate() const;
};

RunConfig parse_run_config(const nlohmann::json& doc);
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace misfit
