#include "misfit/ablation.hpp"

#include <algorithm>
#include <map>
#include <tuple>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "misfit/errors.hpp"
#include "misfit/json_util.hpp"

namespace misfit {

std::string AblationCell::label() const {
    std::string out(to_string(fusion));
    out += self_training ? " +st" : " -st";
    out += style ? " +style" : " -style";
    out += entropy ? " +ent" : " -ent";
    return out;
}

void AblationGrid::validate() const {
    if (seeds.empty()) throw ConfigError("ablation: seeds must not be empty");
    if (cells.empty() && (fusion_modes.empty() || self_training.empty() || style.empty() || entropy.empty())) {
        throw ConfigError("ablation: every axis needs at least one value");
    }
}

std::vector<AblationCell> AblationGrid::expand() const {
    validate();
    if (!cells.empty()) return cells;
    std::vector<AblationCell> out;
    for (auto f : fusion_modes) {
        for (bool st : self_training) {
            for (bool sty : style) {
                for (bool ent : entropy) out.push_back({f, st, sty, ent});
            }
        }
    }
    return out;
}

std::string to_json_line(const AblationRecord& r) {
    nlohmann::ordered_json j;
    j["fusion"] = std::string(to_string(r.cell.fusion));
    j["self_training"] = r.cell.self_training;
    j["style"] = r.cell.style;
    j["entropy"] = r.cell.entropy;
    j["seed"] = r.seed;
    j["miou"] = json_optional(r.eval.miou);
    auto ious = nlohmann::ordered_json::array();
    for (const auto& v : r.eval.class_iou) ious.push_back(json_optional(v));
    j["class_iou"] = ious;
    return j.dump();
}

std::vector<AblationRecord> run_ablation_matrix(const AblationGrid& grid, const SampleStore& source,
                                                const SampleStore& target, const AdaptConfig& base,
                                                const AblationSink& sink) {
    const auto cells = grid.expand();
    base.validate();
    const SampleStore unlabeled = target.without_labels();
    const StyleProfiles profiles = build_style_profiles(unlabeled, base.profile_samples);

    std::map<std::tuple<FusionMode, bool, std::uint64_t>, ModelParams> pretrained;
    std::vector<AblationRecord> records;
    for (const auto& cell : cells) {
        for (auto seed : grid.seeds) {
            AdaptConfig cfg = base;
            cfg.seed = seed;
            cfg.encoder.fusion_mode = cell.fusion;
            cfg.style = cell.style;
            cfg.self_training = cell.self_training;
            cfg.entropy = cell.entropy;

            const auto key = std::make_tuple(cell.fusion, cell.style, seed);
            auto it = pretrained.find(key);
            if (it == pretrained.end()) {
                spdlog::info("ablation: pretraining {} style={} seed={}", to_string(cell.fusion), cell.style, seed);
                it = pretrained.emplace(key, pretrain_source(source, profiles, cfg).params).first;
            }
            spdlog::info("ablation: cell [{}] seed={}", cell.label(), seed);
            const ModelParams model = cell.adapts() ? adapt_target(unlabeled, it->second, cfg).params : it->second;
            AblationRecord rec{cell, seed, evaluate(model, target, cfg)};
            if (sink) sink(rec);
            records.push_back(std::move(rec));
        }
    }
    return records;
}

double median(std::vector<double> values) {
    if (values.empty()) throw InvalidInput("median of an empty set");
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::vector<AblationSummaryRow> summarize(const std::vector<AblationRecord>& records) {
    std::vector<AblationCell> order;
    std::vector<std::vector<double>> values;
    for (const auto& r : records) {
        auto it = std::find(order.begin(), order.end(), r.cell);
        const auto idx = static_cast<std::size_t>(it - order.begin());
        if (it == order.end()) {
            order.push_back(r.cell);
            values.emplace_back();
        }
        values[idx].push_back(r.eval.miou.value_or(0.0));
    }
    std::vector<AblationSummaryRow> rows;
    for (std::size_t i = 0; i < order.size(); ++i) rows.push_back({order[i], median(values[i]), values[i].size()});
    return rows;
}

}  // namespace misfit
