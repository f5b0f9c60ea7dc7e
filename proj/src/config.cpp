#include "misfit/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "misfit/errors.hpp"

namespace misfit {

namespace {

using nlohmann::json;

/// Reads fields of one JSON object and rejects any key nobody asked for.
class ObjectReader {
public:
    ObjectReader(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
        if (!obj_.is_object()) throw ConfigError(where() + " must be a JSON object");
    }

    template <typename T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        auto it = obj_.find(key);
        if (it == obj_.end()) return;
        try {
            out = convert<T>(*it);
        } catch (const json::exception& e) {
            throw ConfigError(where(key) + ": " + e.what());
        } catch (const ConfigError& e) {
            throw ConfigError(where(key) + ": " + e.what());
        }
    }

    /// Returns the sub-object under `key`, or null when absent.
    const json* child(const char* key) {
        seen_.insert(key);
        auto it = obj_.find(key);
        return it == obj_.end() ? nullptr : &*it;
    }

    std::string where(const std::string& key = {}) const {
        if (key.empty()) return path_.empty() ? std::string("config") : path_;
        return path_.empty() ? key : path_ + "." + key;
    }

    void finish() const {
        for (const auto& [key, value] : obj_.items()) {
            if (!seen_.count(key)) throw ConfigError("unknown config key: " + where(key));
        }
    }

private:
    template <typename T>
    static T convert(const json& v) {
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) throw ConfigError("expected a boolean");
        } else if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_integer()) throw ConfigError("expected an integer");
            if (std::is_unsigned_v<T> && v.is_number_integer() && !v.is_number_unsigned()) {
                throw ConfigError("expected a non-negative integer");
            }
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!v.is_number()) throw ConfigError("expected a number");
        }
        return v.get<T>();
    }

    const json& obj_;
    std::string path_;
    std::set<std::string> seen_;
};

FilterScope parse_scope(const std::string& s) {
    if (s == "per_class") return FilterScope::per_class;
    if (s == "global") return FilterScope::global;
    throw ConfigError("filter_scope must be \"per_class\" or \"global\", got \"" + s + "\"");
}

FusionMode parse_fusion(const std::string& s) {
    try {
        return parse_fusion_mode(s);
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
}

void parse_encoder(const json& doc, EncoderConfig& enc) {
    ObjectReader r(doc, "encoder");
    r.get("patch_size", enc.patch_size);
    r.get("in_channels", enc.in_channels);
    r.get("stage_dims", enc.stage_dims);
    r.get("heads_per_stage", enc.heads_per_stage);
    r.get("num_classes", enc.num_classes);
    r.get("mlp_ratio", enc.mlp_ratio);
    r.get("decoder_dim", enc.decoder_dim);
    std::string fusion(to_string(enc.fusion_mode));
    r.get("fusion_mode", fusion);
    enc.fusion_mode = parse_fusion(fusion);
    r.finish();
    enc.num_stages = enc.stage_dims.size();
}

void parse_toy(const json& doc, ToySceneSpec& toy) {
    ObjectReader r(doc, "toy");
    r.get("image_size", toy.image_size);
    r.get("palette", toy.palette);
    r.get("disparity", toy.disparity);
    r.get("min_objects", toy.min_objects);
    r.get("max_objects", toy.max_objects);
    r.get("shade_jitter", toy.shade_jitter);
    r.get("hue_shift_deg", toy.hue_shift_deg);
    r.get("texture_amplitude", toy.texture_amplitude);
    r.get("color_noise_sigma", toy.color_noise_sigma);
    r.get("hole_probability", toy.hole_probability);
    r.get("disparity_noise_sigma", toy.disparity_noise_sigma);
    r.get("seed", toy.seed);
    r.finish();
}

AblationCell parse_cell(const json& doc, std::size_t index) {
    ObjectReader r(doc, "ablation.cells[" + std::to_string(index) + "]");
    AblationCell cell;
    std::string fusion(to_string(cell.fusion));
    r.get("fusion", fusion);
    cell.fusion = parse_fusion(fusion);
    r.get("self_training", cell.self_training);
    r.get("style", cell.style);
    r.get("entropy", cell.entropy);
    r.finish();
    return cell;
}

void parse_ablation(const json& doc, AblationGrid& grid) {
    ObjectReader r(doc, "ablation");
    std::vector<std::string> fusions;
    for (auto f : grid.fusion_modes) fusions.emplace_back(to_string(f));
    r.get("fusion_modes", fusions);
    grid.fusion_modes.clear();
    for (const auto& f : fusions) grid.fusion_modes.push_back(parse_fusion(f));
    r.get("self_training", grid.self_training);
    r.get("style", grid.style);
    r.get("entropy", grid.entropy);
    r.get("seeds", grid.seeds);
    if (const json* cells = r.child("cells")) {
        if (!cells->is_array()) throw ConfigError("ablation.cells must be an array");
        grid.cells.clear();
        for (std::size_t i = 0; i < cells->size(); ++i) grid.cells.push_back(parse_cell((*cells)[i], i));
    }
    r.finish();
}

}  // namespace

void RunConfig::validate() const {
    adapt.validate();
    toy.validate();
    ablation.validate();
    if (toy.image_size != 0) adapt.encoder.validate_input(toy.image_size, toy.image_size);
}

RunConfig parse_run_config(const nlohmann::json& doc) {
    RunConfig cfg;
    ObjectReader r(doc, "");
    AdaptConfig& a = cfg.adapt;
    r.get("beta_rgb", a.beta_rgb);
    r.get("beta_d", a.beta_d);
    r.get("tau", a.tau);
    r.get("top_fraction", a.top_fraction);
    std::string scope = a.filter_scope == FilterScope::per_class ? "per_class" : "global";
    r.get("filter_scope", scope);
    a.filter_scope = parse_scope(scope);
    r.get("ema_momentum", a.ema_momentum);
    r.get("ema_period", a.ema_period);
    r.get("lambda_ent", a.lambda_ent);
    r.get("lr", a.lr);
    r.get("weight_decay", a.weight_decay);
    r.get("epochs", a.epochs);
    r.get("batch_size", a.batch_size);
    r.get("adapt_epochs", a.adapt_epochs);
    r.get("adapt_batch_size", a.adapt_batch_size);
    r.get("seed", a.seed);
    r.get("style", a.style);
    r.get("self_training", a.self_training);
    r.get("entropy", a.entropy);
    r.get("flip", a.flip);
    r.get("profile_samples", a.profile_samples);
    r.get("disparity_max", a.disparity_max);
    r.get("log_every", a.log_every);
    r.get("n_source", cfg.n_source);
    r.get("n_target", cfg.n_target);
    if (const json* enc = r.child("encoder")) parse_encoder(*enc, a.encoder);
    if (const json* toy = r.child("toy")) parse_toy(*toy, cfg.toy);
    if (const json* abl = r.child("ablation")) parse_ablation(*abl, cfg.ablation);
    r.finish();
    cfg.validate();
    return cfg;
}

RunConfig parse_run_config(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    return parse_run_config(doc);
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FileError("cannot open config file", path.string());
    std::ostringstream text;
    text << in.rdbuf();
    return parse_run_config(text.str());
}

}  // namespace misfit
