#include "misfit/cli.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fstream>
#include <optional>

#include "misfit/ablation.hpp"
#include "misfit/checkpoint.hpp"
#include "misfit/config.hpp"
#include "misfit/dataset.hpp"
#include "misfit/errors.hpp"
#include "misfit/log.hpp"
#include "misfit/pipeline.hpp"
#include "misfit/toy.hpp"

namespace misfit {

namespace {

namespace fs = std::filesystem;

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string data, profile, model, out, metrics, src;
    std::optional<std::size_t> n_source, n_target;
    std::optional<double> beta_rgb, beta_depth;
};

RunConfig load_config(const Options& o) {
    RunConfig cfg = o.config.empty() ? RunConfig{} : load_run_config(o.config);
    if (o.seed) {
        cfg.adapt.seed = *o.seed;
        cfg.toy.seed = *o.seed;
        cfg.ablation.seeds = {*o.seed};
    }
    return cfg;
}

/// NDJSON writer; the file is truncated on open. An empty path writes nothing.
class MetricsFile {
public:
    explicit MetricsFile(const std::string& path) : path_(path) {
        if (path.empty()) return;
        stream_.open(path, std::ios::binary | std::ios::trunc);
        if (!stream_) throw FileError("cannot open metrics file", path);
    }

    template <typename Record>
    void write(const Record& r) {
        if (!stream_.is_open()) return;
        stream_ << to_json_line(r) << '\n';
        if (!stream_) throw FileError("cannot write metrics file", path_);
    }

    MetricsSink sink() {
        if (!stream_.is_open()) return {};
        return [this](const MetricsRecord& r) { write(r); };
    }

private:
    std::string path_;
    std::ofstream stream_;
};

void print_eval(std::ostream& out, const MetricsRecord& rec) {
    for (std::size_t c = 0; c < rec.class_iou.size(); ++c) {
        const auto& v = rec.class_iou[c];
        out << fmt::format("class {} IoU {}\n", c, v ? fmt::format("{:.4f}", *v) : std::string("n/a"));
    }
    out << fmt::format("mIoU {:.4f}\n", rec.miou.value_or(0.0));
}

int cmd_gen_toy(const Options& o, std::ostream& out) {
    RunConfig cfg = load_config(o);
    if (o.n_source) cfg.n_source = *o.n_source;
    if (o.n_target) cfg.n_target = *o.n_target;
    const auto m = gen_toy(cfg.toy, cfg.n_source, cfg.n_target, o.out);
    out << fmt::format("wrote {} source and {} target frames to {}\n", m.source.entries.size(),
                       m.target.entries.size(), o.out);
    return kExitOk;
}

int cmd_stylize(const Options& o, std::ostream& out) {
    RunConfig cfg = load_config(o);
    if (o.beta_rgb) cfg.adapt.beta_rgb = *o.beta_rgb;
    if (o.beta_depth) cfg.adapt.beta_d = *o.beta_depth;
    cfg.adapt.style = true;
    cfg.adapt.validate();
    const SampleStore source = load_dataset(o.src);
    const StyleProfiles profiles = build_style_profiles(load_dataset(o.profile), cfg.adapt.profile_samples);
    std::vector<ImageSample> styled;
    styled.reserve(source.size());
    for (std::size_t i = 0; i < source.size(); ++i) styled.push_back(pretraining_view(source.at(i), profiles, cfg.adapt));
    const auto m = save_dataset(o.out, read_manifest(o.src).split, SampleStore(std::move(styled)));
    out << fmt::format("stylized {} frames into {}\n", m.entries.size(), o.out);
    return kExitOk;
}

int cmd_pretrain(const Options& o, std::ostream& out) {
    const RunConfig cfg = load_config(o);
    const SampleStore source = load_dataset(o.data);
    StyleProfiles profiles;
    if (cfg.adapt.style) {
        if (o.profile.empty()) throw UsageError("pretrain: --profile is required when style transfer is on");
        profiles = build_style_profiles(load_dataset(o.profile).without_labels(), cfg.adapt.profile_samples);
    }
    MetricsFile metrics(o.metrics);
    const TrainResult r = pretrain_source(source, profiles, cfg.adapt, metrics.sink());
    save_checkpoint(o.out, r.params);
    out << fmt::format("pretrained {} steps, final loss {:.4f}, saved {}\n", r.steps, r.loss_curve.back(), o.out);
    return kExitOk;
}

int cmd_adapt(const Options& o, std::ostream& out) {
    RunConfig cfg = load_config(o);
    const ModelParams pretrained = load_checkpoint(o.model);
    cfg.adapt.encoder = pretrained.config();
    const SampleStore target = load_dataset(o.data).without_labels();
    MetricsFile metrics(o.metrics);
    const TrainResult r = adapt_target(target, pretrained, cfg.adapt, metrics.sink());
    save_checkpoint(o.out, r.params);
    out << fmt::format("adapted {} steps, saved {}\n", r.steps, o.out);
    return kExitOk;
}

int cmd_eval(const Options& o, std::ostream& out) {
    RunConfig cfg = load_config(o);
    const ModelParams model = load_checkpoint(o.model);
    cfg.adapt.encoder = model.config();
    const MetricsRecord rec = evaluate(model, load_dataset(o.data), cfg.adapt);
    MetricsFile metrics(o.metrics);
    metrics.write(rec);
    print_eval(out, rec);
    return kExitOk;
}

int cmd_ablate(const Options& o, std::ostream& out) {
    const RunConfig cfg = load_config(o);
    SampleStore source, target;
    if (o.data.empty()) {
        source = generate_split(cfg.toy, ToyDomain::source, cfg.n_source);
        target = generate_split(cfg.toy, ToyDomain::target, cfg.n_target);
    } else {
        source = load_dataset(fs::path(o.data) / "source");
        target = load_dataset(fs::path(o.data) / "target");
    }
    MetricsFile metrics(o.out);
    const auto records = run_ablation_matrix(cfg.ablation, source, target, cfg.adapt,
                                             [&](const AblationRecord& r) { metrics.write(r); });
    out << fmt::format("{:<36} {:>6} {:>12}\n", "cell", "runs", "median mIoU");
    for (const auto& row : summarize(records)) {
        out << fmt::format("{:<36} {:>6} {:>12.4f}\n", row.cell.label(), row.runs, row.median_miou);
    }
    return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    configure_logging();
    CLI::App app{"Toy multimodal source-free domain adaptation", args.empty() ? "misfit" : args.front()};
    app.require_subcommand(1);
    Options o;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config, "JSON run configuration")->check(CLI::ExistingFile);
        sub->add_option("--seed", o.seed, "Override every seed in the configuration");
    };

    auto* gen = app.add_subcommand("gen-toy", "Generate the two-domain toy RGB-D dataset");
    add_common(gen);
    gen->add_option("--out", o.out, "Output directory (receives source/ and target/)")->required();
    gen->add_option("--n-source", o.n_source, "Number of source frames");
    gen->add_option("--n-target", o.n_target, "Number of target frames");

    auto* sty = app.add_subcommand("stylize", "Amplitude-swap a split toward a target split's style");
    add_common(sty);
    sty->add_option("--src", o.src, "Source split directory")->required();
    sty->add_option("--profile", o.profile, "Target split directory providing the amplitude profile")->required();
    sty->add_option("--out", o.out, "Output split directory")->required();
    sty->add_option("--beta-rgb", o.beta_rgb, "RGB window fraction");
    sty->add_option("--beta-depth", o.beta_depth, "Disparity window fraction");

    auto* pre = app.add_subcommand("pretrain", "Supervised training on the source split");
    add_common(pre);
    pre->add_option("--data", o.data, "Labeled source split directory")->required();
    pre->add_option("--profile", o.profile, "Target split directory providing the style profile");
    pre->add_option("--out", o.out, "Checkpoint to write")->required();
    pre->add_option("--metrics", o.metrics, "NDJSON metrics file");

    auto* ada = app.add_subcommand("adapt", "Source-free adaptation on the target split");
    add_common(ada);
    ada->add_option("--model", o.model, "Pretrained checkpoint")->required();
    ada->add_option("--data", o.data, "Target split directory (labels are ignored)")->required();
    ada->add_option("--out", o.out, "Checkpoint to write")->required();
    ada->add_option("--metrics", o.metrics, "NDJSON metrics file");

    auto* ev = app.add_subcommand("eval", "Report per-class IoU and mIoU on a labeled split");
    add_common(ev);
    ev->add_option("--model", o.model, "Checkpoint")->required();
    ev->add_option("--data", o.data, "Labeled split directory")->required();
    ev->add_option("--metrics", o.metrics, "NDJSON metrics file");

    auto* abl = app.add_subcommand("ablate", "Run the module ablation matrix");
    add_common(abl);
    abl->add_option("--data", o.data, "Dataset root with source/ and target/ (generated in memory when absent)");
    abl->add_option("--out", o.out, "NDJSON file receiving one record per run");

    std::vector<std::string> argv_store = args.empty() ? std::vector<std::string>{"misfit"} : args;
    std::vector<const char*> argv;
    for (const auto& a : argv_store) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n";
        const auto subs = app.get_subcommands();
        err << (subs.empty() ? app.help() : subs.front()->help());
        return kExitUsage;
    }

    try {
        if (gen->parsed()) return cmd_gen_toy(o, out);
        if (sty->parsed()) return cmd_stylize(o, out);
        if (pre->parsed()) return cmd_pretrain(o, out);
        if (ada->parsed()) return cmd_adapt(o, out);
        if (ev->parsed()) return cmd_eval(o, out);
        return cmd_ablate(o, out);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
}

}  // namespace misfit
