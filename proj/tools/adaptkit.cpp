// adaptkit command-line front end: pretraining, fine-tuning, ablation
// sweeps and feature export over the synthetic task family.
//
// Exit codes: 0 success, 2 configuration/contract error, 3 I/O error,
// 4 numerical abort (non-finite loss).

#include <CLI11.hpp>

#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "adaptkit/checkpoint.hpp"
#include "adaptkit/config.hpp"
#include "adaptkit/features.hpp"
#include "adaptkit/synthdata.hpp"
#include "adaptkit/train.hpp"
#include "adaptkit/vit.hpp"

namespace fs = std::filesystem;
using namespace adaptkit;

namespace {

struct CommonFlags {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_override;
    std::string mode_override;
};

RunConfig load_config(const CommonFlags& flags) {
    RunConfig cfg = RunConfig::from_file(flags.config_path);
    if (flags.seed) {
        cfg.train.seed = *flags.seed;
    }
    if (!flags.out_override.empty()) cfg.out_dir = flags.out_override;
    if (!flags.mode_override.empty()) {
        cfg.train.mode = tuning_mode_from_string(flags.mode_override);
        cfg.tuning.mode = cfg.train.mode;
    }
    return cfg;
}

// Run directories are named by timestamp + seed and never reused: if the
// name exists a numeric suffix is appended.
fs::path make_run_dir(const std::string& out_root, const std::string& tag,
                      std::uint64_t seed) {
    std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char stamp[32];
    std::strftime(stamp, sizeof(stamp), "%Y%m%d-%H%M%S", &tm);
    const std::string base = tag + "-" + stamp + "-seed" + std::to_string(seed);
    fs::path dir = fs::path(out_root) / base;
    int suffix = 0;
    while (fs::exists(dir)) {
        ++suffix;
        dir = fs::path(out_root) / (base + "-" + std::to_string(suffix));
    }
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create run directory " + dir.string() + ": " + ec.message());
    return dir;
}

TaskPair build_task(const RunConfig& cfg) {
    if (cfg.task.image_size != cfg.model.image_size ||
        cfg.task.channels != cfg.model.channels || cfg.task.frames != cfg.model.frames) {
        throw ConfigError("task geometry (" + std::to_string(cfg.task.image_size) + "px, " +
                          std::to_string(cfg.task.channels) + "ch, " +
                          std::to_string(cfg.task.frames) +
                          " frames) does not match the model config");
    }
    return generate(cfg.task);
}

void print_summary(const fs::path& dir, const RunReport& report) {
    std::cout << "run_dir " << dir.string() << "\n";
    if (!report.rows.empty()) {
        std::cout << "final_epoch " << report.rows.back().epoch << "\n"
                  << "final_train_loss " << report.rows.back().train_loss << "\n"
                  << "final_eval_top1 " << report.rows.back().eval_top1 << "\n"
                  << "tunable_params " << report.rows.back().tunable_params << "\n";
    }
}

int cmd_pretrain(const CommonFlags& flags) {
    RunConfig cfg = load_config(flags);
    if (cfg.train.mode != TuningMode::full) {
        throw ConfigError("pretrain full-tunes a fresh backbone; set train.mode=full");
    }
    TaskPair task = build_task(cfg);
    VitModel model(cfg.model, cfg.tuning, cfg.train.seed);
    const fs::path dir = make_run_dir(cfg.out_dir, "pretrain", cfg.train.seed);
    cfg.write_resolved((dir / "resolved.cfg").string());
    RunReport report = train(model, task.train, task.eval, cfg.train);
    report.write_csv((dir / "report.csv").string());
    const std::string hash = save_checkpoint(model, (dir / "backbone.ckpt").string());
    print_summary(dir, report);
    std::cout << "checkpoint " << (dir / "backbone.ckpt").string() << "\n"
              << "checkpoint_hash " << hash << "\n";
    return 0;
}

RunReport finetune_once(RunConfig cfg, const fs::path& dir) {
    cfg.write_resolved((dir / "resolved.cfg").string());
    VitModel model(cfg.model, cfg.tuning, cfg.train.seed);
    if (cfg.backbone_path.empty()) {
        throw ConfigError("finetune requires paths.backbone pointing at a pretrained "
                          "checkpoint");
    }
    load_checkpoint_into(model, cfg.backbone_path, ParamSubset::backbone);
    TaskPair task = build_task(cfg);
    RunReport report = train(model, task.train, task.eval, cfg.train);
    report.write_csv((dir / "report.csv").string());
    const std::string hash = save_delta_checkpoint(model, (dir / "delta.ckpt").string());
    std::cout << "delta " << (dir / "delta.ckpt").string() << "\n"
              << "delta_hash " << hash << "\n";
    return report;
}

int cmd_finetune(const CommonFlags& flags) {
    RunConfig cfg = load_config(flags);
    const fs::path dir =
        make_run_dir(cfg.out_dir, "finetune-" + to_string(cfg.train.mode), cfg.train.seed);
    RunReport report = finetune_once(cfg, dir);
    print_summary(dir, report);
    return 0;
}

struct SweepPoint {
    std::string value;
    RunConfig cfg;
};

std::vector<SweepPoint> expand_sweep(const RunConfig& base, const std::string& axis,
                                     const std::vector<std::string>& values) {
    auto to_count = [&](const std::string& v) {
        try {
            std::size_t pos = 0;
            const unsigned long long n = std::stoull(v, &pos);
            if (pos != v.size() || n == 0) throw std::invalid_argument(v);
            return static_cast<std::size_t>(n);
        } catch (const std::exception&) {
            throw ConfigError("sweep axis " + axis + ": bad value '" + v + "'");
        }
    };
    std::vector<SweepPoint> points;
    for (const std::string& v : values) {
        RunConfig cfg = base;
        if (axis == "mid_dim") {
            if (cfg.train.mode != TuningMode::adaptformer)
                throw ConfigError("mid_dim sweep requires train.mode=adaptformer");
            cfg.tuning.adapter.mid_dim = to_count(v);
        } else if (axis == "scale") {
            if (cfg.train.mode != TuningMode::adaptformer)
                throw ConfigError("scale sweep requires train.mode=adaptformer");
            try {
                cfg.tuning.adapter.scale = std::stod(v);
            } catch (const std::exception&) {
                throw ConfigError("sweep axis scale: bad value '" + v + "'");
            }
        } else if (axis == "layers") {
            if (cfg.train.mode != TuningMode::adaptformer)
                throw ConfigError("layers sweep requires train.mode=adaptformer");
            const auto dash = v.find('-');
            if (dash == std::string::npos)
                throw ConfigError("layers sweep values look like start-end, got '" + v + "'");
            cfg.tuning.adapter.layer_start = to_count(v.substr(0, dash));
            cfg.tuning.adapter.layer_end = to_count(v.substr(dash + 1));
            cfg.tuning.adapter.validate(cfg.model.num_layers);
        } else if (axis == "prompt_tokens") {
            if (cfg.train.mode != TuningMode::vpt)
                throw ConfigError("prompt_tokens sweep requires train.mode=vpt");
            cfg.tuning.prompt.num_tokens = to_count(v);
        } else if (axis == "frames") {
            const std::size_t frames = to_count(v);
            cfg.model.frames = frames;
            cfg.task.frames = frames;
        } else {
            throw ConfigError("unknown sweep axis '" + axis + "'");
        }
        points.push_back({v, std::move(cfg)});
    }
    return points;
}

int cmd_sweep(const CommonFlags& flags, const std::string& axis,
              const std::vector<std::string>& values) {
    if (values.empty()) throw ConfigError("sweep: no values given");
    RunConfig base = load_config(flags);
    const std::vector<SweepPoint> points = expand_sweep(base, axis, values);
    const fs::path dir = make_run_dir(base.out_dir, "sweep-" + axis, base.train.seed);

    std::ofstream merged(dir / "combined.csv", std::ios::binary);
    if (!merged) throw IoError("cannot open " + (dir / "combined.csv").string());
    merged << axis << ',' << RunReport::csv_header << '\n';
    char buf[160];
    for (const SweepPoint& point : points) {
        const fs::path sub = dir / ("value_" + point.value);
        std::error_code ec;
        fs::create_directories(sub, ec);
        if (ec) throw IoError("cannot create " + sub.string());
        std::cout << "[sweep " << axis << "=" << point.value << "]\n";
        RunReport report = finetune_once(point.cfg, sub);
        for (const EpochRow& r : report.rows) {
            std::snprintf(buf, sizeof(buf), "%s,%zu,%.17g,%.17g,%.17g,%zu,%llu\n",
                          point.value.c_str(), r.epoch, r.lr, r.train_loss, r.eval_top1,
                          r.tunable_params, static_cast<unsigned long long>(r.wall_ms));
            merged << buf;
        }
    }
    if (!merged.good()) throw IoError("write failed for combined.csv");
    std::cout << "combined " << (dir / "combined.csv").string() << "\n";
    return 0;
}

int cmd_export_features(const CommonFlags& flags, const std::string& checkpoint,
                        const std::string& delta, const std::string& split) {
    RunConfig cfg = load_config(flags);
    VitModel model(cfg.model, cfg.tuning, cfg.train.seed);
    load_checkpoint_into(model, checkpoint, ParamSubset::backbone);
    if (!delta.empty()) apply_delta_checkpoint(model, delta);
    TaskPair task = build_task(cfg);
    const Dataset& data = split == "train" ? task.train : task.eval;
    const fs::path dir = make_run_dir(cfg.out_dir, "export", cfg.train.seed);
    cfg.write_resolved((dir / "resolved.cfg").string());
    const fs::path out = dir / "features.bin";
    export_cls_features(model, data, out.string());
    std::cout << "run_dir " << dir.string() << "\n"
              << "features " << out.string() << "\n"
              << "rows " << data.size() << "\n"
              << "dim " << model.config().embed_dim << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"parameter-efficient ViT fine-tuning toolkit"};
    app.require_subcommand(1);

    CommonFlags flags;
    std::string axis;
    std::vector<std::string> values;
    std::string checkpoint, delta, split = "eval";

    auto add_common = [&flags](CLI::App* cmd, bool with_mode) {
        cmd->add_option("--config", flags.config_path, "run configuration file")
            ->required();
        cmd->add_option("--seed", flags.seed, "override train.seed");
        cmd->add_option("--out", flags.out_override, "override paths.out");
        if (with_mode)
            cmd->add_option("--mode", flags.mode_override,
                            "tuning mode: full|linear|vpt|adaptformer");
    };

    CLI::App* pretrain = app.add_subcommand("pretrain", "full-tune a fresh backbone");
    add_common(pretrain, false);

    CLI::App* finetune = app.add_subcommand("finetune", "fine-tune from a backbone");
    add_common(finetune, true);

    CLI::App* sweep = app.add_subcommand("sweep", "one fine-tune per axis value");
    add_common(sweep, true);
    sweep->add_option("--axis", axis, "mid_dim|scale|layers|prompt_tokens|frames")
        ->required();
    sweep->add_option("--values", values, "axis values")->required()->expected(-1);

    CLI::App* exportf = app.add_subcommand("export-features", "dump CLS features + labels");
    add_common(exportf, true);
    exportf->add_option("--checkpoint", checkpoint, "backbone checkpoint")->required();
    exportf->add_option("--delta", delta, "optional delta checkpoint applied on top");
    exportf->add_option("--split", split, "train|eval")->check(CLI::IsMember({"train", "eval"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (pretrain->parsed()) return cmd_pretrain(flags);
        if (finetune->parsed()) return cmd_finetune(flags);
        if (sweep->parsed()) return cmd_sweep(flags, axis, values);
        if (exportf->parsed()) return cmd_export_features(flags, checkpoint, delta, split);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const ContractError& e) {
        std::cerr << "contract error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 3;
    } catch (const NumericalError& e) {
        std::cerr << "numerical abort: " << e.what() << "\n";
        return 4;
    }
    return 0;
}
