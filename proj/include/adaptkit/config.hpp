#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "adaptkit/errors.hpp"
#include "adaptkit/synthdata.hpp"
#include "adaptkit/train.hpp"
#include "adaptkit/tuning.hpp"
#include "adaptkit/vit.hpp"

namespace adaptkit {

// Flat key=value run configuration. '#' starts a comment, blank lines are
// ignored, keys may appear once. Unknown keys are rejected so that typos
// fail loudly; a fixed set of core keys is required, everything else has a
// default. Every run writes its resolved configuration (all keys, fixed
// order) next to its outputs, which keeps sweep artifacts diffable.
struct RunConfig {
    VitConfig model;
    TuningSetup tuning;
    TrainConfig train;
    TaskSpec task;
    std::string backbone_path;
    std::string out_dir = "runs";

    static RunConfig from_file(const std::string& path);
    static RunConfig from_text(const std::string& text, const std::string& origin = "<text>");

    std::string resolved_text() const;
    void write_resolved(const std::string& path) const;
};

namespace cfgdetail {

inline const std::vector<std::string>& known_keys() {
    static const std::vector<std::string> keys = {
        "model.image_size", "model.patch_size", "model.channels", "model.embed_dim",
        "model.num_layers", "model.num_heads", "model.mlp_ratio", "model.num_classes",
        "model.seq_extra", "model.frames", "model.use_head_norm",
        "adapter.mid_dim", "adapter.scale", "adapter.insertion", "adapter.layer_start",
        "adapter.layer_end", "adapter.dropout", "adapter.init",
        "prompt.tokens", "prompt.deep",
        "train.base_lr", "train.batch_size", "train.momentum", "train.weight_decay",
        "train.warmup_epochs", "train.total_epochs", "train.seed", "train.mode",
        "train.eval_every",
        "task.name", "task.image_size", "task.channels", "task.frames", "task.num_classes",
        "task.train_count", "task.eval_count", "task.seed", "task.shift", "task.noise",
        "paths.backbone", "paths.out",
    };
    return keys;
}

inline const std::vector<std::string>& required_keys() {
    static const std::vector<std::string> keys = {
        "model.image_size", "model.patch_size", "model.embed_dim", "model.num_layers",
        "model.num_heads", "model.num_classes",
        "train.total_epochs", "train.mode", "train.seed",
        "task.num_classes", "task.train_count", "task.eval_count", "task.seed",
    };
    return keys;
}

struct KeyMap {
    std::map<std::string, std::string> values;
    std::string origin;

    bool has(const std::string& key) const { return values.count(key) > 0; }

    const std::string& raw(const std::string& key) const {
        auto it = values.find(key);
        if (it == values.end())
            throw ConfigError(origin + ": missing config key '" + key + "'");
        return it->second;
    }

    std::string str(const std::string& key, const std::string& fallback) const {
        auto it = values.find(key);
        return it == values.end() ? fallback : it->second;
    }

    std::size_t size(const std::string& key) const { return parse_size(key, raw(key)); }
    std::size_t size(const std::string& key, std::size_t fallback) const {
        return has(key) ? parse_size(key, raw(key)) : fallback;
    }
    std::uint64_t u64(const std::string& key) const {
        return parse_size(key, raw(key));
    }
    std::uint64_t u64(const std::string& key, std::uint64_t fallback) const {
        return has(key) ? parse_size(key, raw(key)) : fallback;
    }
    double real(const std::string& key, double fallback) const {
        if (!has(key)) return fallback;
        const std::string& v = raw(key);
        try {
            std::size_t pos = 0;
            const double d = std::stod(v, &pos);
            if (pos != v.size()) throw std::invalid_argument(v);
            return d;
        } catch (const std::exception&) {
            throw ConfigError(origin + ": key '" + key + "' has non-numeric value '" + v + "'");
        }
    }
    bool boolean(const std::string& key, bool fallback) const {
        if (!has(key)) return fallback;
        const std::string& v = raw(key);
        if (v == "true" || v == "1") return true;
        if (v == "false" || v == "0") return false;
        throw ConfigError(origin + ": key '" + key + "' must be true or false, got '" + v +
                          "'");
    }

   private:
    std::size_t parse_size(const std::string& key, const std::string& v) const {
        try {
            std::size_t pos = 0;
            const unsigned long long n = std::stoull(v, &pos);
            if (pos != v.size()) throw std::invalid_argument(v);
            return static_cast<std::size_t>(n);
        } catch (const std::exception&) {
            throw ConfigError(origin + ": key '" + key +
                              "' has non-integer value '" + v + "'");
        }
    }
};

inline std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return "";
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

inline KeyMap parse_key_values(const std::string& text, const std::string& origin) {
    KeyMap map;
    map.origin = origin;
    std::istringstream is(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const std::string stripped = trim(line.substr(0, line.find('#')));
        if (stripped.empty()) continue;
        const auto eq = stripped.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(origin + ":" + std::to_string(lineno) +
                              ": expected key=value, got '" + stripped + "'");
        }
        const std::string key = trim(stripped.substr(0, eq));
        const std::string value = trim(stripped.substr(eq + 1));
        if (std::find(known_keys().begin(), known_keys().end(), key) == known_keys().end()) {
            throw ConfigError(origin + ":" + std::to_string(lineno) +
                              ": unknown config key '" + key + "'");
        }
        if (!map.values.emplace(key, value).second) {
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": duplicate key '" +
                              key + "'");
        }
    }
    return map;
}

inline AdapterInsertion insertion_from_string(const std::string& s) {
    if (s == "parallel") return AdapterInsertion::parallel;
    if (s == "sequential") return AdapterInsertion::sequential;
    throw ConfigError("adapter.insertion must be parallel or sequential, got '" + s + "'");
}

inline std::string to_string(AdapterInsertion i) {
    return i == AdapterInsertion::parallel ? "parallel" : "sequential";
}

inline KaimingVariant kaiming_from_string(const std::string& s) {
    if (s == "uniform") return KaimingVariant::uniform;
    if (s == "normal") return KaimingVariant::normal;
    throw ConfigError("adapter.init must be uniform or normal, got '" + s + "'");
}

inline std::string to_string(KaimingVariant v) {
    return v == KaimingVariant::uniform ? "uniform" : "normal";
}

}  // namespace cfgdetail

inline RunConfig RunConfig::from_text(const std::string& text, const std::string& origin) {
    using namespace cfgdetail;
    const KeyMap map = parse_key_values(text, origin);
    for (const std::string& key : required_keys()) {
        if (!map.has(key)) throw ConfigError(origin + ": missing config key '" + key + "'");
    }

    RunConfig cfg;
    cfg.model.image_size = map.size("model.image_size");
    cfg.model.patch_size = map.size("model.patch_size");
    cfg.model.channels = map.size("model.channels", 3);
    cfg.model.embed_dim = map.size("model.embed_dim");
    cfg.model.num_layers = map.size("model.num_layers");
    cfg.model.num_heads = map.size("model.num_heads");
    cfg.model.mlp_ratio = map.size("model.mlp_ratio", 4);
    cfg.model.num_classes = map.size("model.num_classes");
    cfg.model.seq_extra = map.size("model.seq_extra", 1);
    cfg.model.frames = map.size("model.frames", 1);
    cfg.model.use_head_norm = map.boolean("model.use_head_norm", true);

    cfg.tuning.adapter.mid_dim = map.size("adapter.mid_dim", 64);
    cfg.tuning.adapter.scale = map.real("adapter.scale", 0.1);
    cfg.tuning.adapter.insertion =
        insertion_from_string(map.str("adapter.insertion", "parallel"));
    cfg.tuning.adapter.layer_start = map.size("adapter.layer_start", 1);
    cfg.tuning.adapter.layer_end = map.size("adapter.layer_end", 0);
    cfg.tuning.adapter.dropout_p = map.real("adapter.dropout", 0.0);
    cfg.tuning.adapter.init = kaiming_from_string(map.str("adapter.init", "uniform"));

    cfg.tuning.prompt.num_tokens = map.size("prompt.tokens", 4);
    cfg.tuning.prompt.deep = map.boolean("prompt.deep", true);

    cfg.train.base_lr = map.real("train.base_lr", 0.1);
    cfg.train.batch_size = map.size("train.batch_size", 32);
    cfg.train.momentum = map.real("train.momentum", 0.9);
    cfg.train.weight_decay = map.real("train.weight_decay", 0.0);
    cfg.train.warmup_epochs = map.size("train.warmup_epochs", 0);
    cfg.train.total_epochs = map.size("train.total_epochs");
    cfg.train.seed = map.u64("train.seed");
    cfg.train.mode = tuning_mode_from_string(map.raw("train.mode"));
    cfg.train.eval_every = map.size("train.eval_every", 1);
    cfg.tuning.mode = cfg.train.mode;

    cfg.task.name = map.str("task.name", "task");
    cfg.task.image_size = map.size("task.image_size", cfg.model.image_size);
    cfg.task.channels = map.size("task.channels", cfg.model.channels);
    cfg.task.frames = map.size("task.frames", cfg.model.frames);
    cfg.task.num_classes = map.size("task.num_classes");
    cfg.task.train_count = map.size("task.train_count");
    cfg.task.eval_count = map.size("task.eval_count");
    cfg.task.seed = map.u64("task.seed");
    cfg.task.shift = shift_from_string(map.str("task.shift", "none"));
    cfg.task.noise = map.real("task.noise", 0.05);

    cfg.backbone_path = map.str("paths.backbone", "");
    cfg.out_dir = map.str("paths.out", "runs");

    cfg.model.validate();
    cfg.train.validate();
    cfg.task.validate();
    if (cfg.tuning.mode == TuningMode::adaptformer)
        cfg.tuning.adapter.validate(cfg.model.num_layers);
    if (cfg.tuning.mode == TuningMode::vpt) cfg.tuning.prompt.validate();
    return cfg;
}

inline RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config file " + path);
    std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return from_text(text, path);
}

inline std::string RunConfig::resolved_text() const {
    using cfgdetail::to_string;
    char num[64];
    auto fmt = [&num](double v) {
        std::snprintf(num, sizeof(num), "%.17g", v);
        return std::string(num);
    };
    std::ostringstream os;
    os << "model.image_size=" << model.image_size << '\n'
       << "model.patch_size=" << model.patch_size << '\n'
       << "model.channels=" << model.channels << '\n'
       << "model.embed_dim=" << model.embed_dim << '\n'
       << "model.num_layers=" << model.num_layers << '\n'
       << "model.num_heads=" << model.num_heads << '\n'
       << "model.mlp_ratio=" << model.mlp_ratio << '\n'
       << "model.num_classes=" << model.num_classes << '\n'
       << "model.seq_extra=" << model.seq_extra << '\n'
       << "model.frames=" << model.frames << '\n'
       << "model.use_head_norm=" << (model.use_head_norm ? "true" : "false") << '\n'
       << "adapter.mid_dim=" << tuning.adapter.mid_dim << '\n'
       << "adapter.scale=" << fmt(tuning.adapter.scale) << '\n'
       << "adapter.insertion=" << to_string(tuning.adapter.insertion) << '\n'
       << "adapter.layer_start=" << tuning.adapter.layer_start << '\n'
       << "adapter.layer_end=" << tuning.adapter.layer_end << '\n'
       << "adapter.dropout=" << fmt(tuning.adapter.dropout_p) << '\n'
       << "adapter.init=" << to_string(tuning.adapter.init) << '\n'
       << "prompt.tokens=" << tuning.prompt.num_tokens << '\n'
       << "prompt.deep=" << (tuning.prompt.deep ? "true" : "false") << '\n'
       << "train.base_lr=" << fmt(train.base_lr) << '\n'
       << "train.batch_size=" << train.batch_size << '\n'
       << "train.momentum=" << fmt(train.momentum) << '\n'
       << "train.weight_decay=" << fmt(train.weight_decay) << '\n'
       << "train.warmup_epochs=" << train.warmup_epochs << '\n'
       << "train.total_epochs=" << train.total_epochs << '\n'
       << "train.seed=" << train.seed << '\n'
       << "train.mode=" << adaptkit::to_string(train.mode) << '\n'
       << "train.eval_every=" << train.eval_every << '\n'
       << "task.name=" << task.name << '\n'
       << "task.image_size=" << task.image_size << '\n'
       << "task.channels=" << task.channels << '\n'
       << "task.frames=" << task.frames << '\n'
       << "task.num_classes=" << task.num_classes << '\n'
       << "task.train_count=" << task.train_count << '\n'
       << "task.eval_count=" << task.eval_count << '\n'
       << "task.seed=" << task.seed << '\n'
       << "task.shift=" << adaptkit::to_string(task.shift) << '\n'
       << "task.noise=" << fmt(task.noise) << '\n'
       << "paths.backbone=" << backbone_path << '\n'
       << "paths.out=" << out_dir << '\n';
    return os.str();
}

inline void RunConfig::write_resolved(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open " + path + " for writing");
    os << resolved_text();
    if (!os.good()) throw IoError("write failed for " + path);
}

}  // namespace adaptkit
