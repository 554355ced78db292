#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "adaptkit/errors.hpp"
#include "adaptkit/ops.hpp"
#include "adaptkit/rng.hpp"
#include "adaptkit/tensor.hpp"

namespace adaptkit {

// The four fine-tuning regimes. Each mode is a freeze policy plus, for
// adaptformer/vpt, extra modules attached to the backbone.
enum class TuningMode { full, linear, vpt, adaptformer };

enum class AdapterInsertion { parallel, sequential };

// Down-projection initializer. The uniform variant draws from
// U(-sqrt(6/fan_in), sqrt(6/fan_in)); the normal variant from
// N(0, 2/fan_in). Fan mode is fan-in of the down projection.
enum class KaimingVariant { uniform, normal };

inline std::string to_string(TuningMode m) {
    switch (m) {
        case TuningMode::full: return "full";
        case TuningMode::linear: return "linear";
        case TuningMode::vpt: return "vpt";
        case TuningMode::adaptformer: return "adaptformer";
    }
    return "?";
}

inline TuningMode tuning_mode_from_string(std::string_view s) {
    if (s == "full") return TuningMode::full;
    if (s == "linear") return TuningMode::linear;
    if (s == "vpt") return TuningMode::vpt;
    if (s == "adaptformer") return TuningMode::adaptformer;
    throw ConfigError("unknown tuning mode '" + std::string(s) +
                      "' (expected full|linear|vpt|adaptformer)");
}

struct AdapterConfig {
    std::size_t mid_dim = 64;
    double scale = 0.1;
    AdapterInsertion insertion = AdapterInsertion::parallel;
    // 1-based inclusive layer range; layer_end == 0 means "through the last
    // layer".
    std::size_t layer_start = 1;
    std::size_t layer_end = 0;
    double dropout_p = 0.0;
    KaimingVariant init = KaimingVariant::uniform;

    std::size_t resolved_end(std::size_t num_layers) const {
        return layer_end == 0 ? num_layers : layer_end;
    }

    void validate(std::size_t num_layers) const {
        if (mid_dim < 1) throw ConfigError("adapter: mid_dim must be >= 1");
        if (scale < 0.0) throw ConfigError("adapter: scale must be >= 0");
        if (dropout_p < 0.0 || dropout_p >= 1.0)
            throw ConfigError("adapter: dropout must be in [0, 1)");
        const std::size_t end = resolved_end(num_layers);
        if (layer_start < 1 || layer_start > end || end > num_layers) {
            throw ConfigError("adapter: layer range [" + std::to_string(layer_start) + ", " +
                              std::to_string(end) + "] invalid for " +
                              std::to_string(num_layers) + " layers");
        }
    }

    // Whether the 0-based block index carries an adapter.
    bool adapts_layer(std::size_t layer, std::size_t num_layers) const {
        return layer + 1 >= layer_start && layer + 1 <= resolved_end(num_layers);
    }
};

struct PromptConfig {
    std::size_t num_tokens = 4;
    // Deep prompts give every block its own fresh prompt rows and discard
    // the prompt outputs between blocks; shallow prompts are prepended once
    // at the input and their outputs flow through the whole stack.
    bool deep = true;

    void validate() const {
        if (num_tokens < 1) throw ConfigError("prompt: num_tokens must be >= 1");
    }
};

// Bottleneck weights for one adapted block.
struct AdapterLayerParams {
    std::size_t layer = 0;  // 0-based block index
    Tensor down_weight;     // [d x mid]
    Tensor down_bias;       // [mid]
    Tensor up_weight;       // [mid x d]
    Tensor up_bias;         // [d]
};

struct AdapterParams {
    std::vector<AdapterLayerParams> layers;
};

inline void kaiming_fill(Tensor& w, std::size_t fan_in, KaimingVariant variant, Rng& rng) {
    if (variant == KaimingVariant::uniform) {
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
        for (std::size_t i = 0; i < w.size(); ++i)
            w.data()[i] = (2.0 * rng.next_uniform() - 1.0) * bound;
    } else {
        const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
        for (std::size_t i = 0; i < w.size(); ++i) w.data()[i] = rng.next_gaussian() * stddev;
    }
}

// Fresh adapter weights: Kaiming-initialized down projection, exact zeros
// everywhere else, so the adapter branch contributes exactly nothing until
// the first optimizer step.
inline AdapterParams init_adapters(Rng& rng, const AdapterConfig& cfg, std::size_t embed_dim,
                                   std::size_t num_layers) {
    cfg.validate(num_layers);
    AdapterParams params;
    for (std::size_t layer = 0; layer < num_layers; ++layer) {
        if (!cfg.adapts_layer(layer, num_layers)) continue;
        AdapterLayerParams p;
        p.layer = layer;
        p.down_weight = Tensor::zeros({embed_dim, cfg.mid_dim});
        kaiming_fill(p.down_weight, embed_dim, cfg.init, rng);
        p.down_bias = Tensor::zeros({cfg.mid_dim});
        p.up_weight = Tensor::zeros({cfg.mid_dim, embed_dim});
        p.up_bias = Tensor::zeros({embed_dim});
        params.layers.push_back(std::move(p));
    }
    return params;
}

// Added parameters per adapted layer: down (d x mid + mid) plus up
// (mid x d + d), i.e. 2*d*mid + mid + d including biases.
inline std::size_t adapter_params_per_layer(std::size_t embed_dim, std::size_t mid_dim) {
    return 2 * embed_dim * mid_dim + mid_dim + embed_dim;
}

// Tunable-parameter count for an adaptformer run: adapters over `layers`
// blocks plus the classification head (weights and bias).
inline std::size_t adapter_param_count(std::size_t embed_dim, std::size_t mid_dim,
                                       std::size_t layers, std::size_t num_classes) {
    if (embed_dim == 0 || mid_dim == 0 || layers == 0 || num_classes == 0)
        throw ContractError("adapter_param_count: all arguments must be positive");
    return layers * adapter_params_per_layer(embed_dim, mid_dim) +
           (embed_dim * num_classes + num_classes);
}

// Parallel fusion: the adapted block output is the frozen MLP output plus
// the s-scaled adapter branch plus the attention residual. With a zero
// branch or s == 0 this reduces exactly to the vanilla block.
inline Tensor fuse_parallel(const Tensor& mlp_out, const Tensor& branch_out,
                            const Tensor& x_prime, double s) {
    if (mlp_out.shape() != branch_out.shape() || mlp_out.shape() != x_prime.shape()) {
        throw ContractError("fuse_parallel: shape mismatch " + shape_str(mlp_out.shape()) +
                            " / " + shape_str(branch_out.shape()) + " / " +
                            shape_str(x_prime.shape()));
    }
    return ops::add(ops::add(mlp_out, ops::mul_scalar(branch_out, s)), x_prime);
}

// Sequential fusion: the adapter consumes the MLP output (no extra LN) and
// fuses with the same s-scaled residual, preserving the init identity.
// `branch_of_mlp` must be the adapter branch evaluated on mlp_out.
inline Tensor fuse_sequential(const Tensor& mlp_out, const Tensor& branch_of_mlp,
                              const Tensor& x_prime, double s) {
    return fuse_parallel(mlp_out, branch_of_mlp, x_prime, s);
}

// Name predicates shared by freeze policies and checkpoint subsets. The
// naming scheme is fixed: backbone parameters never change name when
// adapters or prompts are attached.
inline bool is_adapter_param(std::string_view name) {
    return name.find(".adapter.") != std::string_view::npos;
}
inline bool is_prompt_param(std::string_view name) { return name.starts_with("prompts."); }
inline bool is_head_param(std::string_view name) { return name.starts_with("head."); }
inline bool is_backbone_param(std::string_view name) {
    return !is_adapter_param(name) && !is_prompt_param(name) && !is_head_param(name);
}

// Declarative trainable/frozen assignment per parameter name.
struct FreezePolicy {
    TuningMode mode = TuningMode::full;

    static FreezePolicy for_mode(TuningMode mode) { return FreezePolicy{mode}; }

    bool trainable(std::string_view name) const {
        switch (mode) {
            case TuningMode::full: return true;
            case TuningMode::linear: return is_head_param(name);
            case TuningMode::vpt: return is_prompt_param(name) || is_head_param(name);
            case TuningMode::adaptformer: return is_adapter_param(name) || is_head_param(name);
        }
        return false;
    }
};

}  // namespace adaptkit
