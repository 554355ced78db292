#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "adaptkit/errors.hpp"
#include "adaptkit/ops.hpp"
#include "adaptkit/rng.hpp"
#include "adaptkit/sha256.hpp"
#include "adaptkit/tensor.hpp"
#include "adaptkit/tuning.hpp"

namespace adaptkit {

// Plain ViT encoder configuration. Images are square (image_size x
// image_size) with `channels` channels; videos are `frames` such images
// per sample. Patch tokens per frame: N = (image_size / patch_size)^2.
struct VitConfig {
    std::size_t image_size = 16;
    std::size_t patch_size = 4;
    std::size_t channels = 3;
    std::size_t embed_dim = 64;
    std::size_t num_layers = 4;
    std::size_t num_heads = 4;
    std::size_t mlp_ratio = 4;
    std::size_t num_classes = 2;
    std::size_t seq_extra = 1;  // prepended non-patch tokens; row 0 is CLS
    std::size_t frames = 1;
    // BatchNorm without learnable affine between the CLS feature and the
    // head. Applied uniformly across tuning modes; can be switched off.
    bool use_head_norm = true;

    void validate() const {
        if (image_size == 0 || patch_size == 0 || image_size % patch_size != 0)
            throw ConfigError("vit: image_size must be a positive multiple of patch_size");
        if (embed_dim == 0 || num_heads == 0 || embed_dim % num_heads != 0)
            throw ConfigError("vit: embed_dim must be a positive multiple of num_heads");
        if (num_layers == 0) throw ConfigError("vit: num_layers must be >= 1");
        if (mlp_ratio == 0) throw ConfigError("vit: mlp_ratio must be >= 1");
        if (num_classes == 0) throw ConfigError("vit: num_classes must be >= 1");
        if (seq_extra == 0) throw ConfigError("vit: seq_extra must be >= 1 (CLS token)");
        if (channels == 0) throw ConfigError("vit: channels must be >= 1");
        if (frames == 0) throw ConfigError("vit: frames must be >= 1");
    }

    std::size_t patches_per_frame() const {
        const std::size_t side = image_size / patch_size;
        return side * side;
    }
    std::size_t patch_dim() const { return patch_size * patch_size * channels; }
    std::size_t head_dim() const { return embed_dim / num_heads; }
    std::size_t hidden_dim() const { return mlp_ratio * embed_dim; }
    // Tokens entering the encoder (prompts excluded).
    std::size_t token_count() const { return frames * patches_per_frame() + seq_extra; }
    std::size_t pixels_per_sample() const {
        return frames * image_size * image_size * channels;
    }
};

struct TuningSetup {
    TuningMode mode = TuningMode::full;
    AdapterConfig adapter;
    PromptConfig prompt;
};

struct ParamSpec {
    std::string name;
    Shape shape;
};

// Ordered name/shape manifest of every parameter the model materializes.
// This is the single source of truth for construction, checkpointing and
// parameter accounting; a unit test pins it against a built model.
inline std::vector<ParamSpec> named_parameter_shapes(const VitConfig& c, const TuningSetup& t) {
    c.validate();
    const std::size_t d = c.embed_dim;
    const std::size_t n = c.patches_per_frame();
    const std::size_t rd = c.hidden_dim();
    std::vector<ParamSpec> out;
    out.push_back({"cls_token", {c.seq_extra, d}});
    out.push_back({"pos_embed", {n + c.seq_extra, d}});
    out.push_back({"patch_embed.weight", {c.patch_dim(), d}});
    out.push_back({"patch_embed.bias", {d}});
    for (std::size_t i = 0; i < c.num_layers; ++i) {
        const std::string b = "blocks." + std::to_string(i) + ".";
        out.push_back({b + "norm1.weight", {d}});
        out.push_back({b + "norm1.bias", {d}});
        for (const char* proj : {"q", "k", "v", "proj"}) {
            out.push_back({b + "attn." + proj + ".weight", {d, d}});
            out.push_back({b + "attn." + proj + ".bias", {d}});
        }
        out.push_back({b + "norm2.weight", {d}});
        out.push_back({b + "norm2.bias", {d}});
        out.push_back({b + "mlp.fc1.weight", {d, rd}});
        out.push_back({b + "mlp.fc1.bias", {rd}});
        out.push_back({b + "mlp.fc2.weight", {rd, d}});
        out.push_back({b + "mlp.fc2.bias", {d}});
        if (t.mode == TuningMode::adaptformer && t.adapter.adapts_layer(i, c.num_layers)) {
            out.push_back({b + "adapter.down.weight", {d, t.adapter.mid_dim}});
            out.push_back({b + "adapter.down.bias", {t.adapter.mid_dim}});
            out.push_back({b + "adapter.up.weight", {t.adapter.mid_dim, d}});
            out.push_back({b + "adapter.up.bias", {d}});
        }
    }
    if (t.mode == TuningMode::vpt) {
        t.prompt.validate();
        if (t.prompt.deep) {
            for (std::size_t i = 0; i < c.num_layers; ++i)
                out.push_back({"prompts.blocks." + std::to_string(i), {t.prompt.num_tokens, d}});
        } else {
            out.push_back({"prompts.input", {t.prompt.num_tokens, d}});
        }
    }
    out.push_back({"head.weight", {d, c.num_classes}});
    out.push_back({"head.bias", {c.num_classes}});
    return out;
}

inline std::vector<ParamSpec> named_buffer_shapes(const VitConfig& c) {
    std::vector<ParamSpec> out;
    if (c.use_head_norm) {
        out.push_back({"head_norm.running_mean", {c.embed_dim}});
        out.push_back({"head_norm.running_var", {c.embed_dim}});
    }
    return out;
}

// Closed-form total parameter count; must equal summing the manifest.
inline std::size_t parameter_census(const VitConfig& c, const TuningSetup& t) {
    const std::size_t d = c.embed_dim;
    const std::size_t n = c.patches_per_frame();
    const std::size_t rd = c.hidden_dim();
    std::size_t total = c.seq_extra * d                     // cls / extra tokens
                        + (n + c.seq_extra) * d             // positional table
                        + c.patch_dim() * d + d             // patch projection
                        + d * c.num_classes + c.num_classes;  // head
    total += c.num_layers * (2 * d            // norm1
                             + 4 * (d * d + d)  // q, k, v, proj
                             + 2 * d            // norm2
                             + d * rd + rd      // fc1
                             + rd * d + d);     // fc2
    if (t.mode == TuningMode::adaptformer) {
        std::size_t adapted = 0;
        for (std::size_t i = 0; i < c.num_layers; ++i)
            adapted += t.adapter.adapts_layer(i, c.num_layers) ? 1 : 0;
        total += adapted * adapter_params_per_layer(d, t.adapter.mid_dim);
    }
    if (t.mode == TuningMode::vpt) {
        total += (t.prompt.deep ? c.num_layers : 1) * t.prompt.num_tokens * d;
    }
    return total;
}

// Trainable-parameter count implied by the manifest and a freeze policy.
inline std::size_t trainable_census(const VitConfig& c, const TuningSetup& t,
                                    const FreezePolicy& policy) {
    std::size_t total = 0;
    for (const ParamSpec& p : named_parameter_shapes(c, t))
        if (policy.trainable(p.name)) total += shape_numel(p.shape);
    return total;
}

// ---------------------------------------------------------------------------

// A ViT encoder with optional adapter or prompt modules. Parameters are
// named tensors; handles inside the block cache alias the same storage, so
// checkpoint loads that overwrite tensor data are visible everywhere.
class VitModel {
   public:
    VitModel(VitConfig cfg, TuningSetup tuning, std::uint64_t seed)
        : cfg_(cfg), tuning_(tuning) {
        cfg_.validate();
        if (tuning_.mode == TuningMode::adaptformer) tuning_.adapter.validate(cfg_.num_layers);
        if (tuning_.mode == TuningMode::vpt) tuning_.prompt.validate();
        build(seed);
        apply_freeze_policy(FreezePolicy::for_mode(tuning_.mode));
    }

    VitModel(const VitModel&) = delete;
    VitModel& operator=(const VitModel&) = delete;
    VitModel(VitModel&&) = default;
    VitModel& operator=(VitModel&&) = default;

    const VitConfig& config() const { return cfg_; }
    const TuningSetup& tuning() const { return tuning_; }

    const std::vector<std::pair<std::string, Tensor>>& parameters() const { return params_; }
    const std::vector<std::pair<std::string, Tensor>>& buffers() const { return buffers_; }

    Tensor* find_param(const std::string& name) {
        auto it = param_index_.find(name);
        return it == param_index_.end() ? nullptr : &params_[it->second].second;
    }
    Tensor* find_buffer(const std::string& name) {
        auto it = buffer_index_.find(name);
        return it == buffer_index_.end() ? nullptr : &buffers_[it->second].second;
    }

    void apply_freeze_policy(const FreezePolicy& policy) {
        for (auto& [name, tensor] : params_) tensor.set_requires_grad(policy.trainable(name));
    }

    std::size_t trainable_parameter_count() const {
        std::size_t total = 0;
        for (const auto& [name, tensor] : params_)
            if (tensor.requires_grad()) total += tensor.size();
        return total;
    }

    std::size_t total_parameter_count() const {
        std::size_t total = 0;
        for (const auto& [name, tensor] : params_) total += tensor.size();
        return total;
    }

    void zero_grads() {
        for (auto& [name, tensor] : params_) tensor.zero_grad();
    }

    // SHA-256 over the payload bytes of every parameter accepted by `pred`
    // (in manifest order). Used for frozen-state conservation checks.
    template <typename Pred>
    std::string hash_params(Pred pred) const {
        Sha256 h;
        for (const auto& [name, tensor] : params_) {
            if (!pred(name)) continue;
            h.update(tensor.data(), tensor.size() * sizeof(double));
        }
        return Sha256::hex(h.digest());
    }

    std::string frozen_hash() const {
        Sha256 h;
        for (const auto& [name, tensor] : params_) {
            if (tensor.requires_grad()) continue;
            h.update(tensor.data(), tensor.size() * sizeof(double));
        }
        return Sha256::hex(h.digest());
    }

    // -----------------------------------------------------------------
    // Forward pieces. All take/return 2-D token matrices [T x d].

    // Patchify + linear projection + CLS/extra tokens + positional table.
    // Pixel layout is [frames][row][col][channel], row-major, values in
    // [0, 1]. For frames > 1 every frame reuses the spatial positional
    // rows (the table is tiled along the token axis).
    Tensor patch_embed(const std::vector<double>& pixels) const {
        if (pixels.size() != cfg_.pixels_per_sample()) {
            throw ConfigError("patch_embed: sample has " + std::to_string(pixels.size()) +
                              " values, config expects " +
                              std::to_string(cfg_.pixels_per_sample()));
        }
        const std::size_t hw = cfg_.image_size;
        const std::size_t p = cfg_.patch_size;
        const std::size_t ch = cfg_.channels;
        const std::size_t side = hw / p;
        const std::size_t n = cfg_.patches_per_frame();
        const std::size_t rows = cfg_.frames * n;
        Tensor patches = Tensor::zeros({rows, cfg_.patch_dim()});
        std::size_t row = 0;
        for (std::size_t f = 0; f < cfg_.frames; ++f) {
            const double* frame = pixels.data() + f * hw * hw * ch;
            for (std::size_t py = 0; py < side; ++py) {
                for (std::size_t px = 0; px < side; ++px) {
                    double* dst = patches.data() + row * cfg_.patch_dim();
                    for (std::size_t y = 0; y < p; ++y) {
                        const double* src = frame + ((py * p + y) * hw + px * p) * ch;
                        std::copy(src, src + p * ch, dst + y * p * ch);
                    }
                    ++row;
                }
            }
        }
        Tensor proj = ops::add_bias(ops::matmul(patches, pe_w_), pe_b_);
        std::vector<std::size_t> idx;
        idx.reserve(rows);
        for (std::size_t f = 0; f < cfg_.frames; ++f)
            for (std::size_t i = 0; i < n; ++i) idx.push_back(cfg_.seq_extra + i);
        Tensor tok_patches = ops::add(proj, ops::gather_rows(pos_, idx));
        Tensor tok_extra = ops::add(cls_, ops::slice_rows(pos_, 0, cfg_.seq_extra));
        return ops::concat_rows({tok_extra, tok_patches});
    }

    // Multi-head self-attention with per-head scale 1/sqrt(head_dim).
    // The residual connection is the caller's responsibility.
    Tensor mhsa(const Tensor& x, std::size_t layer) const {
        const BlockRefs& blk = block_at(layer);
        const std::size_t dh = cfg_.head_dim();
        Tensor q = ops::add_bias(ops::matmul(x, blk.q_w), blk.q_b);
        Tensor k = ops::add_bias(ops::matmul(x, blk.k_w), blk.k_b);
        Tensor v = ops::add_bias(ops::matmul(x, blk.v_w), blk.v_b);
        std::vector<Tensor> heads;
        heads.reserve(cfg_.num_heads);
        const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
        for (std::size_t h = 0; h < cfg_.num_heads; ++h) {
            Tensor qh = ops::slice_cols(q, h * dh, dh);
            Tensor kh = ops::slice_cols(k, h * dh, dh);
            Tensor vh = ops::slice_cols(v, h * dh, dh);
            Tensor attn = ops::softmax_rows(
                ops::mul_scalar(ops::matmul(qh, ops::transpose(kh)), scale));
            heads.push_back(ops::matmul(attn, vh));
        }
        Tensor merged = cfg_.num_heads == 1 ? heads[0] : ops::concat_cols(heads);
        return ops::add_bias(ops::matmul(merged, blk.o_w), blk.o_b);
    }

    // The adapter bottleneck: down-projection, ReLU, optional dropout,
    // up-projection. Not yet scaled by the fusion factor.
    Tensor adapter_branch(const Tensor& x_norm, std::size_t layer, bool train = false,
                          Rng* dropout_rng = nullptr) const {
        const BlockRefs& blk = block_at(layer);
        if (!blk.has_adapter) {
            throw ContractError("adapter_branch: block " + std::to_string(layer) +
                                " has no adapter");
        }
        Tensor mid = ops::relu(ops::add_bias(ops::matmul(x_norm, blk.ad_down_w), blk.ad_down_b));
        if (train && tuning_.adapter.dropout_p > 0.0) {
            if (dropout_rng == nullptr)
                throw ContractError("adapter_branch: dropout requires an rng in train mode");
            mid = ops::dropout(mid, tuning_.adapter.dropout_p, *dropout_rng, true);
        }
        return ops::add_bias(ops::matmul(mid, blk.ad_up_w), blk.ad_up_b);
    }

    // One encoder block under the model's tuning mode.
    Tensor block_forward(const Tensor& x, std::size_t layer, bool train = false,
                         Rng* dropout_rng = nullptr) const {
        const BlockRefs& blk = block_at(layer);
        Tensor x_prime = ops::add(x, mhsa(ops::layernorm(x, blk.ln1_w, blk.ln1_b), layer));
        Tensor x_norm = ops::layernorm(x_prime, blk.ln2_w, blk.ln2_b);
        Tensor mlp_out = ops::add_bias(
            ops::matmul(ops::gelu(ops::add_bias(ops::matmul(x_norm, blk.fc1_w), blk.fc1_b)),
                        blk.fc2_w),
            blk.fc2_b);
        if (!blk.has_adapter) return ops::add(mlp_out, x_prime);
        const double s = tuning_.adapter.scale;
        if (tuning_.adapter.insertion == AdapterInsertion::parallel) {
            return fuse_parallel(mlp_out, adapter_branch(x_norm, layer, train, dropout_rng),
                                 x_prime, s);
        }
        return fuse_sequential(mlp_out, adapter_branch(mlp_out, layer, train, dropout_rng),
                               x_prime, s);
    }

    // Encoder over all blocks, including prompt handling in VPT mode.
    // Returns the final token matrix and writes the CLS row index (prompts
    // may shift it) to cls_row when non-null.
    Tensor encode(const std::vector<double>& pixels, bool train = false,
                  Rng* dropout_rng = nullptr, std::size_t* cls_row = nullptr) const {
        Tensor x = patch_embed(pixels);
        const bool vpt = tuning_.mode == TuningMode::vpt;
        const std::size_t p = tuning_.prompt.num_tokens;
        std::size_t cls = 0;
        if (vpt && !tuning_.prompt.deep) {
            x = ops::concat_rows({prompt_input_, x});
            cls = p;
        }
        const std::size_t base_tokens = cfg_.token_count();
        for (std::size_t layer = 0; layer < cfg_.num_layers; ++layer) {
            if (vpt && tuning_.prompt.deep) {
                x = ops::concat_rows({block_at(layer).prompt, x});
                x = block_forward(x, layer, train, dropout_rng);
                x = ops::slice_rows(x, p, base_tokens);
            } else {
                x = block_forward(x, layer, train, dropout_rng);
            }
        }
        if (cls_row != nullptr) *cls_row = cls;
        return x;
    }

    // CLS feature -> optional BatchNorm (no affine) -> linear head.
    // `features` is [B x d]; returns [B x num_classes].
    Tensor head(const Tensor& features, bool train = false) {
        Tensor f = features;
        if (cfg_.use_head_norm) {
            f = ops::batchnorm(f, bn_mean_, bn_var_, train);
        }
        return ops::add_bias(ops::matmul(f, head_w_), head_b_);
    }

    // Single-sample classification from a final token matrix.
    Tensor classify(const Tensor& tokens, bool train = false, std::size_t cls_row = 0) {
        return head(ops::slice_rows(tokens, cls_row, 1), train);
    }

    // Batched forward: encodes every sample, stacks the CLS rows, applies
    // the (optionally normalized) head. Returns logits [B x num_classes].
    Tensor forward_batch(const std::vector<const std::vector<double>*>& batch,
                         bool train = false, Rng* dropout_rng = nullptr) {
        if (batch.empty()) throw ContractError("forward_batch: empty batch");
        std::vector<Tensor> cls_rows;
        cls_rows.reserve(batch.size());
        for (const std::vector<double>* pixels : batch) {
            std::size_t cls = 0;
            Tensor tokens = encode(*pixels, train, dropout_rng, &cls);
            cls_rows.push_back(ops::slice_rows(tokens, cls, 1));
        }
        Tensor features = cls_rows.size() == 1 ? cls_rows[0] : ops::concat_rows(cls_rows);
        return head(features, train);
    }

    // Eval-mode feature vectors fed to the head (post head-norm), one row
    // per sample. Used by the feature exporter.
    Tensor export_features(const std::vector<const std::vector<double>*>& batch) {
        std::vector<Tensor> cls_rows;
        cls_rows.reserve(batch.size());
        for (const std::vector<double>* pixels : batch) {
            std::size_t cls = 0;
            Tensor tokens = encode(*pixels, false, nullptr, &cls);
            cls_rows.push_back(ops::slice_rows(tokens, cls, 1));
        }
        Tensor features = cls_rows.size() == 1 ? cls_rows[0] : ops::concat_rows(cls_rows);
        if (cfg_.use_head_norm) features = ops::batchnorm(features, bn_mean_, bn_var_, false);
        return features;
    }

   private:
    struct BlockRefs {
        Tensor ln1_w, ln1_b;
        Tensor q_w, q_b, k_w, k_b, v_w, v_b, o_w, o_b;
        Tensor ln2_w, ln2_b;
        Tensor fc1_w, fc1_b, fc2_w, fc2_b;
        bool has_adapter = false;
        Tensor ad_down_w, ad_down_b, ad_up_w, ad_up_b;
        Tensor prompt;  // deep VPT only
    };

    const BlockRefs& block_at(std::size_t layer) const {
        if (layer >= blocks_.size()) {
            throw ContractError("block index " + std::to_string(layer) + " out of " +
                                std::to_string(blocks_.size()));
        }
        return blocks_[layer];
    }

    Tensor& registered(const std::string& name) {
        auto it = param_index_.find(name);
        if (it == param_index_.end()) throw ContractError("unknown parameter " + name);
        return params_[it->second].second;
    }

    void build(std::uint64_t seed) {
        Rng base(seed);
        Rng backbone_rng = base.derive("init/backbone");
        Rng head_rng = base.derive("init/head");
        Rng adapter_rng = base.derive("init/adapter");
        Rng prompt_rng = base.derive("init/prompt");

        const auto manifest = named_parameter_shapes(cfg_, tuning_);
        params_.reserve(manifest.size());
        for (const ParamSpec& spec : manifest) {
            if (param_index_.count(spec.name))
                throw ContractError("duplicate parameter name " + spec.name);
            Tensor t = Tensor::zeros(spec.shape);
            param_index_.emplace(spec.name, params_.size());
            params_.emplace_back(spec.name, std::move(t));
        }
        // Backbone and head weights: small Gaussian; norms: identity
        // affine; biases: zero. Adapters come from init_adapters below;
        // prompts are small Gaussians from their own stream.
        constexpr double init_std = 0.02;
        for (auto& [name, tensor] : params_) {
            if (is_adapter_param(name)) continue;
            Rng& rng = is_head_param(name) ? head_rng
                       : is_prompt_param(name) ? prompt_rng
                                               : backbone_rng;
            const bool is_norm_weight = name.find("norm1.weight") != std::string::npos ||
                                        name.find("norm2.weight") != std::string::npos;
            const bool is_bias = name.ends_with(".bias") ||
                                 name.find("norm1.bias") != std::string::npos ||
                                 name.find("norm2.bias") != std::string::npos;
            if (is_norm_weight) {
                for (std::size_t i = 0; i < tensor.size(); ++i) tensor.data()[i] = 1.0;
            } else if (is_bias) {
                // already zero
            } else {
                for (std::size_t i = 0; i < tensor.size(); ++i)
                    tensor.data()[i] = rng.next_gaussian() * init_std;
            }
        }
        if (tuning_.mode == TuningMode::adaptformer) {
            AdapterParams init =
                init_adapters(adapter_rng, tuning_.adapter, cfg_.embed_dim, cfg_.num_layers);
            for (const AdapterLayerParams& lp : init.layers) {
                const std::string b = "blocks." + std::to_string(lp.layer) + ".adapter.";
                registered(b + "down.weight").values() = lp.down_weight.values();
                registered(b + "down.bias").values() = lp.down_bias.values();
                registered(b + "up.weight").values() = lp.up_weight.values();
                registered(b + "up.bias").values() = lp.up_bias.values();
            }
        }

        for (const ParamSpec& spec : named_buffer_shapes(cfg_)) {
            Tensor t = Tensor::zeros(spec.shape);
            if (spec.name == "head_norm.running_var")
                for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = 1.0;
            buffer_index_.emplace(spec.name, buffers_.size());
            buffers_.emplace_back(spec.name, std::move(t));
        }

        // Alias the per-block handles.
        cls_ = registered("cls_token");
        pos_ = registered("pos_embed");
        pe_w_ = registered("patch_embed.weight");
        pe_b_ = registered("patch_embed.bias");
        head_w_ = registered("head.weight");
        head_b_ = registered("head.bias");
        if (cfg_.use_head_norm) {
            bn_mean_ = buffers_[buffer_index_.at("head_norm.running_mean")].second;
            bn_var_ = buffers_[buffer_index_.at("head_norm.running_var")].second;
        }
        blocks_.resize(cfg_.num_layers);
        for (std::size_t i = 0; i < cfg_.num_layers; ++i) {
            const std::string b = "blocks." + std::to_string(i) + ".";
            BlockRefs& blk = blocks_[i];
            blk.ln1_w = registered(b + "norm1.weight");
            blk.ln1_b = registered(b + "norm1.bias");
            blk.q_w = registered(b + "attn.q.weight");
            blk.q_b = registered(b + "attn.q.bias");
            blk.k_w = registered(b + "attn.k.weight");
            blk.k_b = registered(b + "attn.k.bias");
            blk.v_w = registered(b + "attn.v.weight");
            blk.v_b = registered(b + "attn.v.bias");
            blk.o_w = registered(b + "attn.proj.weight");
            blk.o_b = registered(b + "attn.proj.bias");
            blk.ln2_w = registered(b + "norm2.weight");
            blk.ln2_b = registered(b + "norm2.bias");
            blk.fc1_w = registered(b + "mlp.fc1.weight");
            blk.fc1_b = registered(b + "mlp.fc1.bias");
            blk.fc2_w = registered(b + "mlp.fc2.weight");
            blk.fc2_b = registered(b + "mlp.fc2.bias");
            if (param_index_.count(b + "adapter.down.weight")) {
                blk.has_adapter = true;
                blk.ad_down_w = registered(b + "adapter.down.weight");
                blk.ad_down_b = registered(b + "adapter.down.bias");
                blk.ad_up_w = registered(b + "adapter.up.weight");
                blk.ad_up_b = registered(b + "adapter.up.bias");
            }
            if (param_index_.count("prompts.blocks." + std::to_string(i))) {
                blk.prompt = registered("prompts.blocks." + std::to_string(i));
            }
        }
        if (param_index_.count("prompts.input")) prompt_input_ = registered("prompts.input");
    }

    VitConfig cfg_;
    TuningSetup tuning_;
    std::vector<std::pair<std::string, Tensor>> params_;
    std::unordered_map<std::string, std::size_t> param_index_;
    std::vector<std::pair<std::string, Tensor>> buffers_;
    std::unordered_map<std::string, std::size_t> buffer_index_;
    std::vector<BlockRefs> blocks_;
    Tensor cls_, pos_, pe_w_, pe_b_, head_w_, head_b_, bn_mean_, bn_var_, prompt_input_;
};

}  // namespace adaptkit
