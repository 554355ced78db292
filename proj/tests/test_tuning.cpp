#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>
#include <vector>

#include "adaptkit/ops.hpp"
#include "adaptkit/tuning.hpp"
#include "adaptkit/vit.hpp"
#include "reference_vit.hpp"
#include "testutil.hpp"

using adaptkit::AdapterConfig;
using adaptkit::AdapterInsertion;
using adaptkit::ConfigError;
using adaptkit::FreezePolicy;
using adaptkit::Graph;
using adaptkit::GraphScope;
using adaptkit::KaimingVariant;
using adaptkit::PromptConfig;
using adaptkit::Rng;
using adaptkit::Tensor;
using adaptkit::TuningMode;
using adaptkit::TuningSetup;
using adaptkit::VitConfig;
using adaptkit::VitModel;
using testutil::random_tensor;

namespace {

VitConfig small_config(std::size_t embed = 8, std::size_t layers = 2, std::size_t heads = 2) {
    VitConfig c;
    c.image_size = 4;
    c.patch_size = 2;
    c.channels = 1;
    c.embed_dim = embed;
    c.num_layers = layers;
    c.num_heads = heads;
    c.mlp_ratio = 2;
    c.num_classes = 3;
    return c;
}

TuningSetup adaptformer_setup(std::size_t mid = 2,
                              AdapterInsertion ins = AdapterInsertion::parallel,
                              double scale = 0.1) {
    TuningSetup s;
    s.mode = TuningMode::adaptformer;
    s.adapter.mid_dim = mid;
    s.adapter.insertion = ins;
    s.adapter.scale = scale;
    return s;
}

std::vector<double> random_pixels(const VitConfig& c, Rng& rng) {
    std::vector<double> px(c.pixels_per_sample());
    for (double& v : px) v = rng.next_uniform();
    return px;
}

void set_param(VitModel& model, const std::string& name, const std::vector<double>& values) {
    Tensor* t = model.find_param(name);
    REQUIRE(t != nullptr);
    REQUIRE(t->size() == values.size());
    t->values() = values;
}

void randomize_adapters(VitModel& model, std::uint64_t seed, double scale = 0.3) {
    Rng rng(seed);
    for (const auto& [name, tensor] : model.parameters()) {
        if (!adaptkit::is_adapter_param(name)) continue;
        Tensor h = tensor;
        for (std::size_t i = 0; i < h.size(); ++i) h.data()[i] = rng.next_gaussian() * scale;
    }
}

}  // namespace

TEST_CASE("adapter branch hand arithmetic") {
    VitConfig c;
    c.image_size = 2;
    c.patch_size = 2;
    c.channels = 1;
    c.embed_dim = 2;
    c.num_layers = 1;
    c.num_heads = 1;
    c.mlp_ratio = 1;
    c.num_classes = 2;
    VitModel model(c, adaptformer_setup(1), 1);

    Tensor x_norm({1, 2}, {1.0, -1.0});

    set_param(model, "blocks.0.adapter.down.weight", {1.0, -1.0});
    set_param(model, "blocks.0.adapter.down.bias", {0.0});
    set_param(model, "blocks.0.adapter.up.weight", {0.5, 0.25});
    set_param(model, "blocks.0.adapter.up.bias", {0.0, 0.0});
    Tensor out = model.adapter_branch(x_norm, 0);
    REQUIRE(out.values() == std::vector<double>{1.0, 0.5});

    set_param(model, "blocks.0.adapter.down.weight", {1.0, 1.0});
    Tensor zero = model.adapter_branch(x_norm, 0);
    REQUIRE(zero.values() == std::vector<double>{0.0, 0.0});
}

TEST_CASE("adapter branch is exactly zero at initialization") {
    VitConfig c = small_config();
    VitModel model(c, adaptformer_setup(4), 77);
    Rng rng(3);
    Tensor x = random_tensor({5, c.embed_dim}, rng, 2.0);
    Tensor out = model.adapter_branch(x, 0);
    for (std::size_t i = 0; i < out.size(); ++i) REQUIRE(out.at(i) == 0.0);
}

TEST_CASE("fuse_parallel arithmetic and degenerate forms") {
    Tensor mlp({2}, {1.0, 1.0});
    Tensor branch({2}, {1.0, 0.5});
    Tensor x_prime({2}, {0.0, 0.0});
    Tensor fused = adaptkit::fuse_parallel(mlp, branch, x_prime, 0.1);
    REQUIRE(fused.at(0) == Catch::Approx(1.1).epsilon(1e-15));
    REQUIRE(fused.at(1) == Catch::Approx(1.05).epsilon(1e-15));

    Tensor zero_branch({2}, {0.0, 0.0});
    Tensor vanilla = adaptkit::ops::add(mlp, x_prime);
    REQUIRE(adaptkit::fuse_parallel(mlp, zero_branch, x_prime, 0.7).values() ==
            vanilla.values());
    REQUIRE(adaptkit::fuse_parallel(mlp, branch, x_prime, 0.0).values() == vanilla.values());

    Tensor bad({3}, {0, 0, 0});
    REQUIRE_THROWS_AS(adaptkit::fuse_parallel(mlp, bad, x_prime, 0.1), adaptkit::ContractError);
}

TEST_CASE("init identity: adapter modes reproduce the vanilla forward bit for bit") {
    const VitConfig c = small_config();
    for (AdapterInsertion ins : {AdapterInsertion::parallel, AdapterInsertion::sequential}) {
        VitModel vanilla(c, {}, 42);
        VitModel adapted(c, adaptformer_setup(4, ins), 42);
        Rng rng(9);
        for (int trial = 0; trial < 10; ++trial) {
            std::vector<double> px = random_pixels(c, rng);
            Tensor a = vanilla.forward_batch({&px}, false, nullptr);
            Tensor b = adapted.forward_batch({&px}, false, nullptr);
            REQUIRE(a.values() == b.values());
        }
    }
}

TEST_CASE("sequential insertion matches the flat-loop reference") {
    VitConfig c = small_config(6, 1, 3);
    VitModel model(c, adaptformer_setup(2, AdapterInsertion::sequential, 0.25), 5);
    randomize_adapters(model, 17);
    Rng rng(31);
    Tensor x = random_tensor({4, c.embed_dim}, rng);

    refvit::BlockWeights w = refvit::load_block(model, 0);
    refvit::AdapterSettings ad;
    ad.scale = 0.25;
    ad.parallel = false;
    refvit::Mat expected = refvit::block_forward(refvit::from_tensor(x), w, c.num_heads, ad);
    Tensor out = model.block_forward(x, 0);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < c.embed_dim; ++j)
            REQUIRE(std::abs(out.at(i * c.embed_dim + j) - expected[i][j]) <= 1e-12);
}

TEST_CASE("parallel insertion matches the flat-loop reference") {
    VitConfig c = small_config(6, 1, 2);
    VitModel model(c, adaptformer_setup(3, AdapterInsertion::parallel, 0.1), 5);
    randomize_adapters(model, 19);
    Rng rng(37);
    Tensor x = random_tensor({4, c.embed_dim}, rng);

    refvit::BlockWeights w = refvit::load_block(model, 0);
    refvit::Mat expected = refvit::block_forward(refvit::from_tensor(x), w, c.num_heads, {});
    Tensor out = model.block_forward(x, 0);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < c.embed_dim; ++j)
            REQUIRE(std::abs(out.at(i * c.embed_dim + j) - expected[i][j]) <= 1e-12);
}

TEST_CASE("init_adapters: determinism, exact zeros, Kaiming spread") {
    AdapterConfig cfg;
    cfg.mid_dim = 64;

    Rng r1(5), r2(5);
    auto a = adaptkit::init_adapters(r1, cfg, 768, 12);
    auto b = adaptkit::init_adapters(r2, cfg, 768, 12);
    REQUIRE(a.layers.size() == 12);
    for (std::size_t i = 0; i < a.layers.size(); ++i) {
        REQUIRE(a.layers[i].down_weight.values() == b.layers[i].down_weight.values());
        for (double v : a.layers[i].up_weight.values()) REQUIRE(v == 0.0);
        for (double v : a.layers[i].up_bias.values()) REQUIRE(v == 0.0);
        for (double v : a.layers[i].down_bias.values()) REQUIRE(v == 0.0);
    }

    // Empirical spread of the down projection vs the fan-in target
    // sqrt(2/768), pooled over one 768 x 64 matrix.
    const double target = std::sqrt(2.0 / 768.0);
    for (KaimingVariant variant : {KaimingVariant::uniform, KaimingVariant::normal}) {
        AdapterConfig kc = cfg;
        kc.init = variant;
        kc.layer_end = 1;
        Rng rng(11);
        auto params = adaptkit::init_adapters(rng, kc, 768, 12);
        const auto& w = params.layers[0].down_weight.values();
        double mean = 0.0;
        for (double v : w) mean += v;
        mean /= static_cast<double>(w.size());
        double var = 0.0;
        for (double v : w) var += (v - mean) * (v - mean);
        var /= static_cast<double>(w.size());
        const double stddev = std::sqrt(var);
        REQUIRE(stddev >= 0.8 * target);
        REQUIRE(stddev <= 1.2 * target);
    }
}

TEST_CASE("adapter layer ranges gate which blocks carry adapters") {
    AdapterConfig cfg;
    cfg.layer_start = 2;
    cfg.layer_end = 3;
    REQUIRE_FALSE(cfg.adapts_layer(0, 4));
    REQUIRE(cfg.adapts_layer(1, 4));
    REQUIRE(cfg.adapts_layer(2, 4));
    REQUIRE_FALSE(cfg.adapts_layer(3, 4));

    AdapterConfig bad;
    bad.layer_start = 3;
    bad.layer_end = 2;
    REQUIRE_THROWS_AS(bad.validate(4), ConfigError);
}

TEST_CASE("adapter parameter count reproduces the published census") {
    REQUIRE(adaptkit::adapter_param_count(768, 1, 12, 174) == 161466u);
    REQUIRE(adaptkit::adapter_param_count(768, 16, 12, 174) == 438126u);
    REQUIRE(adaptkit::adapter_param_count(768, 64, 12, 174) == 1323438u);
}

TEST_CASE("count law equals live trainable enumeration") {
    for (std::size_t mid : {1u, 2u, 5u}) {
        VitConfig c = small_config();
        TuningSetup setup = adaptformer_setup(mid);
        VitModel model(c, setup, 3);
        const std::size_t formula =
            adaptkit::adapter_param_count(c.embed_dim, mid, c.num_layers, c.num_classes);
        REQUIRE(model.trainable_parameter_count() == formula);
        REQUIRE(adaptkit::trainable_census(c, setup,
                                           FreezePolicy::for_mode(TuningMode::adaptformer)) ==
                formula);
    }
}

TEST_CASE("plug-and-play: adapters change no backbone names or values") {
    const VitConfig c = small_config();
    VitModel vanilla(c, {}, 123);
    VitModel adapted(c, adaptformer_setup(3), 123);

    std::set<std::string> vanilla_backbone, adapted_backbone;
    for (const auto& [name, t] : vanilla.parameters())
        if (adaptkit::is_backbone_param(name)) vanilla_backbone.insert(name);
    for (const auto& [name, t] : adapted.parameters())
        if (adaptkit::is_backbone_param(name)) adapted_backbone.insert(name);
    REQUIRE(vanilla_backbone == adapted_backbone);

    for (const std::string& name : vanilla_backbone) {
        REQUIRE(VitModel(c, {}, 123).find_param(name)->values() ==
                adapted.find_param(name)->values());
    }
}

TEST_CASE("gradient flow after warm start: adapters live, backbone silent") {
    VitConfig c = small_config();
    VitModel model(c, adaptformer_setup(2), 7);
    randomize_adapters(model, 29);

    Rng rng(41);
    std::vector<double> px1 = random_pixels(c, rng);
    std::vector<double> px2 = random_pixels(c, rng);
    Graph tape;
    {
        GraphScope scope(tape);
        Tensor logits = model.forward_batch({&px1, &px2}, true, nullptr);
        Tensor loss = adaptkit::ops::cross_entropy(logits, {0, 2});
        REQUIRE(loss.value() > 0.0);
        tape.backward(loss);
    }
    for (std::size_t layer = 0; layer < c.num_layers; ++layer) {
        const std::string prefix = "blocks." + std::to_string(layer) + ".adapter.";
        bool any_nonzero = false;
        for (const char* leaf : {"down.weight", "down.bias", "up.weight", "up.bias"}) {
            Tensor* t = model.find_param(prefix + leaf);
            REQUIRE(t != nullptr);
            if (!t->has_grad()) continue;
            for (double g : t->grad()) any_nonzero |= g != 0.0;
        }
        REQUIRE(any_nonzero);
    }
    for (const auto& [name, tensor] : model.parameters()) {
        if (!tensor.requires_grad()) REQUIRE_FALSE(tensor.has_grad());
    }
}

TEST_CASE("full adapter block gradients match finite differences") {
    VitConfig c = small_config(8, 2, 2);  // d = 8, L = 2
    VitModel model(c, adaptformer_setup(2), 13);
    randomize_adapters(model, 57);

    Rng rng(71);
    std::vector<double> px1 = random_pixels(c, rng);
    std::vector<double> px2 = random_pixels(c, rng);
    std::vector<Tensor> adapter_params;
    for (const auto& [name, tensor] : model.parameters())
        if (adaptkit::is_adapter_param(name)) adapter_params.push_back(tensor);
    REQUIRE(adapter_params.size() == 8);

    auto loss = [&] {
        Tensor logits = model.forward_batch({&px1, &px2}, false, nullptr);
        return adaptkit::ops::cross_entropy(logits, {1, 2});
    };
    auto report = testutil::fd_check(adapter_params, loss, 1e-5);
    REQUIRE(report.checked ==
            2 * adaptkit::adapter_params_per_layer(c.embed_dim, 2));
    REQUIRE(report.max_rel_err <= 1e-4);
}

TEST_CASE("prompt config: p = 0 rejected at build time") {
    TuningSetup setup;
    setup.mode = TuningMode::vpt;
    setup.prompt.num_tokens = 0;
    REQUIRE_THROWS_AS(VitModel(small_config(), setup, 1), ConfigError);
}

TEST_CASE("shallow prompts extend attention over p extra tokens") {
    VitConfig c = small_config();  // N = 4, CLS -> 5 base tokens
    TuningSetup setup;
    setup.mode = TuningMode::vpt;
    setup.prompt.num_tokens = 4;
    setup.prompt.deep = false;
    VitModel model(c, setup, 2);
    Rng rng(1);
    std::vector<double> px = random_pixels(c, rng);
    std::size_t cls_row = 99;
    Tensor tokens = model.encode(px, false, nullptr, &cls_row);
    REQUIRE(tokens.shape() == adaptkit::Shape{9, c.embed_dim});
    REQUIRE(cls_row == 4);
}

TEST_CASE("deep prompts keep the token count and refresh per layer") {
    VitConfig c = small_config();
    TuningSetup setup;
    setup.mode = TuningMode::vpt;
    setup.prompt.num_tokens = 3;
    VitModel model(c, setup, 2);
    REQUIRE(model.find_param("prompts.blocks.0") != nullptr);
    REQUIRE(model.find_param("prompts.blocks.1") != nullptr);
    REQUIRE(model.find_param("prompts.input") == nullptr);
    Rng rng(1);
    std::vector<double> px = random_pixels(c, rng);
    std::size_t cls_row = 99;
    Tensor tokens = model.encode(px, false, nullptr, &cls_row);
    REQUIRE(tokens.shape() == adaptkit::Shape{c.token_count(), c.embed_dim});
    REQUIRE(cls_row == 0);
}

TEST_CASE("zero prompts shift outputs only through attention normalization") {
    VitConfig c = small_config(6, 2, 2);
    TuningSetup setup;
    setup.mode = TuningMode::vpt;
    setup.prompt.num_tokens = 2;
    VitModel model(c, setup, 33);
    for (std::size_t layer = 0; layer < c.num_layers; ++layer)
        set_param(model, "prompts.blocks." + std::to_string(layer),
                  std::vector<double>(2 * c.embed_dim, 0.0));

    Rng rng(3);
    std::vector<double> px = random_pixels(c, rng);

    // Reference: prepend two zero rows per layer with flat loops.
    Tensor embedded = model.patch_embed(px);
    refvit::Mat x = refvit::from_tensor(embedded);
    const std::size_t p = 2;
    for (std::size_t layer = 0; layer < c.num_layers; ++layer) {
        refvit::Mat with_prompts(x.size() + p, std::vector<double>(c.embed_dim, 0.0));
        for (std::size_t i = 0; i < x.size(); ++i) with_prompts[p + i] = x[i];
        refvit::BlockWeights w = refvit::load_block(model, layer);
        refvit::Mat out = refvit::block_forward(with_prompts, w, c.num_heads);
        x.assign(out.begin() + p, out.end());
    }

    Tensor tokens = model.encode(px);
    double max_diff = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
        for (std::size_t j = 0; j < c.embed_dim; ++j)
            max_diff = std::max(max_diff,
                                std::abs(tokens.at(i * c.embed_dim + j) - x[i][j]));
    REQUIRE(max_diff <= 1e-12);

    // And the zero-key rows do change the result relative to no prompts:
    // softmax normalizes over two extra keys.
    VitModel plain(c, {}, 33);
    Tensor plain_tokens = plain.encode(px);
    REQUIRE(plain_tokens.values() != tokens.values());
}
