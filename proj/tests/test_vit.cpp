#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "adaptkit/ops.hpp"
#include "adaptkit/vit.hpp"
#include "reference_vit.hpp"
#include "testutil.hpp"

using adaptkit::ConfigError;
using adaptkit::FreezePolicy;
using adaptkit::Rng;
using adaptkit::Tensor;
using adaptkit::TuningMode;
using adaptkit::TuningSetup;
using adaptkit::VitConfig;
using adaptkit::VitModel;
using testutil::random_tensor;

namespace {

VitConfig tiny_config() {
    VitConfig c;
    c.image_size = 4;
    c.patch_size = 2;
    c.channels = 1;
    c.embed_dim = 4;
    c.num_layers = 2;
    c.num_heads = 2;
    c.mlp_ratio = 2;
    c.num_classes = 3;
    return c;
}

std::vector<double> random_pixels(const VitConfig& c, Rng& rng) {
    std::vector<double> px(c.pixels_per_sample());
    for (double& v : px) v = rng.next_uniform();
    return px;
}

void overwrite(VitModel& model, const std::string& name, const std::vector<double>& values) {
    Tensor* t = model.find_param(name);
    REQUIRE(t != nullptr);
    REQUIRE(t->size() == values.size());
    t->values() = values;
}

void zero_all_params(VitModel& model) {
    for (const auto& [name, tensor] : model.parameters()) {
        Tensor h = tensor;
        std::fill(h.values().begin(), h.values().end(), 0.0);
    }
}

}  // namespace

TEST_CASE("patch_embed shapes: degenerate and 2x2 grids") {
    VitConfig c = tiny_config();
    c.image_size = 4;
    c.patch_size = 4;  // single patch
    VitModel one(c, {}, 1);
    std::vector<double> px(c.pixels_per_sample(), 0.25);
    Tensor tokens = one.patch_embed(px);
    REQUIRE(tokens.shape() == adaptkit::Shape{2, c.embed_dim});

    VitConfig c4 = tiny_config();  // 4x4 image, 2x2 patches -> N = 4
    VitModel four(c4, {}, 1);
    Tensor t4 = four.patch_embed(std::vector<double>(c4.pixels_per_sample(), 0.0));
    REQUIRE(t4.shape() == adaptkit::Shape{5, c4.embed_dim});
}

TEST_CASE("patch_embed of a zero image with zero positional table is the projection bias") {
    VitConfig c = tiny_config();
    VitModel model(c, {}, 7);
    overwrite(model, "pos_embed",
              std::vector<double>(model.find_param("pos_embed")->size(), 0.0));
    const std::vector<double> bias = model.find_param("patch_embed.bias")->values();
    Tensor tokens = model.patch_embed(std::vector<double>(c.pixels_per_sample(), 0.0));
    for (std::size_t row = c.seq_extra; row < tokens.shape()[0]; ++row)
        for (std::size_t j = 0; j < c.embed_dim; ++j)
            REQUIRE(tokens.at(row * c.embed_dim + j) == bias[j]);
}

TEST_CASE("patch_embed rejects mismatched sample sizes") {
    VitModel model(tiny_config(), {}, 1);
    REQUIRE_THROWS_AS(model.patch_embed(std::vector<double>(3, 0.0)), ConfigError);
}

TEST_CASE("mhsa with a single token reduces to the value path") {
    VitConfig c = tiny_config();
    VitModel model(c, {}, 3);
    Rng rng(5);
    Tensor x = random_tensor({1, c.embed_dim}, rng);

    refvit::BlockWeights w = refvit::load_block(model, 0);
    refvit::Mat v = refvit::matmul_bias(refvit::from_tensor(x), w.vw, w.vb);
    refvit::Mat expected = refvit::matmul_bias(v, w.ow, w.ob);

    Tensor out = model.mhsa(x, 0);
    for (std::size_t j = 0; j < c.embed_dim; ++j) REQUIRE(out.at(j) == expected[0][j]);
}

TEST_CASE("mhsa maps identical rows to identical rows") {
    VitConfig c = tiny_config();
    VitModel model(c, {}, 9);
    Rng rng(2);
    Tensor row = random_tensor({1, c.embed_dim}, rng);
    std::vector<double> data;
    for (int i = 0; i < 3; ++i)
        data.insert(data.end(), row.values().begin(), row.values().end());
    Tensor x({3, c.embed_dim}, data);
    Tensor out = model.mhsa(x, 0);
    for (std::size_t i = 1; i < 3; ++i)
        for (std::size_t j = 0; j < c.embed_dim; ++j)
            REQUIRE(out.at(i * c.embed_dim + j) == out.at(j));
}

TEST_CASE("mhsa T=2 d=2 h=1 against hand arithmetic") {
    VitConfig c;
    c.image_size = 2;
    c.patch_size = 2;
    c.channels = 1;
    c.embed_dim = 2;
    c.num_layers = 1;
    c.num_heads = 1;
    c.mlp_ratio = 1;
    c.num_classes = 2;
    VitModel model(c, {}, 1);
    overwrite(model, "blocks.0.attn.q.weight", {1.0, 0.0, 0.0, 1.0});
    overwrite(model, "blocks.0.attn.q.bias", {0.0, 0.0});
    overwrite(model, "blocks.0.attn.k.weight", {0.0, 1.0, 1.0, 0.0});
    overwrite(model, "blocks.0.attn.k.bias", {0.0, 0.0});
    overwrite(model, "blocks.0.attn.v.weight", {1.0, 1.0, 0.0, 1.0});
    overwrite(model, "blocks.0.attn.v.bias", {0.5, -0.5});
    overwrite(model, "blocks.0.attn.proj.weight", {2.0, 0.0, 0.0, 1.0});
    overwrite(model, "blocks.0.attn.proj.bias", {0.1, 0.2});

    const double x00 = 1.0, x01 = -1.0, x10 = 0.5, x11 = 2.0;
    Tensor x({2, 2}, {x00, x01, x10, x11});

    // q = x (identity), k = x with swapped columns, v = [x0, x0 + x1] + bias.
    const double q[2][2] = {{x00, x01}, {x10, x11}};
    const double k[2][2] = {{x01, x00}, {x11, x10}};
    const double v[2][2] = {{x00 + 0.5, x00 + x01 - 0.5}, {x10 + 0.5, x10 + x11 - 0.5}};
    const double scale = 1.0 / std::sqrt(2.0);
    double attn[2][2];
    for (int i = 0; i < 2; ++i) {
        double s0 = (q[i][0] * k[0][0] + q[i][1] * k[0][1]) * scale;
        double s1 = (q[i][0] * k[1][0] + q[i][1] * k[1][1]) * scale;
        const double mx = std::max(s0, s1);
        const double e0 = std::exp(s0 - mx), e1 = std::exp(s1 - mx);
        attn[i][0] = e0 / (e0 + e1);
        attn[i][1] = e1 / (e0 + e1);
    }
    for (int i = 0; i < 2; ++i) {
        const double h0 = attn[i][0] * v[0][0] + attn[i][1] * v[1][0];
        const double h1 = attn[i][0] * v[0][1] + attn[i][1] * v[1][1];
        const double o0 = 2.0 * h0 + 0.1;
        const double o1 = 1.0 * h1 + 0.2;
        Tensor out = model.mhsa(x, 0);
        REQUIRE(out.at(i * 2 + 0) == Catch::Approx(o0).epsilon(1e-14));
        REQUIRE(out.at(i * 2 + 1) == Catch::Approx(o1).epsilon(1e-14));
    }
}

TEST_CASE("block with all-zero weights is the identity") {
    VitConfig c = tiny_config();
    VitModel model(c, {}, 4);
    zero_all_params(model);
    Rng rng(10);
    Tensor x = random_tensor({5, c.embed_dim}, rng);
    Tensor y = model.block_forward(x, 0);
    REQUIRE(y.values() == x.values());
}

TEST_CASE("block forward matches the flat-loop reference") {
    VitConfig c;
    c.image_size = 4;
    c.patch_size = 2;
    c.channels = 2;
    c.embed_dim = 6;
    c.num_layers = 2;
    c.num_heads = 3;
    c.mlp_ratio = 2;
    c.num_classes = 2;
    VitModel model(c, {}, 21);
    Rng rng(13);
    Tensor x = random_tensor({4, c.embed_dim}, rng);

    refvit::BlockWeights w = refvit::load_block(model, 1);
    refvit::Mat expected = refvit::block_forward(refvit::from_tensor(x), w, c.num_heads);
    Tensor out = model.block_forward(x, 1);
    double max_diff = 0.0;
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < c.embed_dim; ++j)
            max_diff = std::max(max_diff,
                                std::abs(out.at(i * c.embed_dim + j) - expected[i][j]));
    REQUIRE(max_diff <= 1e-12);
}

TEST_CASE("classify: zero head weights give the bias; no norm gives the exact affine map") {
    VitConfig c = tiny_config();
    c.use_head_norm = false;
    VitModel model(c, {}, 6);
    Rng rng(8);
    Tensor tokens = random_tensor({c.token_count(), c.embed_dim}, rng);

    overwrite(model, "head.weight", std::vector<double>(c.embed_dim * c.num_classes, 0.0));
    Tensor logits = model.classify(tokens);
    REQUIRE(logits.values() == model.find_param("head.bias")->values());

    Rng wr(3);
    Tensor hw = random_tensor({c.embed_dim, c.num_classes}, wr);
    overwrite(model, "head.weight", hw.values());
    Tensor logits2 = model.classify(tokens);
    const std::vector<double>& hb = model.find_param("head.bias")->values();
    for (std::size_t j = 0; j < c.num_classes; ++j) {
        double acc = 0.0;
        for (std::size_t p = 0; p < c.embed_dim; ++p)
            acc += tokens.at(p) * hw.at(p * c.num_classes + j);
        REQUIRE(logits2.at(j) == acc + hb[j]);
    }
}

TEST_CASE("head norm centers a training batch per feature") {
    Rng rng(15);
    Tensor feats = random_tensor({4, 6}, rng, 2.0);
    Tensor rm = Tensor::zeros({6});
    Tensor rv = Tensor::full({6}, 1.0);
    Tensor out = adaptkit::ops::batchnorm(feats, rm, rv, true);
    for (std::size_t j = 0; j < 6; ++j) {
        double mean = 0.0;
        for (std::size_t i = 0; i < 4; ++i) mean += out.at(i * 6 + j);
        REQUIRE(std::abs(mean / 4.0) <= 1e-9);
    }
}

TEST_CASE("parameter census equals manifest totals and live model counts") {
    std::vector<std::pair<VitConfig, TuningSetup>> cases;
    cases.push_back({tiny_config(), {}});

    VitConfig video = tiny_config();
    video.frames = 4;
    video.seq_extra = 2;
    cases.push_back({video, {}});

    TuningSetup adapters;
    adapters.mode = TuningMode::adaptformer;
    adapters.adapter.mid_dim = 3;
    adapters.adapter.layer_start = 2;
    adapters.adapter.layer_end = 2;
    cases.push_back({tiny_config(), adapters});

    TuningSetup vpt;
    vpt.mode = TuningMode::vpt;
    vpt.prompt.num_tokens = 5;
    cases.push_back({tiny_config(), vpt});

    TuningSetup vpt_shallow = vpt;
    vpt_shallow.prompt.deep = false;
    cases.push_back({tiny_config(), vpt_shallow});

    for (const auto& [cfg, setup] : cases) {
        std::size_t manifest_total = 0;
        for (const auto& spec : adaptkit::named_parameter_shapes(cfg, setup))
            manifest_total += adaptkit::shape_numel(spec.shape);
        REQUIRE(adaptkit::parameter_census(cfg, setup) == manifest_total);

        VitModel model(cfg, setup, 2);
        REQUIRE(model.total_parameter_count() == manifest_total);
    }
}

TEST_CASE("manifest names and shapes pin the built model exactly") {
    VitConfig c = tiny_config();
    TuningSetup setup;
    setup.mode = TuningMode::adaptformer;
    setup.adapter.mid_dim = 2;
    VitModel model(c, setup, 5);
    const auto manifest = adaptkit::named_parameter_shapes(c, setup);
    REQUIRE(manifest.size() == model.parameters().size());
    for (std::size_t i = 0; i < manifest.size(); ++i) {
        REQUIRE(manifest[i].name == model.parameters()[i].first);
        REQUIRE(manifest[i].shape == model.parameters()[i].second.shape());
    }
}

TEST_CASE("token count scales linearly with frames") {
    for (std::size_t frames : {1u, 2u, 4u}) {
        VitConfig c = tiny_config();
        c.frames = frames;
        VitModel model(c, {}, 1);
        const std::size_t n = c.patches_per_frame();
        REQUIRE(c.token_count() == frames * n + 1);
        Rng rng(4);
        Tensor tokens = model.encode(random_pixels(c, rng));
        REQUIRE(tokens.shape() == adaptkit::Shape{frames * n + 1, c.embed_dim});
        // The positional table stays frame-independent.
        REQUIRE(model.find_param("pos_embed")->shape() ==
                adaptkit::Shape{n + c.seq_extra, c.embed_dim});
    }
}

TEST_CASE("eval forward is batch-equivariant") {
    VitConfig c = tiny_config();
    VitModel model(c, {}, 11);
    Rng rng(6);
    std::vector<double> a = random_pixels(c, rng);
    std::vector<double> b = random_pixels(c, rng);

    Tensor joint = model.forward_batch({&a, &b}, false, nullptr);
    Tensor solo_a = model.forward_batch({&a}, false, nullptr);
    Tensor solo_b = model.forward_batch({&b}, false, nullptr);
    for (std::size_t j = 0; j < c.num_classes; ++j) {
        REQUIRE(joint.at(j) == solo_a.at(j));
        REQUIRE(joint.at(c.num_classes + j) == solo_b.at(j));
    }
}

TEST_CASE("config validation rejects bad geometry") {
    VitConfig c = tiny_config();
    c.patch_size = 3;  // does not divide 4
    REQUIRE_THROWS_AS(c.validate(), ConfigError);
    VitConfig c2 = tiny_config();
    c2.num_heads = 3;  // does not divide embed_dim = 4
    REQUIRE_THROWS_AS(c2.validate(), ConfigError);
    VitConfig c3 = tiny_config();
    c3.seq_extra = 0;
    REQUIRE_THROWS_AS(c3.validate(), ConfigError);
}

TEST_CASE("freeze policies partition the parameter names") {
    VitConfig c = tiny_config();
    TuningSetup setup;
    setup.mode = TuningMode::adaptformer;
    setup.adapter.mid_dim = 2;
    VitModel model(c, setup, 3);

    const FreezePolicy policy = FreezePolicy::for_mode(TuningMode::adaptformer);
    std::size_t trainable = 0;
    for (const auto& [name, tensor] : model.parameters()) {
        REQUIRE(tensor.requires_grad() == policy.trainable(name));
        if (tensor.requires_grad()) {
            REQUIRE((adaptkit::is_adapter_param(name) || adaptkit::is_head_param(name)));
            ++trainable;
        }
    }
    REQUIRE(trainable == c.num_layers * 4 + 2);
}
