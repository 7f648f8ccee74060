#include <doctest.h>

#include <cmath>
#include <declust/encoder.hpp>
#include <declust/rng.hpp>
#include <stdexcept>

#include "support/gradcheck_util.hpp"

using namespace declust;
using testutil::BuildResult;
using testutil::graph_gradcheck;
using testutil::random_tensor;

namespace {

MixerConfig tiny_mixer() {
    MixerConfig cfg;
    cfg.in_channels = 1;
    cfg.image_size = 8;
    cfg.patch_size = 2;
    cfg.depth = 2;
    cfg.channels = 4;
    cfg.dw_kernel = 3;
    cfg.dropout_rate = 0.1;
    cfg.head_hidden = 6;
    cfg.embed_dim = 3;
    return cfg;
}

}  // namespace

TEST_CASE("config validation and parameter-count formulas") {
    MixerConfig bad = tiny_mixer();
    bad.patch_size = 3;  // does not divide 8
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = tiny_mixer();
    bad.dw_kernel = 4;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

    MixerConfig mc = tiny_mixer();
    Encoder enc = Encoder::make_mixer(mc, 0);
    std::size_t actual = 0;
    for (const Tensor& t : enc.params().values) actual += t.numel();
    CHECK(actual == mc.param_count());

    MlpConfig mlp;
    mlp.input_dim = 8;
    mlp.hidden = {64, 32};
    mlp.head_hidden = 64;
    mlp.embed_dim = 16;
    Encoder enc2 = Encoder::make_mlp(mlp, 0);
    actual = 0;
    for (const Tensor& t : enc2.params().values) actual += t.numel();
    CHECK(actual == mlp.param_count());
    CHECK_THROWS_AS(Encoder::make_mlp(MlpConfig{8, {}, 4, 2}, 0), std::invalid_argument);
}

TEST_CASE("mixer block preserves shape") {
    MixerConfig cfg;
    cfg.in_channels = 3;
    cfg.image_size = 16;
    cfg.patch_size = 2;
    cfg.depth = 1;
    cfg.channels = 8;
    cfg.dw_kernel = 3;
    cfg.dropout_rate = 0.0;
    cfg.head_hidden = 8;
    cfg.embed_dim = 4;
    Encoder enc = Encoder::make_mixer(cfg, 1);
    Graph g;
    ParamNodes p = bind_params(g, enc.params(), false);
    Rng rng(2);
    NodeId x = g.constant(random_tensor({8, 16, 16}, rng));
    NodeId out = enc.mixer_block(g, p, x, 0, Mode::kEval, 0);
    CHECK(g.value(out).shape == std::vector<std::size_t>{8, 16, 16});
}

TEST_CASE("zero-weight eval block is the identity") {
    MixerConfig cfg = tiny_mixer();
    cfg.dropout_rate = 0.0;
    Encoder enc = Encoder::make_mixer(cfg, 3);
    // zero all conv weights/biases; batchnorm stays gamma=1 beta=0 with
    // zero-mean unit-var running stats
    for (std::size_t i = 0; i < enc.params().size(); ++i) {
        const std::string& name = enc.params().names[i];
        if (name.find("dw.") != std::string::npos || name.find("pw.") != std::string::npos)
            for (double& v : enc.params().values[i].data) v = 0.0;
    }
    Graph g;
    ParamNodes p = bind_params(g, enc.params(), false);
    Rng rng(4);
    Tensor input = random_tensor({4, 4, 4}, rng);
    NodeId out = enc.mixer_block(g, p, g.constant(input), 0, Mode::kEval, 0);
    // both conv branches emit GELU(0) = 0 normalized to 0; residuals carry x
    for (std::size_t i = 0; i < input.numel(); ++i)
        CHECK(g.value(out).data[i] == doctest::Approx(input.data[i]).epsilon(1e-12));
}

TEST_CASE("encode output length equals the channel width") {
    MixerConfig cfg;
    cfg.in_channels = 3;
    cfg.image_size = 16;
    cfg.patch_size = 2;
    cfg.depth = 1;
    cfg.channels = 64;
    cfg.dw_kernel = 7;
    cfg.head_hidden = 32;
    cfg.embed_dim = 16;
    Encoder enc = Encoder::make_mixer(cfg, 5);
    Rng rng(6);
    Tensor img = random_tensor({3, 16, 16}, rng);
    Tensor z = enc.encode_value(img);
    CHECK(z.shape == std::vector<std::size_t>{64});

    Tensor wrong = random_tensor({3, 8, 8}, rng);
    CHECK_THROWS_AS(enc.encode_value(wrong), std::invalid_argument);
}

TEST_CASE("mlp encode composes GELU layers") {
    MlpConfig cfg;
    cfg.input_dim = 3;
    cfg.hidden = {3, 3};
    cfg.head_hidden = 4;
    cfg.embed_dim = 2;
    Encoder enc = Encoder::make_mlp(cfg, 7);
    // identity weights, zero bias: encode(v) = gelu(gelu(v))
    for (std::size_t l = 0; l < 2; ++l) {
        Tensor& w = enc.params().at("enc.layer" + std::to_string(l) + ".w");
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 3; ++j) w.at(i, j) = i == j ? 1.0 : 0.0;
    }
    Tensor zero = Tensor::zeros({3});
    Tensor out = enc.encode_value(zero);
    for (double v : out.data) CHECK(v == 0.0);

    Graph g;
    double x = 0.8;
    double expected = g.value(g.gelu(g.gelu(g.constant(x)))).data[0];
    Tensor probe({3}, {x, x, x});
    Tensor enc_out = enc.encode_value(probe);
    for (double v : enc_out.data) CHECK(v == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("projection head shapes and zero weights") {
    MlpConfig cfg;
    cfg.input_dim = 4;
    cfg.hidden = {32};
    cfg.head_hidden = 64;
    cfg.embed_dim = 16;
    Encoder enc = Encoder::make_mlp(cfg, 8);
    Rng rng(9);
    Tensor z = random_tensor({32}, rng);
    Tensor r = enc.project_value(z);
    CHECK(r.shape == std::vector<std::size_t>{16});

    for (const char* name : {"head.w1", "head.b1", "head.w2", "head.b2"})
        for (double& v : enc.params().at(name).data) v = 0.0;
    Tensor rz = enc.project_value(z);
    for (double v : rz.data) CHECK(v == 0.0);

    CHECK_THROWS_AS(enc.project_value(random_tensor({7}, rng)), std::invalid_argument);
}

TEST_CASE("eval forward is deterministic; train-mode dropout depends on the mask seed") {
    MixerConfig cfg = tiny_mixer();
    Encoder enc = Encoder::make_mixer(cfg, 11);
    Rng rng(12);
    Tensor img = random_tensor({1, 8, 8}, rng);
    CHECK(enc.encode_value(img).bit_equal(enc.encode_value(img)));

    auto train_encode = [&](std::uint64_t mask_seed) {
        Graph g;
        ParamNodes p = bind_params(g, enc.params(), false);
        EmbeddingNode z = enc.encode(g, p, img, Mode::kTrain, mask_seed);
        return g.value(z.id);
    };
    CHECK(train_encode(33).bit_equal(train_encode(33)));
    CHECK_FALSE(train_encode(33).bit_equal(train_encode(34)));
}

TEST_CASE("mixer block gradients match finite differences on a 1-channel 4x4 input") {
    MixerConfig cfg;
    cfg.in_channels = 1;
    cfg.image_size = 4;
    cfg.patch_size = 2;
    cfg.depth = 1;
    cfg.channels = 2;
    cfg.dw_kernel = 3;
    cfg.dropout_rate = 0.25;
    cfg.head_hidden = 3;
    cfg.embed_dim = 2;
    Encoder enc = Encoder::make_mixer(cfg, 13);
    Rng rng(14);
    Tensor x = random_tensor({2, 4, 4}, rng);

    auto build = [&](const std::vector<Tensor>& in) {
        BuildResult r;
        ParamStore probe = enc.params();
        probe.values = in;
        ParamNodes p = bind_params(r.graph, probe, true);
        NodeId out = enc.mixer_block(r.graph, p, r.graph.constant(x), 0, Mode::kTrain, 99);
        r.loss = r.graph.sum(r.graph.mul(out, out));
        r.leaves = p.ids;
        return r;
    };
    CHECK(graph_gradcheck(build, enc.params().values) < 1e-5);
}

TEST_CASE("projection head gradients match finite differences") {
    MlpConfig cfg;
    cfg.input_dim = 3;
    cfg.hidden = {4};
    cfg.head_hidden = 5;
    cfg.embed_dim = 3;
    Encoder enc = Encoder::make_mlp(cfg, 15);
    Rng rng(16);
    Tensor input = random_tensor({3}, rng);

    auto build = [&](const std::vector<Tensor>& in) {
        BuildResult r;
        ParamStore probe = enc.params();
        probe.values = in;
        ParamNodes p = bind_params(r.graph, probe, true);
        EmbeddingNode z = enc.encode(r.graph, p, input, Mode::kEval, 0);
        RepresentationNode rep = enc.project(r.graph, p, z);
        r.loss = r.graph.sum(r.graph.mul(rep.id, rep.id));
        r.leaves = p.ids;
        return r;
    };
    CHECK(graph_gradcheck(build, enc.params().values) < 1e-5);
}

TEST_CASE("running statistics move under training-mode forwards") {
    MixerConfig cfg = tiny_mixer();
    cfg.dropout_rate = 0.0;
    Encoder enc = Encoder::make_mixer(cfg, 17);
    Rng rng(18);
    Tensor img = random_tensor({1, 8, 8}, rng, 1.0, 2.0);  // biased input

    Tensor before = enc.buffers().at("enc.block0.bn1.rmean");
    Graph g;
    ParamNodes p = bind_params(g, enc.params(), false);
    std::vector<Encoder::BnHook> hooks;
    enc.encode(g, p, img, Mode::kTrain, 0, &hooks);
    REQUIRE(hooks.size() == 4);  // two batchnorms per block, two blocks
    enc.update_running_stats(g, hooks);
    Tensor after = enc.buffers().at("enc.block0.bn1.rmean");
    CHECK_FALSE(before.bit_equal(after));
}
