#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

#include "fre/model/checkpoint.hpp"
#include "fre/model/unet.hpp"
#include "support/test_support.hpp"

using namespace fretest;
namespace ag = fre::ag;
using fre::model::ModelConfig;
using fre::model::ModelVariant;
using Net = fre::model::Network<float>;

namespace {

ModelConfig small(ModelVariant v, int classes = 3) {
    ModelConfig cfg;
    cfg.classes = classes;
    cfg.base_width = 4;
    cfg.depth = 2;
    cfg.se_reduction = 2;
    cfg.variant = v;
    if (v == ModelVariant::Fre) {
        cfg.fre.mode = fre::layers::FreMode::RandomPerEpoch;
        cfg.fre.count = 5;
        cfg.fre.multiplier = 632;
        cfg.fre.seed = 3;
    } else if (v == ModelVariant::Dropout) {
        cfg.dropout_rate = 162.0 / 512.0;
    } else if (v == ModelVariant::Supervision) {
        cfg.supervision = fre::train::SupervisionConfig{0.3257};
    }
    return cfg;
}

ag::Tensor<float> images(int n, int size, std::uint64_t seed = 1) {
    std::mt19937_64 rng(seed);
    return ag::cast<float>(random_tensor({n, 1, size, size}, rng, 0, 1, false));
}

std::vector<float> eval_logits(Net& net, const ag::Tensor<float>& x) {
    ag::Tape<float> tape;
    tape.set_recording(false);
    auto out = net.forward(tape, x, {ag::Phase::Eval, 0, 0, false});
    return {out.logits.data().begin(), out.logits.data().end()};
}

std::size_t count_params(const Net& net) { return net.parameters().trainable_scalars(); }

}  // namespace

TEST(ModelConfigTest, DefaultBottleneckIs512) {
    ModelConfig cfg;
    EXPECT_EQ(cfg.base_width, 32);
    EXPECT_EQ(cfg.depth, 4);
    EXPECT_EQ(cfg.bottleneck_width(), 512);
    EXPECT_EQ(cfg.stage_width(0), 32);
    EXPECT_EQ(cfg.stage_width(3), 256);
    EXPECT_EQ(cfg.spatial_multiple(), 16);
}

TEST(ModelConfigTest, VariantSettingsAreExclusive) {
    EXPECT_NO_THROW(small(ModelVariant::Baseline).validate());
    auto c = small(ModelVariant::Baseline);
    c.dropout_rate = 0.1;
    EXPECT_THROW(c.validate(), fre::ConfigError);
    c = small(ModelVariant::Fre);
    c.fre.mode = fre::layers::FreMode::Off;
    EXPECT_THROW(c.validate(), fre::ConfigError);
    c = small(ModelVariant::Fre);
    c.supervision = fre::train::SupervisionConfig{0.5};
    EXPECT_THROW(c.validate(), fre::ConfigError);
    c = small(ModelVariant::Dropout);
    c.dropout_rate.reset();
    EXPECT_THROW(c.validate(), fre::ConfigError);
    c = small(ModelVariant::Supervision);
    c.supervision->lambda = 1.5;
    EXPECT_THROW(c.validate(), fre::ConfigError);
    c = small(ModelVariant::Fre);
    c.fre.count = 17;  // bottleneck width is 16
    EXPECT_THROW(c.validate(), fre::ConfigError);
    c = small(ModelVariant::Baseline);
    c.classes = 1;
    EXPECT_THROW(c.validate(), fre::ConfigError);
    EXPECT_THROW(fre::model::parse_variant("unet"), fre::ConfigError);
    EXPECT_EQ(fre::model::parse_variant("no_deep_layers"), ModelVariant::NoDeepLayers);
}

TEST(NetworkTest, LogitsMatchInputResolution) {
    for (int classes : {3, 4}) {
        auto net = Net::build(small(ModelVariant::Baseline, classes), 1);
        ag::Tape<float> tape;
        tape.set_recording(false);
        auto x = images(1, 256);
        auto out = net.forward(tape, x, {});
        EXPECT_EQ(out.logits.shape(), (ag::Shape{1, classes, 256, 256}));
    }
    auto deep = Net::build([] {
        auto c = small(ModelVariant::Baseline);
        c.depth = 4;
        return c;
    }(), 1);
    for (int size : {16, 48}) {
        ag::Tape<float> tape;
        auto out = deep.forward(tape, images(2, size), {ag::Phase::Train, 1, 0, true});
        EXPECT_EQ(out.logits.shape(), (ag::Shape{2, 3, size, size}));
        EXPECT_EQ(out.bottleneck.shape(), (ag::Shape{2, 64, size / 16, size / 16}));
    }
}

TEST(NetworkTest, IndivisibleInputNamesRequiredMultiple) {
    auto c = small(ModelVariant::Baseline);
    c.depth = 4;
    auto net = Net::build(c, 1);
    ag::Tape<float> tape;
    try {
        net.forward(tape, images(1, 24), {});
        FAIL() << "expected ShapeError";
    } catch (const fre::ShapeError& e) {
        EXPECT_NE(std::string(e.what()).find("multiple of 16"), std::string::npos) << e.what();
    }
}

TEST(NetworkTest, SupervisionEmitsTwoLogitTensorsOfSameShape) {
    auto net = Net::build(small(ModelVariant::Supervision), 1);
    ag::Tape<float> tape;
    auto out = net.forward(tape, images(2, 16), {ag::Phase::Train, 1, 0, true});
    ASSERT_TRUE(out.aux_logits.has_value());
    EXPECT_EQ(out.aux_logits->shape(), out.logits.shape());
    auto base = Net::build(small(ModelVariant::Baseline), 1);
    EXPECT_FALSE(base.forward(tape, images(2, 16), {ag::Phase::Train, 1, 0, true}).aux_logits.has_value());
}

TEST(NetworkTest, NoDeepLayersDropsOnlyTheBottleneck) {
    auto base = Net::build(small(ModelVariant::Baseline), 1);
    auto nodeep = Net::build(small(ModelVariant::NoDeepLayers), 1);
    EXPECT_LT(count_params(nodeep), count_params(base));
    std::set<std::string> only_base, only_nodeep;
    for (const auto& e : base.parameters().entries()) {
        if (!nodeep.parameters().contains(e.name)) only_base.insert(e.name);
        else EXPECT_EQ(nodeep.parameters().get(e.name).shape(), e.tensor.shape()) << e.name;
    }
    for (const auto& e : nodeep.parameters().entries()) {
        if (!base.parameters().contains(e.name)) only_nodeep.insert(e.name);
    }
    for (const auto& n : only_base) EXPECT_EQ(n.rfind("bottleneck.", 0), 0u) << n;
    EXPECT_EQ(only_nodeep, (std::set<std::string>{"bridge.weight", "bridge.bias"}));
    ag::Tape<float> tape;
    auto out = nodeep.forward(tape, images(1, 16), {});
    EXPECT_FALSE(out.bottleneck.defined());
    EXPECT_EQ(out.logits.shape(), (ag::Shape{1, 3, 16, 16}));
}

TEST(NetworkTest, InitialisationIsSeededByNameAndVariantIndependent) {
    auto a = Net::build(small(ModelVariant::Baseline), 42);
    auto b = Net::build(small(ModelVariant::Fre), 42);
    auto c = Net::build(small(ModelVariant::Baseline), 43);
    EXPECT_EQ(a.parameters().snapshot(), b.parameters().snapshot());
    EXPECT_NE(a.parameters().snapshot(), c.parameters().snapshot());
    const auto& gamma = a.parameters().get("enc0.conv1.bn.gamma");
    const auto& beta = a.parameters().get("enc0.conv1.bn.beta");
    for (std::size_t i = 0; i < gamma.numel(); ++i) {
        EXPECT_EQ(gamma[i], 1.0f);
        EXPECT_EQ(beta[i], 0.0f);
    }
    // Fan-in scaling: 3x3 conv from 8 to 16 channels has fan-in 72.
    const auto& w = a.parameters().get("bottleneck.conv1.weight");
    double sq = 0;
    for (float v : w.data()) sq += static_cast<double>(v) * v;
    EXPECT_NEAR(std::sqrt(sq / static_cast<double>(w.numel())), std::sqrt(2.0 / 72.0), 0.01);
}

TEST(NetworkTest, FreAndDropoutMatchBaselineAtEvalBitExact) {
    auto x = images(2, 16, 5);
    auto base = Net::build(small(ModelVariant::Baseline), 9);
    const auto ref = eval_logits(base, x);
    for (auto v : {ModelVariant::Fre, ModelVariant::Dropout}) {
        auto net = Net::build(small(v), 9);
        net.begin_epoch(3);
        const auto got = eval_logits(net, x);
        ASSERT_EQ(got.size(), ref.size());
        EXPECT_EQ(std::memcmp(got.data(), ref.data(), ref.size() * sizeof(float)), 0);
    }
}

TEST(NetworkTest, FullEnhancementEqualsDoubledBottleneck) {
    auto cfg = small(ModelVariant::Fre);
    cfg.fre.count = cfg.bottleneck_width();
    cfg.fre.multiplier = 2.0;
    auto x = images(2, 16, 6);
    auto fre_net = Net::build(cfg, 9);
    fre_net.begin_epoch(1);
    auto base = Net::build(small(ModelVariant::Baseline), 9);
    const fre::model::ForwardContext ctx{ag::Phase::Train, 1, 0, false};
    ag::Tape<float> t1, t2;
    auto a = fre_net.forward(t1, x, ctx).logits;
    Net::FeatureHook doubled = [](ag::Tape<float>& t, const ag::Tensor<float>& h) { return ag::add(t, h, h); };
    auto b = base.forward(t2, x, ctx, &doubled).logits;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        EXPECT_LE(std::abs(a[i] - b[i]), 1e-6 * std::max(1.0f, std::abs(b[i]))) << i;
    }
}

TEST(NetworkTest, PerBatchSelectionOnlyInTraining) {
    auto cfg = small(ModelVariant::Fre);
    cfg.fre.per_batch = true;
    auto net = Net::build(cfg, 1);
    net.begin_epoch(1);
    auto x = images(2, 16, 2);
    ag::Tape<float> t;
    auto b0 = net.forward(t, x, {ag::Phase::Train, 1, 0, false}).logits;
    auto b1 = net.forward(t, x, {ag::Phase::Train, 1, 1, false}).logits;
    EXPECT_NE(std::vector<float>(b0.data().begin(), b0.data().end()),
              std::vector<float>(b1.data().begin(), b1.data().end()));
}

TEST(ParameterStoreTest, DuplicateAndMissingNames) {
    fre::model::ParameterStore<float> s;
    s.add("a", {2}, true);
    EXPECT_THROW(s.add("a", {2}, true), fre::ConfigError);
    EXPECT_THROW(s.get("b"), fre::ConfigError);
    auto snap = s.snapshot();
    snap.push_back({1.0f});
    EXPECT_THROW(s.restore(snap), fre::ConfigError);
}

TEST(SerializationTest, ModelConfigRoundTrip) {
    for (auto v : {ModelVariant::Baseline, ModelVariant::NoDeepLayers, ModelVariant::Supervision,
                   ModelVariant::Dropout, ModelVariant::Fre}) {
        auto cfg = small(v);
        cfg.fre.before_se = v == ModelVariant::Fre;
        const auto j = fre::model::model_config_to_json(cfg);
        const auto back = fre::model::model_config_from_json(j);
        EXPECT_EQ(fre::model::model_config_to_json(back), j);
    }
    auto j = fre::model::model_config_to_json(small(ModelVariant::Baseline));
    j["width"] = 3;
    EXPECT_THROW(fre::model::model_config_from_json(j), fre::ConfigError);
    EXPECT_THROW(fre::model::parse_fre_mode("sometimes"), fre::ConfigError);
    fre::model::Json fixed{{"mode", "fixed"}};
    EXPECT_EQ(fre::model::fre_config_from_json(fixed).fixed_channels, fre::layers::FreConfig::default_fixed_channels());
    fre::model::Json bad{{"B", "many"}};
    EXPECT_THROW(fre::model::fre_config_from_json(bad), fre::ConfigError);
}

class CheckpointTest : public ::testing::Test {
protected:
    void SetUp() override { dir_ = fresh_dir("checkpoint"); }
    std::filesystem::path dir_;
};

TEST_F(CheckpointTest, RoundTripReproducesEvalOutput) {
    auto net = Net::build(small(ModelVariant::Supervision), 4);
    // Perturb running statistics so they are exercised.
    net.parameters().get("bottleneck.conv1.bn.running_mean")[0] = 0.25f;
    const auto path = dir_ / "a.ckpt";
    fre::model::write_checkpoint(path, fre::model::make_checkpoint(net, {{"epoch", 7}}));
    const auto data = fre::model::read_checkpoint(path);
    EXPECT_EQ(data.meta().at("epoch"), 7);
    EXPECT_EQ(fre::model::model_config_to_json(data.model_config()),
              fre::model::model_config_to_json(net.config()));
    auto back = fre::model::network_from_checkpoint<float>(data);
    EXPECT_EQ(back.parameters().snapshot(), net.parameters().snapshot());
    auto x = images(1, 16, 8);
    EXPECT_EQ(eval_logits(back, x), eval_logits(net, x));
}

TEST_F(CheckpointTest, CorruptionIsDetected) {
    auto net = Net::build(small(ModelVariant::Baseline), 4);
    const auto path = dir_ / "b.ckpt";
    fre::model::write_checkpoint(path, fre::model::make_checkpoint(net));
    auto bytes = slurp(path);

    auto write = [&](const std::string& name, const std::string& content) {
        std::ofstream(dir_ / name, std::ios::binary) << content;
        return dir_ / name;
    };
    auto flipped = bytes;
    flipped[bytes.size() / 2] ^= 0x40;
    EXPECT_THROW(fre::model::read_checkpoint(write("flip.ckpt", flipped)), fre::DataError);
    EXPECT_THROW(fre::model::read_checkpoint(write("short.ckpt", bytes.substr(0, bytes.size() - 20))), fre::DataError);
    auto magic = bytes;
    magic[0] = 'X';
    EXPECT_THROW(fre::model::read_checkpoint(write("magic.ckpt", magic)), fre::DataError);
    EXPECT_THROW(fre::model::read_checkpoint(dir_ / "missing.ckpt"), fre::DataError);
}

TEST_F(CheckpointTest, LoadParametersChecksNamesAndShapes) {
    auto base = Net::build(small(ModelVariant::Baseline), 4);
    auto nodeep = Net::build(small(ModelVariant::NoDeepLayers), 4);
    const auto data = fre::model::make_checkpoint(base);
    EXPECT_THROW(fre::model::load_parameters(nodeep.parameters(), data), fre::DataError);
    auto wide_cfg = small(ModelVariant::Baseline);
    wide_cfg.base_width = 8;
    auto wide = Net::build(wide_cfg, 4);
    EXPECT_THROW(fre::model::load_parameters(wide.parameters(), data), fre::ShapeError);
    // Extra records (optimizer state) are ignored.
    auto with_extra = data;
    with_extra.tensors.push_back({"optim.step", {1}, {3.0f}});
    auto copy = Net::build(small(ModelVariant::Baseline), 5);
    EXPECT_NO_THROW(fre::model::load_parameters(copy.parameters(), with_extra));
    EXPECT_EQ(copy.parameters().snapshot(), base.parameters().snapshot());
}
