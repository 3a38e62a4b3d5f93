#include "gradcheck.hpp"
#include "support.hpp"

#include <aecn/model.hpp>

#include <gtest/gtest.h>

#include <cmath>

using namespace aecn;
using namespace aecn::testing;

TEST(ModelConfig, DefaultArchitecture) {
    const ModelConfig c;
    EXPECT_EQ(c.latent_dims(), (Shape{8, 16, 16}));
    const AutoencoderModel m = build(c);
    const std::vector<std::string> names{"encoder.conv0.weight", "encoder.conv0.bias", "encoder.conv1.weight",
                                         "encoder.conv1.bias",   "encoder.conv2.weight", "encoder.conv2.bias",
                                         "decoder.conv0.weight", "decoder.conv0.bias", "decoder.conv1.weight",
                                         "decoder.conv1.bias",   "output.weight",        "output.bias"};
    EXPECT_EQ(m.parameter_names(), names);
    // 16*9+16 + 32*16*9+32 + 8*32*9+8 + 32*8*9+32 + 16*32*9+16 + 1*16*9+1
    EXPECT_EQ(m.parameter_count(), 160u + 4640u + 2312u + 2336u + 4624u + 145u);
    EXPECT_FALSE(m.head_index().has_value());
}

TEST(ModelConfig, ValidationErrors) {
    ModelConfig c;
    c.decoder = {LayerSpec::upsample(), LayerSpec::conv(4)};
    EXPECT_THROW(c.validate(), ConfigError);
    c = {};
    c.input_size = 66;
    EXPECT_THROW(c.validate(), ConfigError);
    c = {};
    c.kernel = 4;
    EXPECT_THROW(c.validate(), ConfigError);
    c = {};
    c.encoder = {LayerSpec::pool(), LayerSpec::pool()};
    c.decoder = {LayerSpec::upsample(), LayerSpec::upsample()};
    EXPECT_THROW(c.validate(), ConfigError);
    c = {};
    c.channels = 3;
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(ModelConfig, JsonRoundTripAndUnknownKeys) {
    ModelConfig c = toy_config(3, true);
    EXPECT_EQ(model_config_from_json(to_json(c)), c);
    auto j = to_json(c);
    j["dropout"] = 0.5;
    EXPECT_THROW(model_config_from_json(j), ConfigError);
    EXPECT_THROW(model_config_from_json(nlohmann::json{{"encoder", {"conv:x"}}}), ConfigError);
    EXPECT_THROW(model_config_from_json(nlohmann::json{{"encoder", {"dense"}}}), ConfigError);
    EXPECT_THROW(model_config_from_json(nlohmann::json{{"kernel", "three"}}), ConfigError);
}

TEST(Autoencoder, ForwardShapesAndRange) {
    const AutoencoderModel m = build(ModelConfig{});
    SeededRng rng(1);
    const Tensor x = random_tensor<float>({1, 64, 64}, rng, 0.0, 1.0);
    const auto f = m.forward_sample(x);
    EXPECT_EQ(f.latent.dims(), (Shape{8, 16, 16}));
    EXPECT_EQ(f.reconstruction.dims(), (Shape{1, 64, 64}));
    for (float v : f.reconstruction.values()) ASSERT_TRUE(v >= 0.0f && v <= 1.0f);
    EXPECT_THROW(m.forward_sample(Tensor({1, 32, 32})), DimensionError);
}

TEST(Autoencoder, BatchForwardEqualsPerSample) {
    const AutoencoderModel m = build(toy_config(2, false));
    SeededRng rng(4);
    const Tensor batch = random_tensor<float>({3, 1, 8, 8}, rng, 0.0, 1.0);
    const auto bf = m.forward(batch);
    for (std::size_t i = 0; i < 3; ++i) {
        std::vector<float> xs(batch.data() + i * 64, batch.data() + (i + 1) * 64);
        const auto f = m.forward_sample(Tensor({1, 8, 8}, xs));
        for (std::size_t q = 0; q < 64; ++q) ASSERT_EQ(bf.reconstruction[i * 64 + q], f.reconstruction[q]);
    }
    EXPECT_THROW(m.forward(Tensor({1, 8, 8})), DimensionError);
}

TEST(Autoencoder, ReconstructionGradientMatchesFiniteDifferences) {
    GradCheck total;
    for (std::uint64_t seed = 0; seed < 20; ++seed) total.merge(check_autoencoder(seed, false));
    EXPECT_LE(total.max_rel, 1e-3) << total.worst;
    EXPECT_GT(total.checked, 20u * 200u);
    EXPECT_LT(total.skipped, total.checked / 20);
}

TEST(Autoencoder, JointGradientMatchesFiniteDifferences) {
    GradCheck total;
    for (std::uint64_t seed = 0; seed < 20; ++seed) total.merge(check_autoencoder(seed, true));
    EXPECT_LE(total.max_rel, 1e-3) << total.worst;
}

TEST(Autoencoder, BuildIsDeterministicAndSeeded) {
    const auto a = build(ModelConfig{}), b = build(ModelConfig{});
    EXPECT_EQ(a.parameters(), b.parameters());
    ModelConfig c;
    c.seed = 1;
    EXPECT_NE(build(c).parameters()[0], a.parameters()[0]);
}

TEST(Autoencoder, HeInitScaleAndZeroBias) {
    const auto m = build(ModelConfig{});
    const Tensor& w = m.parameters()[2]; // encoder.conv1.weight, fan_in 16*9
    double s2 = 0.0;
    for (float v : w.values()) s2 += static_cast<double>(v) * v;
    EXPECT_NEAR(std::sqrt(s2 / w.size()), std::sqrt(2.0 / 144.0), 0.01);
    for (float v : m.parameters()[3].values()) EXPECT_EQ(v, 0.0f);
    const double lim = std::sqrt(6.0 / (16 * 9 + 9));
    for (float v : m.parameters()[10].values()) ASSERT_LE(std::abs(v), lim);
}

TEST(Autoencoder, ClassifierHead) {
    const auto plain = build(toy_config(1, false));
    EXPECT_THROW(plain.forward_classifier(Tensor({2, 4, 4})), UnsupportedError);
    const auto m = build(toy_config(1, true));
    ASSERT_TRUE(m.head_index().has_value());
    EXPECT_EQ(m.parameter_names()[*m.head_index()], "head.hidden.weight");
    SeededRng rng(2);
    const auto f = m.forward_sample(random_tensor<float>({1, 8, 8}, rng, 0.0, 1.0));
    const float p = m.forward_classifier(f.latent).probability;
    EXPECT_GT(p, 0.0f);
    EXPECT_LT(p, 1.0f);
}

TEST(Autoencoder, DoubleCastAgreesWithFloat) {
    const auto m = build(ModelConfig{});
    SeededRng rng(6);
    const Tensor x = random_tensor<float>({1, 64, 64}, rng, 0.0, 1.0);
    const auto rf = m.forward_sample(x).reconstruction;
    const auto rd = m.cast<double>().forward_sample(x.cast<double>()).reconstruction;
    for (std::size_t q = 0; q < rf.size(); ++q) ASSERT_NEAR(rf[q], rd[q], 1e-5);
}
