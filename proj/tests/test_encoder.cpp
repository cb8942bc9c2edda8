#include <gtest/gtest.h>

#include "drl/config.hpp"
#include "drl/encoder.hpp"
#include "drl/optim.hpp"
#include "test_util.hpp"

using namespace drl;
using drl::test::gradient_error;
using drl::test::random_tensor;
using drl::test::vars_of;

namespace {

EncoderConfig tiny_encoder() {
    EncoderConfig c;
    c.widths = {4, 4, 4, 4};
    c.latent_channels = 3;
    return c;
}

}  // namespace

TEST(Encoder, ShapesPerLayerAndMap) {
    Rng rng(1);
    DegradationEncoder<float> e(EncoderConfig{}, rng);
    auto x = Var<float>::constant(random_tensor<float>({2, 3, 64, 96}, rng, 0, 1));
    const auto f = e.encode_features(x);
    const EncoderConfig def;
    for (int i = 0; i < 4; ++i) {
        EXPECT_EQ(f.layers[i].shape(), (Shape{2, def.widths[i], 64 >> (i + 1), 96 >> (i + 1)}));
    }
    EXPECT_EQ(f.map.shape(), (Shape{2, 32, 4, 6}));
    EXPECT_EQ(e.encode(Var<float>::constant(Tensor<float>({1, 3, 64, 64}))).shape(), (Shape{1, 32, 4, 4}));
}

TEST(Encoder, RejectsIndivisibleInputs) {
    Rng rng(1);
    DegradationEncoder<float> e(tiny_encoder(), rng);
    EXPECT_THROW(e.encode(Var<float>::constant(Tensor<float>({1, 3, 40, 64}))), DimensionError);
    EXPECT_THROW(e.encode(Var<float>::constant(Tensor<float>({1, 1, 64, 64}))), DimensionError);
}

TEST(Encoder, DeterministicSinglePass) {
    Rng rng(2);
    DegradationEncoder<double> e(tiny_encoder(), rng);
    auto x = Var<double>::constant(random_tensor({1, 3, 32, 32}, rng, 0, 1));
    const auto a = e.encode_features(x);
    const auto b = e.encode_features(x);
    EXPECT_EQ(a.map.value().data(), b.map.value().data());
    EXPECT_EQ(e.encode(x).value().data(), a.map.value().data());
    double dist = 0.0;
    for (int i = 0; i < 4; ++i) dist += l1_mean(a.layers[i], b.layers[i]).item();
    EXPECT_EQ(dist, 0.0);

    // Same seed, same weights.
    Rng r1(7), r2(7);
    DegradationEncoder<double> e1(tiny_encoder(), r1), e2(tiny_encoder(), r2);
    EXPECT_EQ(parameter_checksum(e1.parameters()), parameter_checksum(e2.parameters()));
}

TEST(Encoder, GradientCheck) {
    Rng rng(3);
    DegradationEncoder<double> e(tiny_encoder(), rng);
    // Biases start at zero; perturb them so every path is exercised.
    for (auto& p : e.parameters()) {
        auto v = p.var;
        v.mutable_value().data() += random_tensor(v.shape(), rng, -0.1, 0.1).data();
    }
    auto y = Var<double>::leaf(random_tensor({1, 3, 16, 16}, rng, 0, 1));
    auto f = [&] { return mean(e.encode(y)); };
    // A step of 1e-3 flips LeakyReLU branches somewhere in the stack and the
    // resulting one-sided slopes dominate the difference quotient.
    EXPECT_LT(gradient_error(f, {y}, 1e-6, 64), 1e-4);
    EXPECT_LT(gradient_error(f, vars_of(e.parameters()), 1e-6, 20), 1e-4);
}

TEST(Encoder, FreezeKeepsInputGradientsAndParameters) {
    Rng rng(4);
    DegradationEncoder<double> e(tiny_encoder(), rng);
    Adam<double> opt(e.parameters());
    const auto before = parameter_checksum(e.parameters());
    e.freeze();
    EXPECT_TRUE(e.frozen());
    for (const auto& p : e.parameters()) EXPECT_FALSE(p.var.requires_grad());
    EXPECT_EQ(opt.trainable_count(), 0);

    auto y = Var<double>::leaf(random_tensor({1, 3, 32, 32}, rng, 0, 1));
    backward(mean(e.encode(y)));
    ASSERT_FALSE(y.grad().empty());
    EXPECT_GT(y.grad().data().cwiseAbs().maxCoeff(), 0.0);
    for (const auto& p : e.parameters()) EXPECT_TRUE(p.var.grad().empty());
    opt.step(1e-2);
    EXPECT_EQ(parameter_checksum(e.parameters()), before);
}

TEST(Encoder, TranslationCovariance) {
    Rng rng(5);
    EncoderConfig c = tiny_encoder();
    c.widths = {4, 6, 6, 8};
    DegradationEncoder<double> e(c, rng);
    const Tensor<double> wide = random_tensor({1, 3, 256, 272}, rng, 0, 1);
    Tensor<double> left({1, 3, 256, 256}), right({1, 3, 256, 256});
    for (int ch = 0; ch < 3; ++ch)
        for (int y = 0; y < 256; ++y)
            for (int x = 0; x < 256; ++x) {
                left(0, ch, y, x) = wide(0, ch, y, x);
                right(0, ch, y, x) = wide(0, ch, y, x + 16);
            }
    const auto ml = e.encode(Var<double>::constant(left)).value();
    const auto mr = e.encode(Var<double>::constant(right)).value();
    double worst = 0.0;
    for (int ch = 0; ch < c.latent_channels; ++ch)
        for (int y = 4; y <= 11; ++y)
            for (int x = 4; x <= 10; ++x) worst = std::max(worst, std::abs(mr(0, ch, y, x) - ml(0, ch, y, x + 1)));
    EXPECT_LT(worst, 1e-4);
}

TEST(Encoder, ParameterNamesArePrefixed) {
    Rng rng(6);
    DegradationEncoder<float> e(tiny_encoder(), rng);
    const auto params = e.parameters();
    EXPECT_EQ(params.size(), 18u);
    for (const auto& p : params) EXPECT_EQ(p.name.rfind("E.", 0), 0u) << p.name;
    EncoderConfig bad = tiny_encoder();
    bad.latent_channels = 0;
    EXPECT_THROW(DegradationEncoder<float>(bad, rng), ConfigError);
}
