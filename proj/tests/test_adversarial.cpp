#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "drl/discriminator.hpp"
#include "drl/optim.hpp"
#include "test_util.hpp"

using namespace drl;
using drl::test::gradient_error;
using drl::test::random_tensor;

namespace {

DiscriminatorOutputs<double> constant_scores(double value, std::vector<int> sides = {8, 4}) {
    DiscriminatorOutputs<double> out;
    for (int s : sides) {
        Tensor<double> t({2, 1, s, s});
        t.data().setConstant(value);
        out.scores.push_back(Var<double>::constant(t));
    }
    return out;
}

DiscriminatorOutputs<double> from_tensors(const std::vector<Tensor<double>>& maps) {
    DiscriminatorOutputs<double> out;
    for (const auto& m : maps) out.scores.push_back(Var<double>::constant(m));
    return out;
}

// Plain double loop over the hinge formula.
double oracle_d(const std::vector<Tensor<double>>& real, const std::vector<Tensor<double>>& fake) {
    double total = 0.0;
    for (std::size_t s = 0; s < real.size(); ++s) {
        double r = 0.0, f = 0.0;
        for (Eigen::Index i = 0; i < real[s].data().size(); ++i) r += std::max(0.0, 1.0 - real[s].data()[i]);
        for (Eigen::Index i = 0; i < fake[s].data().size(); ++i) f += std::max(0.0, 1.0 + fake[s].data()[i]);
        total += r / real[s].data().size() + f / fake[s].data().size();
    }
    return total / real.size();
}

DiscriminatorConfig small_d() {
    DiscriminatorConfig c;
    c.base_channels = 8;
    return c;
}

}  // namespace

TEST(Discriminator, ScoreMapShapes) {
    Rng rng(1);
    MultiScaleDiscriminator<float> d(DiscriminatorConfig{}, rng);
    auto x = Var<float>::constant(random_tensor<float>({2, 3, 64, 64}, rng, 0, 1));
    auto c = Var<float>::constant(random_tensor<float>({2, 3, 64, 64}, rng, 0, 1));
    const auto out = d(x, c);
    ASSERT_EQ(out.scores.size(), 2u);
    EXPECT_EQ(out.scores[0].shape(), (Shape{2, 1, 8, 8}));
    EXPECT_EQ(out.scores[1].shape(), (Shape{2, 1, 4, 4}));
    for (const auto& s : out.scores) EXPECT_TRUE(s.value().data().allFinite());
}

TEST(Discriminator, ShapeMismatchThrows) {
    Rng rng(2);
    MultiScaleDiscriminator<float> d(small_d(), rng);
    EXPECT_THROW(d(Var<float>::constant(Tensor<float>({1, 3, 64, 64})), Var<float>::constant(Tensor<float>({1, 3, 32, 64}))),
                 DimensionError);
}

TEST(Discriminator, ConditionedOnBothInputs) {
    Rng rng(3);
    MultiScaleDiscriminator<double> d(small_d(), rng);
    auto x = Var<double>::constant(random_tensor({1, 3, 32, 32}, rng, 0, 1));
    auto c1 = Var<double>::constant(random_tensor({1, 3, 32, 32}, rng, 0, 1));
    auto c2 = Var<double>::constant(random_tensor({1, 3, 32, 32}, rng, 0, 1));
    auto x2 = Var<double>::constant(random_tensor({1, 3, 32, 32}, rng, 0, 1));
    const auto a = d(x, c1), b = d(x, c2), c = d(x2, c1);
    for (std::size_t s = 0; s < 2; ++s) {
        EXPECT_GT((a.scores[s].value().data() - b.scores[s].value().data()).cwiseAbs().maxCoeff(), 0.0);
        EXPECT_GT((a.scores[s].value().data() - c.scores[s].value().data()).cwiseAbs().maxCoeff(), 0.0);
    }
}

TEST(Discriminator, ScoresDifferentiableWrtCandidate) {
    Rng rng(4);
    MultiScaleDiscriminator<double> d(small_d(), rng);
    for (const auto& p : d.parameters()) {
        auto v = p.var;
        v.mutable_value().data() += random_tensor(v.shape(), rng, -0.05, 0.05).data();
    }
    auto x = Var<double>::constant(random_tensor({1, 3, 32, 32}, rng, 0, 1));
    auto cand = Var<double>::leaf(random_tensor({1, 3, 32, 32}, rng, 0, 1));
    auto loss = [&] {
        const auto out = d(x, cand);
        return add(sum(out.scores[0]), sum(out.scores[1]));
    };
    EXPECT_LT(gradient_error(loss, {cand}, 1e-6, 60), 1e-3);
}

TEST(Hinge, ClosedFormCases) {
    EXPECT_DOUBLE_EQ(hinge_d_loss(constant_scores(1.0), constant_scores(-1.0)).item(), 0.0);
    EXPECT_DOUBLE_EQ(hinge_d_loss(constant_scores(0.0), constant_scores(0.0)).item(), 2.0);
    EXPECT_DOUBLE_EQ(hinge_d_loss(constant_scores(2.0), constant_scores(-2.0)).item(), 0.0);
    EXPECT_DOUBLE_EQ(hinge_g_loss(constant_scores(0.0)).item(), 0.0);
    EXPECT_DOUBLE_EQ(hinge_g_loss(constant_scores(3.0)).item(), -3.0);
}

TEST(Hinge, GeneratorGradientIsUniform) {
    Rng rng(5);
    auto fake = Var<double>::leaf(random_tensor({2, 1, 8, 8}, rng));
    DiscriminatorOutputs<double> one{{fake}};
    backward(hinge_g_loss(one));
    for (Eigen::Index i = 0; i < fake.grad().data().size(); ++i) ASSERT_DOUBLE_EQ(fake.grad().data()[i], -1.0 / 128);

    // With two scales each map carries half the weight.
    auto f0 = Var<double>::leaf(random_tensor({1, 1, 8, 8}, rng));
    auto f1 = Var<double>::leaf(random_tensor({1, 1, 4, 4}, rng));
    backward(hinge_g_loss(DiscriminatorOutputs<double>{{f0, f1}}));
    EXPECT_DOUBLE_EQ(f0.grad().data()[0], -0.5 / 64);
    EXPECT_DOUBLE_EQ(f1.grad().data()[3], -0.5 / 16);
}

TEST(Hinge, PropertiesOnRandomScores) {
    Rng rng(6);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<Tensor<double>> real, fake;
        const bool satisfied = trial % 4 == 0;
        for (int s : {8, 4}) {
            real.push_back(random_tensor({1, 1, s, s}, rng, satisfied ? 1.0 : -3.0, 3.0));
            fake.push_back(random_tensor({1, 1, s, s}, rng, -3.0, satisfied ? -1.0 : 3.0));
        }
        const double loss = hinge_d_loss(from_tensors(real), from_tensors(fake)).item();
        ASSERT_GE(loss, 0.0);
        ASSERT_NEAR(loss, oracle_d(real, fake), 1e-12);

        bool margins_met = true;
        for (std::size_t s = 0; s < 2; ++s) {
            margins_met &= real[s].data().minCoeff() >= 1.0 && fake[s].data().maxCoeff() <= -1.0;
        }
        ASSERT_EQ(loss == 0.0, margins_met) << "trial " << trial;

        // Shuffle patches inside every map.
        std::mt19937_64 shuffler(trial);
        auto shuffled_real = real, shuffled_fake = fake;
        for (auto* maps : {&shuffled_real, &shuffled_fake}) {
            for (auto& m : *maps) {
                auto* d = m.data().data();
                std::shuffle(d, d + m.data().size(), shuffler);
            }
        }
        ASSERT_NEAR(hinge_d_loss(from_tensors(shuffled_real), from_tensors(shuffled_fake)).item(), loss, 1e-12);
        ASSERT_NEAR(hinge_g_loss(from_tensors(shuffled_fake)).item(), hinge_g_loss(from_tensors(fake)).item(), 1e-12);
    }
}

TEST(Hinge, SingleDiscriminatorStepDecreasesLoss) {
    Rng rng(7);
    MultiScaleDiscriminator<double> d(small_d(), rng);
    auto x = Var<double>::constant(random_tensor({2, 3, 32, 32}, rng, 0, 1));
    auto real = Var<double>::constant(random_tensor({2, 3, 32, 32}, rng, 0, 1));
    auto fake = Var<double>::constant(random_tensor({2, 3, 32, 32}, rng, 0, 1));
    auto loss = [&] { return hinge_d_loss(d(x, real), d(x, fake)); };
    Adam<double> opt(d.parameters());
    const auto l0 = loss();
    const double before = l0.item();
    backward(l0);
    opt.step(1e-4);
    EXPECT_LT(loss().item(), before);
}
