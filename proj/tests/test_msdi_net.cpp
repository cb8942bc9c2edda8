#include <gtest/gtest.h>

#include <set>

#include "drl/config.hpp"
#include "drl/msdi_net.hpp"
#include "test_util.hpp"

using namespace drl;
using drl::test::gradient_error;
using drl::test::random_tensor;
using drl::test::vars_of;

namespace {

MSDINetConfig small_net(int base = 4, int latent = 3) {
    MSDINetConfig c;
    c.base_channels = base;
    c.max_channels = 4 * base;
    c.degradation_channels = latent;
    return c;
}

template <typename Scalar>
void zero_conv(Conv2d<Scalar>& conv, Scalar bias = 0) {
    conv.weight().mutable_value().data().setZero();
    if (conv.bias().defined()) conv.bias().mutable_value().data().setConstant(bias);
}

// Biases are zero at construction; give them values so gradient checks see
// every term.
template <typename Scalar>
void jitter(const ParamList<Scalar>& params, Rng& rng) {
    for (const auto& p : params) {
        auto v = p.var;
        v.mutable_value().data() += random_tensor(v.shape(), rng, -0.05, 0.05).data();
    }
}

}  // namespace

TEST(Upsampler, DoublesSpatialSize) {
    Rng rng(1);
    DegradationUpsampler<float> up(32, 16, rng);
    auto m = Var<float>::constant(random_tensor<float>({1, 32, 4, 4}, rng));
    EXPECT_EQ(up(m).shape(), (Shape{1, 16, 8, 8}));
}

TEST(Upsampler, DeltaKernelIsNearestNeighbour) {
    Rng rng(2);
    DegradationUpsampler<double> up(3, 3, rng);
    auto& w = up.conv().weight().mutable_value();
    w.set_zero();
    for (int c = 0; c < 3; ++c) w(c, c, 1, 1) = 1.0;
    up.conv().bias().mutable_value().set_zero();
    const auto m = random_tensor({2, 3, 4, 5}, rng);
    const auto out = up(Var<double>::constant(m)).value();
    for (int n = 0; n < 2; ++n)
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < 8; ++y)
                for (int x = 0; x < 10; ++x) ASSERT_EQ(out(n, c, y, x), m(n, c, y / 2, x / 2));
}

TEST(Upsampler, GradientWrtPreviousMap) {
    Rng rng(3);
    DegradationUpsampler<double> up(3, 2, rng);
    auto m = Var<double>::leaf(random_tensor({1, 3, 4, 4}, rng));
    auto probe = Var<double>::constant(random_tensor({1, 2, 8, 8}, rng));
    EXPECT_LT(gradient_error([&] { return sum(mul(up(m), probe)); }, {m}), 1e-4);
}

TEST(Sam, IdentityAndDegenerateModulation) {
    Rng rng(4);
    SpatialModulation<double> sam(3, 5, rng);
    const auto f = Var<double>::constant(random_tensor({2, 5, 4, 4}, rng));
    const auto m = Var<double>::constant(random_tensor({2, 3, 4, 4}, rng));

    zero_conv(sam.gamma_out(), 1.0);
    zero_conv(sam.beta_out(), 0.0);
    EXPECT_EQ(sam(f, m).value().data(), f.value().data());

    zero_conv(sam.gamma_out(), 0.0);
    Rng other(5);
    sam.beta_out().weight().mutable_value() = random_tensor({5, 5, 3, 3}, other);
    const auto f2 = Var<double>::constant(random_tensor({2, 5, 4, 4}, rng));
    const auto a = sam(f, m).value();
    const auto b = sam(f2, m).value();
    EXPECT_EQ(a.data(), b.data());
    EXPECT_GT(a.data().cwiseAbs().maxCoeff(), 0.0);
}

TEST(Sam, GradientsWrtFeatureAndMap) {
    Rng rng(6);
    SpatialModulation<double> sam(2, 3, rng);
    ParamList<double> params;
    sam.collect("sam", params);
    jitter(params, rng);
    auto f = Var<double>::leaf(random_tensor({1, 3, 4, 4}, rng));
    auto m = Var<double>::leaf(random_tensor({1, 2, 4, 4}, rng));
    auto probe = Var<double>::constant(random_tensor({1, 3, 4, 4}, rng));
    auto loss = [&] { return sum(mul(sam(f, m), probe)); };
    EXPECT_LT(gradient_error(loss, {f, m}, 1e-6, 64), 1e-4);
    EXPECT_LT(gradient_error(loss, vars_of(params), 1e-6, 20), 1e-4);
}

TEST(Sam, SpatialMismatchThrows) {
    Rng rng(7);
    SpatialModulation<float> sam(2, 3, rng);
    EXPECT_THROW(sam(Var<float>::constant(Tensor<float>({1, 3, 4, 4})), Var<float>::constant(Tensor<float>({1, 2, 8, 8}))),
                 DimensionError);
}

TEST(MsdiNet, ShapeClosureAndInjectionCounts) {
    Rng rng(8);
    for (auto scales : {InjectionScales::all, InjectionScales::coarsest_only}) {
        MSDINetConfig c = small_net();
        c.injection_scales = scales;
        Generator<float> g(c, rng);
        for (int side : {64, 96, 128}) {
            auto x = Var<float>::constant(random_tensor<float>({1, 3, side, side}, rng, 0, 1));
            auto deg = Var<float>::constant(random_tensor<float>({1, 3, side / 16, side / 16}, rng));
            std::vector<InjectionTrace> traces;
            const auto out = g(x, deg, &traces);
            ASSERT_EQ(out.stages.size(), 2u);
            for (const auto& s : out.stages) EXPECT_EQ(s.shape(), x.shape());
            ASSERT_EQ(traces.size(), 2u);
            for (const auto& t : traces) {
                EXPECT_EQ(t.injections, scales == InjectionScales::all ? 5 : 1);
                for (std::size_t i = 0; i < t.scales.size(); ++i) {
                    const int s = t.scales[i];
                    EXPECT_EQ(t.skip_shapes[i].h, side >> s);
                    EXPECT_EQ(t.skip_shapes[i].w, side >> s);
                    EXPECT_EQ(t.map_shapes[i].h, t.skip_shapes[i].h);
                    EXPECT_EQ(t.map_shapes[i].w, t.skip_shapes[i].w);
                    EXPECT_EQ(t.map_shapes[i].c, c.channels(s));
                }
                // Maps double from the coarsest scale outwards.
                for (std::size_t i = 1; i < t.scales.size(); ++i) {
                    EXPECT_EQ(t.map_shapes[i].h, 2 * t.map_shapes[i - 1].h);
                }
            }
        }
    }
}

TEST(MsdiNet, ZeroHeadIsBitExactIdentity) {
    Rng rng(9);
    Generator<float> g(small_net(), rng);
    for (auto& net : g.nets()) zero_conv(net.head());
    auto x = Var<float>::constant(random_tensor<float>({2, 3, 32, 64}, rng, 0, 1));
    auto deg = Var<float>::constant(random_tensor<float>({2, 3, 2, 4}, rng));
    EXPECT_EQ(g.nets()[0].forward_residual(x, deg).value().data().cwiseAbs().maxCoeff(), 0.0f);
    EXPECT_EQ(reblur(g, x, deg).final().value().data(), x.value().data());
    EXPECT_EQ(deblur(g, x, deg).stages[0].value().data(), x.value().data());
}

TEST(MsdiNet, ResidualDependsOnDegradation) {
    Rng rng(10);
    for (auto mode : {InjectionMode::sam, InjectionMode::concat, InjectionMode::input_concat}) {
        MSDINetConfig c = small_net();
        c.injection_mode = mode;
        MSDINet<float> net(c, rng);
        auto x = Var<float>::constant(random_tensor<float>({1, 3, 32, 32}, rng, 0, 1));
        auto d1 = Var<float>::constant(random_tensor<float>({1, 3, 2, 2}, rng));
        auto d2 = Var<float>::constant(random_tensor<float>({1, 3, 2, 2}, rng));
        const auto r1 = net.forward_residual(x, d1).value();
        const auto r2 = net.forward_residual(x, d2).value();
        EXPECT_GT((r1.data() - r2.data()).cwiseAbs().maxCoeff(), 0.0f);
    }
}

TEST(MsdiNet, NoneModeIgnoresDegradation) {
    Rng rng(11);
    MSDINetConfig c = small_net();
    c.injection_mode = InjectionMode::none;
    MSDINet<float> net(c, rng);
    auto x = Var<float>::constant(random_tensor<float>({1, 3, 32, 32}, rng, 0, 1));
    auto d1 = Var<float>::constant(random_tensor<float>({1, 3, 2, 2}, rng));
    const auto a = net.forward_residual(x, d1).value();
    const auto b = net.forward_residual(x, Var<float>()).value();
    EXPECT_EQ(a.data(), b.data());
    InjectionTrace t;
    net.forward_residual(x, d1, &t);
    EXPECT_EQ(t.injections, 0);
    for (const auto& p : net.parameters("G")) {
        EXPECT_EQ(p.name.find("sam"), std::string::npos);
        EXPECT_EQ(p.name.find("map"), std::string::npos);
    }
}

TEST(MsdiNet, RejectsBadShapes) {
    Rng rng(12);
    MSDINet<float> net(small_net(), rng);
    auto x = Var<float>::constant(Tensor<float>({1, 3, 40, 32}));
    auto deg = Var<float>::constant(Tensor<float>({1, 3, 2, 2}));
    EXPECT_THROW(net.forward_residual(x, deg), DimensionError);
    auto ok = Var<float>::constant(Tensor<float>({1, 3, 32, 32}));
    EXPECT_THROW(net.forward_residual(ok, Var<float>::constant(Tensor<float>({1, 3, 4, 4}))), DimensionError);
    EXPECT_THROW(net.forward_residual(ok, Var<float>::constant(Tensor<float>({1, 5, 2, 2}))), DimensionError);
}

TEST(MsdiNet, EndToEndGradientCheck) {
    Rng rng(13);
    MSDINetConfig c = small_net(4, 2);
    c.max_channels = 4;
    Generator<double> g(c, rng);
    const auto params = g.parameters("G_r");
    jitter(params, rng);
    // Larger head weights so the gradient is not dominated by the identity path.
    for (auto& net : g.nets()) net.head().weight().mutable_value().data() *= 50.0;
    auto x = Var<double>::leaf(random_tensor({1, 3, 32, 32}, rng, 0, 1));
    auto deg = Var<double>::leaf(random_tensor({1, 2, 2, 2}, rng));
    auto loss = [&] { return mean(reblur(g, x, deg).final()); };
    EXPECT_LT(gradient_error(loss, {x}, 1e-6, 40), 1e-3);
    EXPECT_LT(gradient_error(loss, {deg}, 1e-6, 8), 1e-3);
    EXPECT_LT(gradient_error(loss, vars_of(params), 1e-6, 3), 1e-3);
}

TEST(MsdiNet, ReblurGradientWrtOneLatentCell) {
    Rng rng(14);
    Generator<double> g(small_net(4, 2), rng);
    for (auto& net : g.nets()) net.head().weight().mutable_value().data() *= 50.0;
    auto x = Var<double>::constant(random_tensor({1, 3, 32, 32}, rng, 0, 1));
    auto deg = Var<double>::leaf(random_tensor({1, 2, 2, 2}, rng));
    auto loss = [&] { return mean(reblur(g, x, deg).final()); };
    backward(loss());
    const double analytic = deg.grad()(0, 1, 1, 0);
    double& cell = deg.mutable_value()(0, 1, 1, 0);
    const double saved = cell;
    cell = saved + 1e-6;
    const double plus = loss().item();
    cell = saved - 1e-6;
    const double minus = loss().item();
    cell = saved;
    const double numeric = (plus - minus) / 2e-6;
    EXPECT_GT(std::abs(numeric), 0.0);
    EXPECT_LT(std::abs(analytic - numeric) / std::abs(numeric), 1e-3);
}

TEST(Generator, ReblurAndDeblurShareNoParameters) {
    Rng rng(15);
    Generator<float> g_r(small_net(), rng), g_d(small_net(), rng);
    std::set<const void*> seen;
    for (const auto& p : g_r.parameters("G_r")) seen.insert(p.var.node());
    for (const auto& p : g_d.parameters("G_d")) EXPECT_EQ(seen.count(p.var.node()), 0u) << p.name;
    for (const auto& p : g_r.parameters("G_r")) {
        seen.insert(p.var.value().ptr());
    }
    for (const auto& p : g_d.parameters("G_d")) EXPECT_EQ(seen.count(p.var.value().ptr()), 0u);
    EXPECT_NE(parameter_checksum(g_r.parameters("G")), parameter_checksum(g_d.parameters("G")));
}

TEST(Generator, StackedNetsAndInjectionFlag) {
    Rng rng(16);
    MSDINetConfig c = small_net();
    c.inject_all_stacked = false;
    Generator<float> g(c, rng);
    auto x = Var<float>::constant(random_tensor<float>({1, 3, 32, 32}, rng, 0, 1));
    auto deg = Var<float>::constant(random_tensor<float>({1, 3, 2, 2}, rng));
    std::vector<InjectionTrace> traces;
    const auto out = g(x, deg, &traces);
    EXPECT_EQ(traces[0].injections, 5);
    EXPECT_EQ(traces[1].injections, 0);
    // Second net consumes the first net's output.
    const auto r2 = g.nets()[1].forward_residual(out.stages[0], deg);
    EXPECT_EQ(add(out.stages[0], r2).value().data(), out.final().value().data());

    std::set<std::string> names;
    for (const auto& p : g.parameters("G_d")) EXPECT_TRUE(names.insert(p.name).second) << p.name;
    EXPECT_TRUE(names.count("G_d.net0.sam4.gamma_out.bias"));
    EXPECT_TRUE(names.count("G_d.net1.head.weight"));
}

TEST(Generator, CoarsestOnlyBuildsOneModulator) {
    Rng rng(17);
    MSDINetConfig c = small_net();
    c.injection_scales = InjectionScales::coarsest_only;
    MSDINet<float> net(c, rng);
    int sam_params = 0, map_up = 0;
    for (const auto& p : net.parameters("G")) {
        if (p.name.find(".sam") != std::string::npos) {
            ++sam_params;
            EXPECT_NE(p.name.find(".sam4."), std::string::npos);
        }
        if (p.name.find("map_up") != std::string::npos) ++map_up;
    }
    EXPECT_EQ(sam_params, 8);
    EXPECT_EQ(map_up, 0);
}

TEST(Generator, ConcatInjectionUsesResidualBlocks) {
    Rng rng(18);
    MSDINetConfig c = small_net();
    c.injection_mode = InjectionMode::concat;
    MSDINet<float> net(c, rng);
    int fuse = 0, res = 0;
    for (const auto& p : net.parameters("G")) {
        fuse += p.name.find(".fuse.weight") != std::string::npos;
        res += p.name.find(".res") != std::string::npos && p.name.ends_with(".weight");
    }
    EXPECT_EQ(fuse, 5);
    EXPECT_EQ(res, 10);
    auto x = Var<float>::constant(random_tensor<float>({1, 3, 64, 32}, rng, 0, 1));
    auto deg = Var<float>::constant(random_tensor<float>({1, 3, 4, 2}, rng));
    InjectionTrace t;
    EXPECT_EQ(net.forward_residual(x, deg, &t).shape(), x.shape());
    EXPECT_EQ(t.injections, 5);

    c.injection_mode = InjectionMode::input_concat;
    MSDINet<float> ic(c, rng);
    InjectionTrace t2;
    EXPECT_EQ(ic.forward_residual(x, deg, &t2).shape(), x.shape());
    EXPECT_EQ(t2.injections, 0);
}
