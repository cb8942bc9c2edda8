#include <gtest/gtest.h>

#include "drl/ops.hpp"
#include "test_util.hpp"

using namespace drl;
using drl::test::gradient_error;
using drl::test::random_tensor;

namespace {

// Direct 7-deep loop, zero padding.
Tensor<double> naive_conv(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>* b, int stride,
                          int pad) {
    const Shape xs = x.shape();
    const Shape ws = w.shape();
    const int k = ws.h;
    const int ho = (xs.h + 2 * pad - k) / stride + 1;
    const int wo = (xs.w + 2 * pad - k) / stride + 1;
    Tensor<double> out({xs.n, ws.n, ho, wo});
    for (int n = 0; n < xs.n; ++n)
        for (int co = 0; co < ws.n; ++co)
            for (int oy = 0; oy < ho; ++oy)
                for (int ox = 0; ox < wo; ++ox) {
                    double acc = b ? b->data()[co] : 0.0;
                    for (int ci = 0; ci < xs.c; ++ci)
                        for (int ky = 0; ky < k; ++ky)
                            for (int kx = 0; kx < k; ++kx) {
                                const int iy = oy * stride - pad + ky;
                                const int ix = ox * stride - pad + kx;
                                if (iy < 0 || ix < 0 || iy >= xs.h || ix >= xs.w) continue;
                                acc += x(n, ci, iy, ix) * w(co, ci, ky, kx);
                            }
                    out(n, co, oy, ox) = acc;
                }
    return out;
}

struct ConvCase {
    int n, c, h, w, out_c, k, stride;
};

}  // namespace

TEST(Conv2d, MatchesNaiveLoop) {
    Rng rng(3);
    for (const ConvCase cc : {ConvCase{1, 3, 8, 8, 4, 3, 1}, ConvCase{2, 2, 9, 7, 3, 3, 2}, ConvCase{2, 5, 6, 6, 2, 1, 1},
                              ConvCase{1, 1, 16, 16, 1, 3, 2}, ConvCase{3, 4, 5, 11, 6, 3, 1}}) {
        auto x = random_tensor({cc.n, cc.c, cc.h, cc.w}, rng);
        auto w = random_tensor({cc.out_c, cc.c, cc.k, cc.k}, rng);
        auto b = random_tensor({1, cc.out_c, 1, 1}, rng);
        const int pad = cc.k / 2;
        auto got = conv2d(Var<double>::constant(x), Var<double>::constant(w), Var<double>::constant(b), cc.stride, pad);
        auto want = naive_conv(x, w, &b, cc.stride, pad);
        ASSERT_EQ(got.shape(), want.shape());
        EXPECT_LT((got.value().data() - want.data()).cwiseAbs().maxCoeff(), 1e-12);

        auto nobias = conv2d(Var<double>::constant(x), Var<double>::constant(w), Var<double>(), cc.stride, pad);
        auto want_nb = naive_conv(x, w, nullptr, cc.stride, pad);
        EXPECT_LT((nobias.value().data() - want_nb.data()).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(Conv2d, ChannelMismatchThrows) {
    Rng rng(1);
    auto x = Var<double>::constant(random_tensor({1, 3, 8, 8}, rng));
    auto w = Var<double>::constant(random_tensor({2, 4, 3, 3}, rng));
    EXPECT_THROW(conv2d(x, w, Var<double>(), 1, 1), DimensionError);
}

TEST(Conv2d, GradientMatchesFiniteDifferences) {
    Rng rng(5);
    for (int stride : {1, 2}) {
        auto x = Var<double>::leaf(random_tensor({2, 3, 7, 6}, rng));
        auto w = Var<double>::leaf(random_tensor({4, 3, 3, 3}, rng));
        auto b = Var<double>::leaf(random_tensor({1, 4, 1, 1}, rng));
        auto probe = Var<double>::constant(random_tensor(conv2d(x, w, b, stride, 1).shape(), rng));
        auto f = [&] { return sum(mul(conv2d(x, w, b, stride, 1), probe)); };
        EXPECT_LT(gradient_error(f, {x, w, b}), 1e-7) << "stride " << stride;
    }
}

TEST(Ops, ElementwiseGradients) {
    Rng rng(9);
    const Shape s{2, 3, 4, 4};
    auto a = Var<double>::leaf(random_tensor(s, rng));
    auto b = Var<double>::leaf(random_tensor(s, rng));
    auto probe = Var<double>::constant(random_tensor(s, rng));
    EXPECT_LT(gradient_error([&] { return sum(mul(add(a, b), probe)); }, {a, b}), 1e-8);
    EXPECT_LT(gradient_error([&] { return sum(mul(sub(a, b), probe)); }, {a, b}), 1e-8);
    EXPECT_LT(gradient_error([&] { return sum(mul(mul(a, b), probe)); }, {a, b}), 1e-8);
    EXPECT_LT(gradient_error([&] { return mean(scale(mul(a, probe), 3.5)); }, {a}), 1e-8);
    EXPECT_LT(gradient_error([&] { return sum(mul(leaky_relu(a, 0.2), probe)); }, {a}), 1e-7);
    EXPECT_LT(gradient_error([&] { return l1_mean(a, b); }, {a, b}), 1e-7);
    EXPECT_LT(gradient_error([&] { return mse(a, b); }, {a, b}), 1e-7);
    EXPECT_LT(gradient_error([&] { return neg_psnr(a, b, 1e-10); }, {a, b}), 1e-6);
    EXPECT_LT(gradient_error([&] { return hinge_mean(a, 1.0); }, {a}), 1e-7);
    EXPECT_LT(gradient_error([&] { return hinge_mean(a, -1.0); }, {a}), 1e-7);
}

TEST(Ops, ResamplingAndConcatGradients) {
    Rng rng(11);
    auto a = Var<double>::leaf(random_tensor({2, 2, 4, 6}, rng));
    auto b = Var<double>::leaf(random_tensor({2, 3, 4, 6}, rng));
    auto p_up = Var<double>::constant(random_tensor({2, 2, 8, 12}, rng));
    auto p_pool = Var<double>::constant(random_tensor({2, 2, 2, 3}, rng));
    auto p_cat = Var<double>::constant(random_tensor({2, 5, 4, 6}, rng));
    EXPECT_LT(gradient_error([&] { return sum(mul(upsample_nearest2x(a), p_up)); }, {a}), 1e-8);
    EXPECT_LT(gradient_error([&] { return sum(mul(avg_pool2x(a), p_pool)); }, {a}), 1e-8);
    EXPECT_LT(gradient_error([&] { return sum(mul(concat_channels<double>({a, b}), p_cat)); }, {a, b}), 1e-8);
}

TEST(Ops, ResamplingValues) {
    Tensor<double> t({1, 1, 2, 2});
    t.data() << 1, 2, 3, 4;
    auto up = upsample_nearest2x(Var<double>::constant(t));
    const double want[16] = {1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4};
    for (int i = 0; i < 16; ++i) EXPECT_EQ(up.value().data()[i], want[i]);
    auto down = avg_pool2x(up);
    EXPECT_EQ(down.value().data(), t.data());
    EXPECT_THROW(avg_pool2x(Var<double>::constant(Tensor<double>({1, 1, 3, 2}))), DimensionError);
}

TEST(Ops, NegPsnrIsFlatAtFloor) {
    Tensor<double> t({1, 1, 2, 2}, 0.5);
    auto a = Var<double>::leaf(t);
    auto b = Var<double>::constant(t);
    auto loss = neg_psnr(a, b, 1e-10);
    EXPECT_DOUBLE_EQ(loss.item(), -100.0);
    backward(loss);
    EXPECT_TRUE(a.grad().empty() || a.grad().data().isZero());
}

TEST(MacCounter, ClosedFormExamples) {
    Rng rng(2);
    {
        MacCounter counter(true);
        Conv2d<float> conv(3, 16, 3, 1, rng);
        conv(Var<float>::constant(Tensor<float>({1, 3, 64, 64})));
        EXPECT_EQ(counter.macs(), 16LL * 64 * 64 * 3 * 3 * 3);
        EXPECT_EQ(counter.macs(), 1769472);
    }
    {
        MacCounter counter(true);
        Conv2d<float> conv(1, 1, 1, 1, rng);
        conv(Var<float>::constant(Tensor<float>({1, 1, 1, 1})));
        EXPECT_EQ(counter.macs(), 1);
    }
}

TEST(MacCounter, DryRunSkipsArithmeticButKeepsShapes) {
    Rng rng(4);
    auto x = Var<double>::constant(random_tensor({1, 2, 8, 8}, rng));
    Conv2d<double> conv(2, 5, 3, 2, rng);
    std::int64_t counted = 0;
    {
        MacCounter counter(true);
        auto y = conv(x);
        EXPECT_EQ(y.shape(), (Shape{1, 5, 4, 4}));
        counted = counter.macs();
    }
    MacCounter live;
    auto y = conv(x);
    EXPECT_EQ(live.macs(), counted);
    EXPECT_GT(y.value().data().cwiseAbs().sum(), 0.0);
}

TEST(MacCounter, NestedCountersRestorePrevious) {
    Rng rng(4);
    Conv2d<double> conv(1, 1, 1, 1, rng);
    auto x = Var<double>::constant(Tensor<double>({1, 1, 2, 2}));
    MacCounter outer;
    {
        MacCounter inner;
        conv(x);
        EXPECT_EQ(inner.macs(), 4);
    }
    EXPECT_EQ(outer.macs(), 0);
    conv(x);
    EXPECT_EQ(outer.macs(), 4);
}

TEST(Autograd, NoGradGuardStopsRecording) {
    auto a = Var<double>::leaf(Tensor<double>({1, 1, 2, 2}, 1.0));
    {
        NoGradGuard guard;
        EXPECT_FALSE(grad_enabled());
        EXPECT_FALSE(scale(a, 2.0).requires_grad());
    }
    EXPECT_TRUE(grad_enabled());
    EXPECT_TRUE(scale(a, 2.0).requires_grad());
}

TEST(Autograd, BackwardRejectsNonScalarAndAccumulatesSharedInputs) {
    auto a = Var<double>::leaf(Tensor<double>({1, 1, 2, 2}, 1.5));
    EXPECT_THROW(backward(scale(a, 2.0)), DimensionError);
    // a used twice: d/da sum(a * a) = 2a
    backward(sum(mul(a, a)));
    for (int i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(a.grad().data()[i], 3.0);
}

TEST(Autograd, DetachCutsTheGraph) {
    auto a = Var<double>::leaf(Tensor<double>({1, 1, 1, 2}, 2.0));
    auto loss = sum(mul(a, scale(a, 1.0).detach()));
    backward(loss);
    EXPECT_DOUBLE_EQ(a.grad().data()[0], 2.0);
}
