#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "drl/ops.hpp"
#include "drl/random.hpp"

namespace drl {

inline constexpr double kLeakySlope = 0.2;

template <typename Scalar>
struct NamedParam {
    std::string name;
    Var<Scalar> var;
};

template <typename Scalar>
using ParamList = std::vector<NamedParam<Scalar>>;

/// k x k convolution with "same" zero padding and optional bias.
/// Weights use Kaiming-uniform initialisation for LeakyReLU(0.2).
template <typename Scalar>
class Conv2d {
public:
    Conv2d() = default;
    Conv2d(int in_channels, int out_channels, int kernel, int stride, Rng& rng, bool with_bias = true)
        : in_channels_(in_channels), out_channels_(out_channels), kernel_(kernel), stride_(stride) {
        Tensor<Scalar> w({out_channels, in_channels, kernel, kernel});
        const double fan_in = static_cast<double>(in_channels) * kernel * kernel;
        const double bound = std::sqrt(6.0 / ((1.0 + kLeakySlope * kLeakySlope) * fan_in));
        for (std::ptrdiff_t i = 0; i < w.size(); ++i) w.data()[i] = static_cast<Scalar>(rng.uniform(-bound, bound));
        weight_ = Var<Scalar>::leaf(std::move(w));
        if (with_bias) bias_ = Var<Scalar>::leaf(Tensor<Scalar>({1, out_channels, 1, 1}));
    }

    Var<Scalar> operator()(const Var<Scalar>& x) const {
        return conv2d(x, weight_, bias_, stride_, kernel_ / 2);
    }

    void collect(const std::string& prefix, ParamList<Scalar>& out) const {
        out.push_back({prefix + ".weight", weight_});
        if (bias_.defined()) out.push_back({prefix + ".bias", bias_});
    }

    Var<Scalar>& weight() { return weight_; }
    Var<Scalar>& bias() { return bias_; }
    const Var<Scalar>& weight() const { return weight_; }
    const Var<Scalar>& bias() const { return bias_; }
    [[nodiscard]] int in_channels() const { return in_channels_; }
    [[nodiscard]] int out_channels() const { return out_channels_; }
    [[nodiscard]] int kernel() const { return kernel_; }
    [[nodiscard]] int stride() const { return stride_; }

private:
    int in_channels_ = 0;
    int out_channels_ = 0;
    int kernel_ = 0;
    int stride_ = 1;
    Var<Scalar> weight_;
    Var<Scalar> bias_;
};

template <typename Scalar>
Var<Scalar> lrelu(const Var<Scalar>& x) {
    return leaky_relu(x, static_cast<Scalar>(kLeakySlope));
}

template <typename Scalar>
void set_requires_grad(const ParamList<Scalar>& params, bool on) {
    for (const auto& p : params) const_cast<Var<Scalar>&>(p.var).set_requires_grad(on);
}

template <typename Scalar>
std::int64_t parameter_count(const ParamList<Scalar>& params) {
    std::int64_t total = 0;
    for (const auto& p : params) total += p.var.value().size();
    return total;
}

/// FNV-1a over the raw parameter bytes, in list order.
template <typename Scalar>
std::uint64_t parameter_checksum(const ParamList<Scalar>& params) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& p : params) {
        const auto* bytes = reinterpret_cast<const unsigned char*>(p.var.value().ptr());
        const auto n = static_cast<std::size_t>(p.var.value().size()) * sizeof(Scalar);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= bytes[i];
            h *= 0x100000001b3ULL;
        }
    }
    return h;
}

}  // namespace drl
