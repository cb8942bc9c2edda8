#pragma once

#include <vector>

#include "drl/config.hpp"
#include "drl/nn.hpp"

namespace drl {

/// Nearest-neighbour x2 followed by a 3x3 conv.
template <typename Scalar>
class DegradationUpsampler {
public:
    DegradationUpsampler() = default;
    DegradationUpsampler(int in_channels, int out_channels, Rng& rng) : conv_(in_channels, out_channels, 3, 1, rng) {}

    Var<Scalar> operator()(const Var<Scalar>& m) const { return conv_(upsample_nearest2x(m)); }

    void collect(const std::string& prefix, ParamList<Scalar>& out) const { conv_.collect(prefix + ".conv", out); }
    Conv2d<Scalar>& conv() { return conv_; }
    const Conv2d<Scalar>& conv() const { return conv_; }

private:
    Conv2d<Scalar> conv_;
};

/// F = gamma * f + beta, where gamma and beta each come from two 3x3 convs on
/// the degradation map M. The gamma output bias starts at 1.
template <typename Scalar>
class SpatialModulation {
public:
    SpatialModulation() = default;
    SpatialModulation(int map_channels, int feature_channels, Rng& rng);

    Var<Scalar> operator()(const Var<Scalar>& f, const Var<Scalar>& m) const;

    void collect(const std::string& prefix, ParamList<Scalar>& out) const;
    Conv2d<Scalar>& gamma_hidden() { return gamma_hidden_; }
    Conv2d<Scalar>& gamma_out() { return gamma_out_; }
    Conv2d<Scalar>& beta_hidden() { return beta_hidden_; }
    Conv2d<Scalar>& beta_out() { return beta_out_; }

private:
    Conv2d<Scalar> gamma_hidden_, gamma_out_;
    Conv2d<Scalar> beta_hidden_, beta_out_;
};

/// Concatenation injection used by the ablation: h = conv(cat(f, M)), then one
/// two-layer residual block on h.
template <typename Scalar>
class ConcatInjection {
public:
    ConcatInjection() = default;
    ConcatInjection(int map_channels, int feature_channels, Rng& rng);

    Var<Scalar> operator()(const Var<Scalar>& f, const Var<Scalar>& m) const;
    void collect(const std::string& prefix, ParamList<Scalar>& out) const;

private:
    Conv2d<Scalar> fuse_, res1_, res2_;
};

/// Records what one forward pass injected, for shape and count checks.
struct InjectionTrace {
    int injections = 0;
    std::vector<int> scales;
    std::vector<Shape> skip_shapes;
    std::vector<Shape> map_shapes;
};

/// Five-scale U-Net predicting a residual image. Scale 0 is full resolution and
/// scale 4 is H/16, where the degradation map enters.
template <typename Scalar>
class MSDINet {
public:
    MSDINet(const MSDINetConfig& config, Rng& rng);
    MSDINet(const MSDINet&) = delete;
    MSDINet& operator=(const MSDINet&) = delete;
    MSDINet(MSDINet&&) noexcept = default;
    MSDINet& operator=(MSDINet&&) noexcept = default;

    /// Residual for `input` conditioned on `deg` (ignored under injection none).
    Var<Scalar> forward_residual(const Var<Scalar>& input, const Var<Scalar>& deg,
                                 InjectionTrace* trace = nullptr) const;

    [[nodiscard]] ParamList<Scalar> parameters(const std::string& prefix) const;
    [[nodiscard]] const MSDINetConfig& config() const { return config_; }
    Conv2d<Scalar>& head() { return head_; }

private:
    bool injects_at(int scale) const;

    MSDINetConfig config_;
    Conv2d<Scalar> stem_a_, stem_b_;
    std::vector<Conv2d<Scalar>> down_, enc_;
    Conv2d<Scalar> map_in_;
    std::vector<DegradationUpsampler<Scalar>> map_up_;  // map_up_[s] produces M_s from M_{s+1}
    std::vector<SpatialModulation<Scalar>> sam_;
    std::vector<ConcatInjection<Scalar>> concat_;
    std::vector<Conv2d<Scalar>> dec_up_, dec_a_, dec_b_;
    Conv2d<Scalar> head_;
};

template <typename Scalar>
struct GeneratorOutput {
    // One image per stacked net; the last is the generator's output.
    std::vector<Var<Scalar>> stages;
    const Var<Scalar>& final() const { return stages.back(); }
};

/// Stack of MSDI-Nets: out_k = in_k + net_k(in_k, deg), in_{k+1} = out_k.
/// Used both as G_r (input x) and G_d (input y).
template <typename Scalar>
class Generator {
public:
    Generator(const MSDINetConfig& config, Rng& rng);

    GeneratorOutput<Scalar> operator()(const Var<Scalar>& input, const Var<Scalar>& deg,
                                       std::vector<InjectionTrace>* traces = nullptr) const;

    [[nodiscard]] ParamList<Scalar> parameters(const std::string& prefix) const;
    [[nodiscard]] const MSDINetConfig& config() const { return config_; }
    std::vector<MSDINet<Scalar>>& nets() { return nets_; }
    const std::vector<MSDINet<Scalar>>& nets() const { return nets_; }

private:
    MSDINetConfig config_;
    std::vector<MSDINet<Scalar>> nets_;
};

/// y' = x + G_r(x, deg)
template <typename Scalar>
GeneratorOutput<Scalar> reblur(const Generator<Scalar>& g_r, const Var<Scalar>& x, const Var<Scalar>& deg) {
    return g_r(x, deg);
}

/// x' = y + G_d(y, deg)
template <typename Scalar>
GeneratorOutput<Scalar> deblur(const Generator<Scalar>& g_d, const Var<Scalar>& y, const Var<Scalar>& deg) {
    return g_d(y, deg);
}

extern template class SpatialModulation<float>;
extern template class SpatialModulation<double>;
extern template class ConcatInjection<float>;
extern template class ConcatInjection<double>;
extern template class MSDINet<float>;
extern template class MSDINet<double>;
extern template class Generator<float>;
extern template class Generator<double>;

}  // namespace drl
