#pragma once

#include <vector>

#include "drl/config.hpp"
#include "drl/nn.hpp"

namespace drl {

/// Patch logits, one map per scale.
template <typename Scalar>
struct DiscriminatorOutputs {
    std::vector<Var<Scalar>> scores;
};

/// Conditional multi-scale patch discriminator on cat(x, candidate). Each scale
/// has four convs (strides 2, 2, 2, 1), the last producing one logit channel;
/// scale k sees the input average-pooled k times.
template <typename Scalar>
class MultiScaleDiscriminator {
public:
    MultiScaleDiscriminator(const DiscriminatorConfig& config, Rng& rng, int image_channels = 3);

    DiscriminatorOutputs<Scalar> operator()(const Var<Scalar>& x, const Var<Scalar>& candidate) const;

    [[nodiscard]] ParamList<Scalar> parameters(const std::string& prefix = "D") const;
    [[nodiscard]] const DiscriminatorConfig& config() const { return config_; }

private:
    struct Body {
        std::vector<Conv2d<Scalar>> convs;
    };
    DiscriminatorConfig config_;
    std::vector<Body> bodies_;
};

/// -mean(min(0, -1 + real)) - mean(min(0, -1 - fake)), averaged over scales.
template <typename Scalar>
Var<Scalar> hinge_d_loss(const DiscriminatorOutputs<Scalar>& real, const DiscriminatorOutputs<Scalar>& fake);

/// -mean(fake), averaged over scales.
template <typename Scalar>
Var<Scalar> hinge_g_loss(const DiscriminatorOutputs<Scalar>& fake);

extern template class MultiScaleDiscriminator<float>;
extern template class MultiScaleDiscriminator<double>;
extern template Var<float> hinge_d_loss(const DiscriminatorOutputs<float>&, const DiscriminatorOutputs<float>&);
extern template Var<double> hinge_d_loss(const DiscriminatorOutputs<double>&, const DiscriminatorOutputs<double>&);
extern template Var<float> hinge_g_loss(const DiscriminatorOutputs<float>&);
extern template Var<double> hinge_g_loss(const DiscriminatorOutputs<double>&);

}  // namespace drl
