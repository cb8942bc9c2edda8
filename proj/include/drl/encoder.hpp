#pragma once

#include <array>

#include "drl/config.hpp"
#include "drl/nn.hpp"

namespace drl {

/// Intermediate activations E^(i) (layer i at 1/2^i resolution) and the latent
/// degradation map, all from a single forward pass.
template <typename Scalar>
struct EncoderFeatures {
    std::array<Var<Scalar>, 4> layers;
    Var<Scalar> map;
};

/// Degradation encoder: four {3x3 stride-2 conv, LeakyReLU, 3x3 conv, LeakyReLU}
/// blocks followed by a 1x1 projection to `latent_channels`. The map has 1/16 of
/// the input resolution.
template <typename Scalar>
class DegradationEncoder {
public:
    DegradationEncoder(const EncoderConfig& config, Rng& rng);
    DegradationEncoder(const DegradationEncoder&) = delete;
    DegradationEncoder& operator=(const DegradationEncoder&) = delete;
    DegradationEncoder(DegradationEncoder&&) noexcept = default;
    DegradationEncoder& operator=(DegradationEncoder&&) noexcept = default;

    /// Throws DimensionError unless H and W are positive multiples of 16.
    EncoderFeatures<Scalar> encode_features(const Var<Scalar>& image) const;
    Var<Scalar> encode(const Var<Scalar>& image) const { return encode_features(image).map; }

    /// Excludes the parameters from optimisation. Gradients still reach inputs.
    void freeze();
    [[nodiscard]] bool frozen() const { return frozen_; }

    [[nodiscard]] ParamList<Scalar> parameters(const std::string& prefix = "E") const;
    [[nodiscard]] const EncoderConfig& config() const { return config_; }

private:
    EncoderConfig config_;
    std::array<Conv2d<Scalar>, 4> down_;
    std::array<Conv2d<Scalar>, 4> refine_;
    Conv2d<Scalar> head_;
    bool frozen_ = false;
};

extern template class DegradationEncoder<float>;
extern template class DegradationEncoder<double>;

}  // namespace drl
