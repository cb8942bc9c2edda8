#include "drl/encoder.hpp"

namespace drl {

template <typename Scalar>
DegradationEncoder<Scalar>::DegradationEncoder(const EncoderConfig& config, Rng& rng) : config_(config) {
    config.validate();
    int in = config.in_channels;
    for (int i = 0; i < 4; ++i) {
        down_[i] = Conv2d<Scalar>(in, config.widths[i], 3, 2, rng);
        refine_[i] = Conv2d<Scalar>(config.widths[i], config.widths[i], 3, 1, rng);
        in = config.widths[i];
    }
    head_ = Conv2d<Scalar>(in, config.latent_channels, 1, 1, rng);
}

template <typename Scalar>
EncoderFeatures<Scalar> DegradationEncoder<Scalar>::encode_features(const Var<Scalar>& image) const {
    const Shape& s = image.shape();
    if (s.h <= 0 || s.w <= 0 || s.h % 16 != 0 || s.w % 16 != 0) {
        throw DimensionError("degradation encoder input must have sides divisible by 16, got " + s.str());
    }
    if (s.c != config_.in_channels) throw DimensionError("degradation encoder: wrong channel count " + s.str());
    EncoderFeatures<Scalar> out;
    Var<Scalar> h = image;
    for (int i = 0; i < 4; ++i) {
        h = lrelu(down_[i](h));
        h = lrelu(refine_[i](h));
        out.layers[i] = h;
    }
    out.map = head_(h);
    return out;
}

template <typename Scalar>
void DegradationEncoder<Scalar>::freeze() {
    set_requires_grad(parameters(), false);
    frozen_ = true;
}

template <typename Scalar>
ParamList<Scalar> DegradationEncoder<Scalar>::parameters(const std::string& prefix) const {
    ParamList<Scalar> out;
    for (int i = 0; i < 4; ++i) {
        down_[i].collect(prefix + ".block" + std::to_string(i) + ".down", out);
        refine_[i].collect(prefix + ".block" + std::to_string(i) + ".refine", out);
    }
    head_.collect(prefix + ".head", out);
    return out;
}

template class DegradationEncoder<float>;
template class DegradationEncoder<double>;

}  // namespace drl
