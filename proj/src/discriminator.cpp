#include "drl/discriminator.hpp"

namespace drl {

namespace {
constexpr int kStrides[4] = {2, 2, 2, 1};
}

template <typename Scalar>
MultiScaleDiscriminator<Scalar>::MultiScaleDiscriminator(const DiscriminatorConfig& config, Rng& rng,
                                                         int image_channels)
    : config_(config) {
    config.validate();
    const int b = config.base_channels;
    const int widths[4] = {b, 2 * b, 4 * b, 1};
    for (int k = 0; k < config.scales; ++k) {
        Body body;
        int in = 2 * image_channels;
        for (int i = 0; i < 4; ++i) {
            body.convs.emplace_back(in, widths[i], 3, kStrides[i], rng);
            in = widths[i];
        }
        bodies_.push_back(std::move(body));
    }
}

template <typename Scalar>
DiscriminatorOutputs<Scalar> MultiScaleDiscriminator<Scalar>::operator()(const Var<Scalar>& x,
                                                                         const Var<Scalar>& candidate) const {
    if (!(x.shape() == candidate.shape())) {
        throw DimensionError("discriminator: condition " + x.shape().str() + " vs candidate " +
                             candidate.shape().str());
    }
    DiscriminatorOutputs<Scalar> out;
    Var<Scalar> h0 = concat_channels<Scalar>({x, candidate});
    for (std::size_t k = 0; k < bodies_.size(); ++k) {
        if (k > 0) h0 = avg_pool2x(h0);
        Var<Scalar> h = h0;
        const auto& convs = bodies_[k].convs;
        for (std::size_t i = 0; i < convs.size(); ++i) {
            h = convs[i](h);
            if (i + 1 < convs.size()) h = lrelu(h);
        }
        out.scores.push_back(h);
    }
    return out;
}

template <typename Scalar>
ParamList<Scalar> MultiScaleDiscriminator<Scalar>::parameters(const std::string& prefix) const {
    ParamList<Scalar> out;
    for (std::size_t k = 0; k < bodies_.size(); ++k) {
        for (std::size_t i = 0; i < bodies_[k].convs.size(); ++i) {
            bodies_[k].convs[i].collect(prefix + ".scale" + std::to_string(k) + ".conv" + std::to_string(i), out);
        }
    }
    return out;
}

template <typename Scalar>
Var<Scalar> hinge_d_loss(const DiscriminatorOutputs<Scalar>& real, const DiscriminatorOutputs<Scalar>& fake) {
    if (real.scores.size() != fake.scores.size() || real.scores.empty()) {
        throw DimensionError("hinge_d_loss: real and fake have different scale counts");
    }
    Var<Scalar> total;
    for (std::size_t k = 0; k < real.scores.size(); ++k) {
        const Var<Scalar> term = add(hinge_mean(real.scores[k], Scalar(-1)), hinge_mean(fake.scores[k], Scalar(1)));
        total = total.defined() ? add(total, term) : term;
    }
    return scale(total, Scalar(1) / static_cast<Scalar>(real.scores.size()));
}

template <typename Scalar>
Var<Scalar> hinge_g_loss(const DiscriminatorOutputs<Scalar>& fake) {
    if (fake.scores.empty()) throw DimensionError("hinge_g_loss: no scores");
    Var<Scalar> total;
    for (const auto& s : fake.scores) total = total.defined() ? add(total, mean(s)) : mean(s);
    return scale(total, Scalar(-1) / static_cast<Scalar>(fake.scores.size()));
}

template class MultiScaleDiscriminator<float>;
template class MultiScaleDiscriminator<double>;
template Var<float> hinge_d_loss(const DiscriminatorOutputs<float>&, const DiscriminatorOutputs<float>&);
template Var<double> hinge_d_loss(const DiscriminatorOutputs<double>&, const DiscriminatorOutputs<double>&);
template Var<float> hinge_g_loss(const DiscriminatorOutputs<float>&);
template Var<double> hinge_g_loss(const DiscriminatorOutputs<double>&);

}  // namespace drl
