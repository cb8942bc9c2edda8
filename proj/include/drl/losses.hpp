#pragma once

#include <array>
#include <optional>
#include <vector>

#include "drl/config.hpp"
#include "drl/discriminator.hpp"
#include "drl/encoder.hpp"
#include "drl/msdi_net.hpp"

namespace drl {

/// Frozen conv pyramid (3x3 conv + LeakyReLU per stage, strides 1,2,2,2,2) with
/// seeded random weights, standing in for a pre-trained perceptual network.
/// Float and double instances built from the same config hold the same weights
/// up to rounding.
template <typename Scalar>
class FeatureExtractor {
public:
    static constexpr int kStages = 5;

    explicit FeatureExtractor(const ExtractorConfig& config = {}, int in_channels = 3);

    std::array<Var<Scalar>, kStages> operator()(const Var<Scalar>& image) const;
    /// Runs the first `stages` stages only.
    std::vector<Var<Scalar>> features(const Var<Scalar>& image, int stages) const;

    [[nodiscard]] ParamList<Scalar> parameters(const std::string& prefix = "extractor") const;

private:
    std::array<Conv2d<Scalar>, kStages> convs_;
};

template <typename Scalar>
Var<Scalar> l1_loss(const Var<Scalar>& a, const Var<Scalar>& b) {
    return l1_mean(a, b);
}

/// Sum over extractor stages of mean |phi_s(a) - phi_s(b)|.
template <typename Scalar>
Var<Scalar> perceptual_loss(const Var<Scalar>& a, const Var<Scalar>& b, const FeatureExtractor<Scalar>& extractor);

/// -PSNR(x, x') with the 1e-10 MSE floor.
template <typename Scalar>
Var<Scalar> psnr_loss(const Var<Scalar>& x, const Var<Scalar>& restored);

/// sum_i mean |E^(i)(x') - E^(i)(x)| over the four encoder layers. The target
/// activations are treated as constants.
template <typename Scalar>
Var<Scalar> blur_aware_loss(const DegradationEncoder<Scalar>& encoder, const Var<Scalar>& restored,
                            const Var<Scalar>& x);

/// psnr_loss(x, x') + lambda3 * blur_aware_loss(E, x', x)
template <typename Scalar>
Var<Scalar> stage2_objective(const Var<Scalar>& x, const Var<Scalar>& restored,
                             const DegradationEncoder<Scalar>& encoder, const LossWeights& weights);

template <typename Scalar>
struct Stage1Models {
    const DegradationEncoder<Scalar>* encoder = nullptr;
    const Generator<Scalar>* reblur = nullptr;  // null when the reblurring branch is ablated
    const Generator<Scalar>* deblur = nullptr;
    const MultiScaleDiscriminator<Scalar>* discriminator = nullptr;
    const FeatureExtractor<Scalar>* extractor = nullptr;
};

template <typename Scalar>
struct Stage1Losses {
    Var<Scalar> deg;
    GeneratorOutput<Scalar> reblurred;
    GeneratorOutput<Scalar> deblurred;
    Var<Scalar> adversarial;  // hinge_g term
    Var<Scalar> perceptual;   // sum over stacked outputs, unweighted
    Var<Scalar> g_total;      // adversarial + lambda1 * perceptual
    Var<Scalar> d_loss;
    Var<Scalar> deblur;       // lambda2 * sum over stacked outputs of L1

    /// The objective of the joint {E, G_r, G_d} update.
    Var<Scalar> generator_objective() const { return g_total.defined() ? add(g_total, deblur) : deblur; }
};

/// All stage-1 losses on one batch. Every stacked output is supervised. When
/// models.reblur is null the adversarial terms are left undefined.
template <typename Scalar>
Stage1Losses<Scalar> stage1_objective(const Var<Scalar>& x, const Var<Scalar>& y, const Stage1Models<Scalar>& models,
                                      const LossWeights& weights);

/// Dissimilarity of feature distributions (lower = more similar), computed on
/// L2-normalised stage-3 extractor features:
///   d_ij = 1 - cos(a_i, b_j), d~_ij = d_ij / (min_k d_ik + 1e-5),
///   w_ij = exp((1 - d~_ij) / 0.5), CX_ij = w_ij / sum_k w_ik,
///   CX(a, b) = -log(mean_j max_i CX_ij).
double contextual_similarity(const Image& a, const Image& b, const FeatureExtractor<double>& extractor);
double contextual_similarity(const Image& a, const Image& b);

/// The extractor used by metric helpers (default seed, no external weights).
const FeatureExtractor<double>& default_extractor();

#define DRL_EXTERN_LOSSES(S)                                                                                     \
    extern template class FeatureExtractor<S>;                                                                   \
    extern template Var<S> perceptual_loss(const Var<S>&, const Var<S>&, const FeatureExtractor<S>&);            \
    extern template Var<S> psnr_loss(const Var<S>&, const Var<S>&);                                              \
    extern template Var<S> blur_aware_loss(const DegradationEncoder<S>&, const Var<S>&, const Var<S>&);          \
    extern template Var<S> stage2_objective(const Var<S>&, const Var<S>&, const DegradationEncoder<S>&,          \
                                            const LossWeights&);                                                 \
    extern template Stage1Losses<S> stage1_objective(const Var<S>&, const Var<S>&, const Stage1Models<S>&,       \
                                                     const LossWeights&);

DRL_EXTERN_LOSSES(float)
DRL_EXTERN_LOSSES(double)
#undef DRL_EXTERN_LOSSES

}  // namespace drl
