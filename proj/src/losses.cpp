#include "drl/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "drl/checkpoint.hpp"
#include "drl/metrics.hpp"

namespace drl {

namespace {
constexpr int kExtractorStrides[5] = {1, 2, 2, 2, 2};
constexpr int kContextualStage = 3;  // 1-based
constexpr double kContextualEps = 1e-5;
constexpr double kContextualBandwidth = 0.5;
}  // namespace

template <typename Scalar>
FeatureExtractor<Scalar>::FeatureExtractor(const ExtractorConfig& config, int in_channels) {
    Rng rng(config.seed);
    int in = in_channels;
    for (int s = 0; s < kStages; ++s) {
        convs_[s] = Conv2d<Scalar>(in, config.widths[s], 3, kExtractorStrides[s], rng);
        in = config.widths[s];
    }
    if (!config.weights_path.empty()) {
        const Checkpoint ckpt = load_checkpoint(config.weights_path);
        for (auto& p : parameters()) {
            const auto it = ckpt.tensors.find(p.name);
            if (it == ckpt.tensors.end()) throw IoError("extractor weights: missing tensor " + p.name);
            if (!(it->second.shape() == p.var.shape())) {
                throw DimensionError("extractor weights: " + p.name + " has shape " + it->second.shape().str());
            }
            const_cast<Var<Scalar>&>(p.var).mutable_value() = it->second.template cast<Scalar>();
        }
    }
    set_requires_grad(parameters(), false);
}

template <typename Scalar>
std::vector<Var<Scalar>> FeatureExtractor<Scalar>::features(const Var<Scalar>& image, int stages) const {
    std::vector<Var<Scalar>> out;
    Var<Scalar> h = image;
    for (int s = 0; s < std::min(stages, kStages); ++s) {
        h = lrelu(convs_[s](h));
        out.push_back(h);
    }
    return out;
}

template <typename Scalar>
std::array<Var<Scalar>, FeatureExtractor<Scalar>::kStages> FeatureExtractor<Scalar>::operator()(
    const Var<Scalar>& image) const {
    const auto f = features(image, kStages);
    std::array<Var<Scalar>, kStages> out;
    std::copy(f.begin(), f.end(), out.begin());
    return out;
}

template <typename Scalar>
ParamList<Scalar> FeatureExtractor<Scalar>::parameters(const std::string& prefix) const {
    ParamList<Scalar> out;
    for (int s = 0; s < kStages; ++s) convs_[s].collect(prefix + ".stage" + std::to_string(s), out);
    return out;
}

template <typename Scalar>
Var<Scalar> perceptual_loss(const Var<Scalar>& a, const Var<Scalar>& b, const FeatureExtractor<Scalar>& extractor) {
    require_same_shape(a.shape(), b.shape(), "perceptual_loss");
    const auto fa = extractor(a);
    const auto fb = extractor(b);
    Var<Scalar> total = l1_mean(fa[0], fb[0]);
    for (std::size_t s = 1; s < fa.size(); ++s) total = add(total, l1_mean(fa[s], fb[s]));
    return total;
}

template <typename Scalar>
Var<Scalar> psnr_loss(const Var<Scalar>& x, const Var<Scalar>& restored) {
    return neg_psnr(restored, x, kMseFloor);
}

template <typename Scalar>
Var<Scalar> blur_aware_loss(const DegradationEncoder<Scalar>& encoder, const Var<Scalar>& restored,
                            const Var<Scalar>& x) {
    require_same_shape(restored.shape(), x.shape(), "blur_aware_loss");
    EncoderFeatures<Scalar> target;
    {
        NoGradGuard no_grad;
        target = encoder.encode_features(x);
    }
    const EncoderFeatures<Scalar> pred = encoder.encode_features(restored);
    Var<Scalar> total;
    for (std::size_t i = 0; i < pred.layers.size(); ++i) {
        const Var<Scalar> term = l1_mean(pred.layers[i], target.layers[i].detach());
        total = total.defined() ? add(total, term) : term;
    }
    return total;
}

template <typename Scalar>
Var<Scalar> stage2_objective(const Var<Scalar>& x, const Var<Scalar>& restored,
                             const DegradationEncoder<Scalar>& encoder, const LossWeights& weights) {
    Var<Scalar> loss = psnr_loss(x, restored);
    if (weights.lambda3 != 0.0) {
        loss = add(loss, scale(blur_aware_loss(encoder, restored, x), static_cast<Scalar>(weights.lambda3)));
    }
    return loss;
}

template <typename Scalar>
Stage1Losses<Scalar> stage1_objective(const Var<Scalar>& x, const Var<Scalar>& y, const Stage1Models<Scalar>& models,
                                      const LossWeights& weights) {
    require_same_shape(x.shape(), y.shape(), "stage1_objective");
    Stage1Losses<Scalar> out;
    out.deg = models.encoder->encode(y);

    out.deblurred = deblur(*models.deblur, y, out.deg);
    for (const auto& stage : out.deblurred.stages) {
        const Var<Scalar> term = l1_loss(x, stage);
        out.deblur = out.deblur.defined() ? add(out.deblur, term) : term;
    }
    out.deblur = scale(out.deblur, static_cast<Scalar>(weights.lambda2));

    if (models.reblur == nullptr) return out;

    out.reblurred = reblur(*models.reblur, x, out.deg);
    for (const auto& stage : out.reblurred.stages) {
        const Var<Scalar> term = perceptual_loss(y, stage, *models.extractor);
        out.perceptual = out.perceptual.defined() ? add(out.perceptual, term) : term;
    }
    const auto& d = *models.discriminator;
    out.adversarial = hinge_g_loss(d(x, out.reblurred.final()));
    out.g_total = add(out.adversarial, scale(out.perceptual, static_cast<Scalar>(weights.lambda1)));
    out.d_loss = hinge_d_loss(d(x, y), d(x, out.reblurred.final().detach()));
    return out;
}

#define DRL_INSTANTIATE_LOSSES(S)                                                                         \
    template class FeatureExtractor<S>;                                                                   \
    template Var<S> perceptual_loss(const Var<S>&, const Var<S>&, const FeatureExtractor<S>&);            \
    template Var<S> psnr_loss(const Var<S>&, const Var<S>&);                                              \
    template Var<S> blur_aware_loss(const DegradationEncoder<S>&, const Var<S>&, const Var<S>&);          \
    template Var<S> stage2_objective(const Var<S>&, const Var<S>&, const DegradationEncoder<S>&,          \
                                     const LossWeights&);                                                 \
    template Stage1Losses<S> stage1_objective(const Var<S>&, const Var<S>&, const Stage1Models<S>&,       \
                                              const LossWeights&);

DRL_INSTANTIATE_LOSSES(float)
DRL_INSTANTIATE_LOSSES(double)
#undef DRL_INSTANTIATE_LOSSES

const FeatureExtractor<double>& default_extractor() {
    static const FeatureExtractor<double> extractor{ExtractorConfig{}};
    return extractor;
}

namespace {

// Rows are spatial positions, columns channels; each row L2-normalised.
Eigen::MatrixXd contextual_features(const Image& image, const FeatureExtractor<double>& extractor) {
    NoGradGuard no_grad;
    const auto input = Var<double>::constant(to_tensor<double>(image));
    const auto f = extractor.features(input, kContextualStage).back().value();
    const Shape& s = f.shape();
    const int n = s.h * s.w;
    Eigen::MatrixXd out(n, s.c);
    for (int c = 0; c < s.c; ++c) {
        for (int p = 0; p < n; ++p) out(p, c) = f.data()[static_cast<std::ptrdiff_t>(c) * n + p];
    }
    for (int p = 0; p < n; ++p) {
        const double norm = out.row(p).norm();
        if (norm > 0.0) out.row(p) /= norm;
    }
    return out;
}

}  // namespace

double contextual_similarity(const Image& a, const Image& b, const FeatureExtractor<double>& extractor) {
    if (!a.same_shape(b)) throw DimensionError("contextual_similarity: image shapes differ");
    const Eigen::MatrixXd fa = contextual_features(a, extractor);
    const Eigen::MatrixXd fb = contextual_features(b, extractor);
    const Eigen::MatrixXd d = (1.0 - (fa * fb.transpose()).array()).cwiseMax(0.0).matrix();

    const Eigen::VectorXd row_min = d.rowwise().minCoeff();
    Eigen::ArrayXXd w(d.rows(), d.cols());
    for (Eigen::Index i = 0; i < d.rows(); ++i) {
        const Eigen::ArrayXd normalized = d.row(i).array().transpose() / (row_min(i) + kContextualEps);
        // Shift by the row maximum exponent before exponentiating; cancels in the softmax.
        const Eigen::ArrayXd logits = (1.0 - normalized) / kContextualBandwidth;
        const Eigen::ArrayXd e = (logits - logits.maxCoeff()).exp();
        w.row(i) = (e / e.sum()).transpose();
    }
    const double m = w.colwise().maxCoeff().mean();
    return -std::log(m);
}

double contextual_similarity(const Image& a, const Image& b) {
    return contextual_similarity(a, b, default_extractor());
}

MetricReport compare(const Image& a, const Image& b) {
    return {psnr(a, b), ssim(a, b), contextual_similarity(a, b)};
}

}  // namespace drl
