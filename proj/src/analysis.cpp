#include "drl/analysis.hpp"

#include <algorithm>
#include <numeric>

namespace drl {

Tensor<float> interpolate_map(const Tensor<float>& deg_sharp, const Tensor<float>& deg_blurry, double alpha) {
    require_same_shape(deg_sharp.shape(), deg_blurry.shape(), "interpolate_map");
    const auto a = static_cast<float>(alpha);
    Tensor<float> out(deg_sharp.shape());
    out.array() = (1.0f - a) * deg_sharp.array() + a * deg_blurry.array();
    return out;
}

std::vector<Image> interpolate_degradations(const Image& x, const Image& y, const DegradationEncoder<float>& encoder,
                                            const Generator<float>& g_r, const std::vector<double>& alphas) {
    if (!x.same_shape(y)) throw DimensionError("interpolate_degradations: x and y differ in shape");
    const Tensor<float> deg_x = degradation_of(encoder, x);
    const Tensor<float> deg_y = degradation_of(encoder, y);
    std::vector<Image> out;
    out.reserve(alphas.size());
    for (double alpha : alphas) out.push_back(reblur_with(g_r, x, interpolate_map(deg_x, deg_y, alpha)));
    return out;
}

Image swap_reblur(const Image& a_sharp, const Image& b_blurry, const DegradationEncoder<float>& encoder,
                  const Generator<float>& g_r) {
    if (!a_sharp.same_shape(b_blurry)) throw DimensionError("swap_reblur: A and B differ in size");
    return reblur_with(g_r, a_sharp, degradation_of(encoder, b_blurry));
}

nlohmann::json DecouplenessReport::to_json() const {
    return {{"pairs", pairs},
            {"cx_blurA_A", blur_a_vs_a},
            {"cx_reblurA_degB_A", reblur_vs_a},
            {"cx_blurA_B", blur_a_vs_b},
            {"cx_reblurA_degB_B", reblur_vs_b},
            {"ordered_fraction", ordered_fraction}};
}

DecouplenessReport decoupleness_report(const std::vector<ImagePair>& test_pairs,
                                       const DegradationEncoder<float>& encoder, const Generator<float>& g_r) {
    if (test_pairs.size() % 2 != 0 || test_pairs.empty()) {
        throw ConfigError("data", "decoupleness needs a non-zero even number of test pairs");
    }
    DecouplenessReport r;
    int ordered = 0;
    for (std::size_t k = 0; k + 1 < test_pairs.size(); k += 2) {
        const ImagePair& a = test_pairs[k];
        const ImagePair& b = test_pairs[k + 1];
        const Image swapped = swap_reblur(a.sharp, b.blurry, encoder, g_r);
        DecouplePair d;
        d.a_id = a.id;
        d.b_id = b.id;
        d.blur_a_vs_a = contextual_similarity(a.blurry, a.sharp);
        d.reblur_vs_a = contextual_similarity(swapped, a.sharp);
        d.blur_a_vs_b = contextual_similarity(a.blurry, b.sharp);
        d.reblur_vs_b = contextual_similarity(swapped, b.sharp);
        r.blur_a_vs_a += d.blur_a_vs_a;
        r.reblur_vs_a += d.reblur_vs_a;
        r.blur_a_vs_b += d.blur_a_vs_b;
        r.reblur_vs_b += d.reblur_vs_b;
        ordered += d.reblur_vs_a < d.reblur_vs_b ? 1 : 0;
        r.details.push_back(std::move(d));
    }
    r.pairs = static_cast<int>(r.details.size());
    const double n = r.pairs;
    r.blur_a_vs_a /= n;
    r.reblur_vs_a /= n;
    r.blur_a_vs_b /= n;
    r.reblur_vs_b /= n;
    r.ordered_fraction = ordered / n;
    return r;
}

PercentileSplit percentile_split(const std::vector<ImagePair>& pairs, double fraction) {
    if (!(fraction > 0.0 && fraction <= 0.5)) throw ConfigError("fraction", "must lie in (0, 0.5]");
    const auto k = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(pairs.size())));
    if (k == 0) throw ConfigError("fraction", "too few pairs for a non-empty split");
    std::vector<double> input_psnr(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) input_psnr[i] = psnr(pairs[i].blurry, pairs[i].sharp);
    std::vector<std::size_t> order(pairs.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return input_psnr[a] < input_psnr[b]; });
    PercentileSplit s;
    s.blurriest.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
    s.sharpest.assign(order.end() - static_cast<std::ptrdiff_t>(k), order.end());
    return s;
}

nlohmann::json SplitReport::to_json() const {
    return {{"n", n},
            {"psnr", psnr},
            {"ssim", ssim},
            {"fraction", fraction},
            {"subset_size", subset_size},
            {"blurriest_psnr", blurriest_psnr},
            {"sharpest_psnr", sharpest_psnr},
            {"blurriest_input_psnr", blurriest_input_psnr},
            {"sharpest_input_psnr", sharpest_input_psnr},
            {"ranking", "psnr(blurry, sharp) ascending"}};
}

SplitReport evaluate_outputs(const std::vector<ImagePair>& pairs, const std::vector<Image>& outputs, double fraction) {
    if (pairs.size() != outputs.size()) throw DimensionError("evaluate_outputs: one output per pair expected");
    SplitReport r;
    r.fraction = fraction;
    r.n = static_cast<int>(pairs.size());
    std::vector<double> out_psnr(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        out_psnr[i] = psnr(outputs[i], pairs[i].sharp);
        r.psnr += out_psnr[i];
        r.ssim += ssim(outputs[i], pairs[i].sharp);
    }
    r.psnr /= r.n;
    r.ssim /= r.n;
    const PercentileSplit split = percentile_split(pairs, fraction);
    r.subset_size = static_cast<int>(split.blurriest.size());
    for (std::size_t i : split.blurriest) {
        r.blurriest_psnr += out_psnr[i];
        r.blurriest_input_psnr += psnr(pairs[i].blurry, pairs[i].sharp);
    }
    for (std::size_t i : split.sharpest) {
        r.sharpest_psnr += out_psnr[i];
        r.sharpest_input_psnr += psnr(pairs[i].blurry, pairs[i].sharp);
    }
    r.blurriest_psnr /= r.subset_size;
    r.sharpest_psnr /= r.subset_size;
    r.blurriest_input_psnr /= r.subset_size;
    r.sharpest_input_psnr /= r.subset_size;
    return r;
}

int derivative_sign_changes(const std::vector<double>& values) {
    int changes = 0;
    int last = 0;
    for (std::size_t i = 1; i < values.size(); ++i) {
        const double d = values[i] - values[i - 1];
        const int sign = d > 0.0 ? 1 : (d < 0.0 ? -1 : 0);
        if (sign == 0) continue;
        if (last != 0 && sign != last) ++changes;
        last = sign;
    }
    return changes;
}

}  // namespace drl
