#pragma once

#include <vector>

#include "drl/blur_synth.hpp"
#include "drl/training.hpp"

namespace drl {

/// (1 - alpha) * deg_sharp + alpha * deg_blurry, elementwise.
Tensor<float> interpolate_map(const Tensor<float>& deg_sharp, const Tensor<float>& deg_blurry, double alpha);

/// Reblurs x under deg_alpha = (1 - alpha) E(x) + alpha E(y) for every alpha.
/// Outputs are clamped to [0, 1]; alpha = 1 is the plain reblurring path.
std::vector<Image> interpolate_degradations(const Image& x, const Image& y, const DegradationEncoder<float>& encoder,
                                            const Generator<float>& g_r, const std::vector<double>& alphas);

/// ReBlur(A, deg_B) = A + G_r(A, E(blur(B))).
Image swap_reblur(const Image& a_sharp, const Image& b_blurry, const DegradationEncoder<float>& encoder,
                  const Generator<float>& g_r);

struct DecouplePair {
    std::string a_id, b_id;
    double blur_a_vs_a = 0.0;   // CX(blur(A), A)
    double reblur_vs_a = 0.0;   // CX(ReBlur(A, deg_B), A)
    double blur_a_vs_b = 0.0;   // CX(blur(A), B)
    double reblur_vs_b = 0.0;   // CX(ReBlur(A, deg_B), B)
};

struct DecouplenessReport {
    int pairs = 0;
    double blur_a_vs_a = 0.0;
    double reblur_vs_a = 0.0;
    double blur_a_vs_b = 0.0;
    double reblur_vs_b = 0.0;
    // Share of pairings with CX(ReBlur, A) < CX(ReBlur, B).
    double ordered_fraction = 0.0;
    std::vector<DecouplePair> details;

    [[nodiscard]] nlohmann::json to_json() const;
};

/// Splits the test set into consecutive pairings (A, B) = (2k, 2k + 1) and
/// averages the four CX statistics over them. Throws ConfigError on an odd count.
DecouplenessReport decoupleness_report(const std::vector<ImagePair>& test_pairs,
                                       const DegradationEncoder<float>& encoder, const Generator<float>& g_r);

/// Indices of the blurriest and sharpest floor(fraction * N) pairs, ranked by
/// PSNR(blurry, sharp) ascending.
struct PercentileSplit {
    std::vector<std::size_t> blurriest;
    std::vector<std::size_t> sharpest;
};

PercentileSplit percentile_split(const std::vector<ImagePair>& pairs, double fraction);

struct SplitReport {
    double fraction = 0.0;
    int n = 0;
    int subset_size = 0;
    double psnr = 0.0;  // mean over all pairs
    double ssim = 0.0;
    double blurriest_psnr = 0.0;
    double sharpest_psnr = 0.0;
    double blurriest_input_psnr = 0.0;
    double sharpest_input_psnr = 0.0;

    [[nodiscard]] nlohmann::json to_json() const;
};

/// Table-style evaluation of `outputs[i]` against `pairs[i].sharp`.
SplitReport evaluate_outputs(const std::vector<ImagePair>& pairs, const std::vector<Image>& outputs, double fraction);

/// Number of sign changes in the discrete derivative of `values`, ignoring
/// exactly flat steps.
int derivative_sign_changes(const std::vector<double>& values);

}  // namespace drl
