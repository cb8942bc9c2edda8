#pragma once

#include <cstdint>

#include "drl/image.hpp"

namespace drl {

struct MSDINetConfig;
struct EncoderConfig;

inline constexpr double kPsnrCapDb = 100.0;
inline constexpr double kMseFloor = 1e-10;

/// 10 log10(1 / MSE) for unit peak, with MSE floored at 1e-10 (cap 100 dB).
double psnr(const Image& a, const Image& b);

struct SsimParams {
    int window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double dynamic_range = 1.0;
};

/// Mean SSIM over all fully contained Gaussian windows and channels.
double ssim(const Image& a, const Image& b, const SsimParams& params = {});

/// Variance of the 4-neighbour Laplacian of luma (0.299 R + 0.587 G + 0.114 B)
/// over interior pixels.
double sharpness(const Image& image);

/// Luma plane of an RGB image (identity for single-channel images).
Image::RowMatrix luminance(const Image& image);

struct MetricReport {
    double psnr_db = 0.0;
    double ssim = 0.0;
    double cx = 0.0;
};

MetricReport compare(const Image& a, const Image& b);

/// Analytic multiply-accumulate count of deblurring inference (degradation
/// encoder plus both stacked MSDI-Nets including injection branches) for one
/// image: the sum over convolutions of out_c * out_h * out_w * in_c * k * k.
std::int64_t count_macs(const MSDINetConfig& net, const EncoderConfig& encoder, int input_h, int input_w);

}  // namespace drl
