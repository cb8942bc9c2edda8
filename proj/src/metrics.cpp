#include "drl/metrics.hpp"

#include <cmath>
#include <numbers>
#include <vector>

#include "drl/errors.hpp"

namespace drl {

namespace {

void require_same(const Image& a, const Image& b, const char* what) {
    if (!a.same_shape(b)) {
        throw DimensionError(std::string(what) + ": image shapes differ (" + std::to_string(a.channels()) + "x" +
                             std::to_string(a.height()) + "x" + std::to_string(a.width()) + " vs " +
                             std::to_string(b.channels()) + "x" + std::to_string(b.height()) + "x" +
                             std::to_string(b.width()) + ")");
    }
}

Eigen::VectorXd gaussian_window(int size, double sigma) {
    Eigen::VectorXd g(size);
    const double center = (size - 1) / 2.0;
    for (int i = 0; i < size; ++i) g[i] = std::exp(-((i - center) * (i - center)) / (2.0 * sigma * sigma));
    return g / g.sum();
}

// Separable "valid" filtering: result is (H - k + 1) x (W - k + 1).
Image::RowMatrix filter_valid(const Image::RowMatrix& in, const Eigen::VectorXd& g) {
    const auto k = static_cast<int>(g.size());
    const auto oh = static_cast<int>(in.rows()) - k + 1;
    const auto ow = static_cast<int>(in.cols()) - k + 1;
    Image::RowMatrix horiz(in.rows(), ow);
    for (int x = 0; x < ow; ++x) horiz.col(x) = in.middleCols(x, k) * g;
    Image::RowMatrix out(oh, ow);
    for (int y = 0; y < oh; ++y) out.row(y) = g.transpose() * horiz.middleRows(y, k);
    return out;
}

}  // namespace

double psnr(const Image& a, const Image& b) {
    require_same(a, b, "psnr");
    const double mse = (a.data() - b.data()).square().mean();
    return 10.0 * std::log10(1.0 / std::max(mse, kMseFloor));
}

double ssim(const Image& a, const Image& b, const SsimParams& params) {
    require_same(a, b, "ssim");
    if (a.height() < params.window || a.width() < params.window) {
        throw DimensionError("ssim: image smaller than the " + std::to_string(params.window) + "px window");
    }
    const Eigen::VectorXd g = gaussian_window(params.window, params.sigma);
    const double c1 = std::pow(params.k1 * params.dynamic_range, 2);
    const double c2 = std::pow(params.k2 * params.dynamic_range, 2);
    double total = 0.0;
    std::ptrdiff_t count = 0;
    for (int c = 0; c < a.channels(); ++c) {
        const Image::RowMatrix pa = a.plane(c);
        const Image::RowMatrix pb = b.plane(c);
        const Eigen::ArrayXXd mu_a = filter_valid(pa, g).array();
        const Eigen::ArrayXXd mu_b = filter_valid(pb, g).array();
        const Image::RowMatrix aa = pa.array().square().matrix();
        const Image::RowMatrix bb = pb.array().square().matrix();
        const Image::RowMatrix ab = (pa.array() * pb.array()).matrix();
        const Eigen::ArrayXXd var_a = filter_valid(aa, g).array() - mu_a.square();
        const Eigen::ArrayXXd var_b = filter_valid(bb, g).array() - mu_b.square();
        const Eigen::ArrayXXd cov = filter_valid(ab, g).array() - mu_a * mu_b;
        const Eigen::ArrayXXd map = ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)) /
                                    ((mu_a.square() + mu_b.square() + c1) * (var_a + var_b + c2));
        total += map.sum();
        count += map.size();
    }
    return total / static_cast<double>(count);
}

Image::RowMatrix luminance(const Image& image) {
    if (image.channels() == 1) return image.plane(0);
    if (image.channels() != 3) throw DimensionError("luminance expects 1 or 3 channels");
    return 0.299 * image.plane(0) + 0.587 * image.plane(1) + 0.114 * image.plane(2);
}

double sharpness(const Image& image) {
    const Image::RowMatrix l = luminance(image);
    const auto h = static_cast<int>(l.rows());
    const auto w = static_cast<int>(l.cols());
    if (h < 3 || w < 3) return 0.0;
    const Eigen::ArrayXXd lap = l.block(0, 1, h - 2, w - 2).array() + l.block(2, 1, h - 2, w - 2).array() +
                                l.block(1, 0, h - 2, w - 2).array() + l.block(1, 2, h - 2, w - 2).array() -
                                4.0 * l.block(1, 1, h - 2, w - 2).array();
    const double mean = lap.mean();
    return (lap - mean).square().mean();
}

}  // namespace drl
