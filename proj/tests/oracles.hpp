#pragma once

// Brute-force reference implementations shared by the unit tests and the
// acceptance run. Plain loops, no shared code with the library.

#include <algorithm>
#include <cmath>
#include <vector>

#include "drl/image.hpp"
#include "drl/losses.hpp"

namespace drl::oracle {

inline double oracle_psnr(const Image& a, const Image& b) {
    long double acc = 0.0L;
    for (int c = 0; c < a.channels(); ++c)
        for (int y = 0; y < a.height(); ++y)
            for (int x = 0; x < a.width(); ++x) {
                const long double d = a(c, y, x) - b(c, y, x);
                acc += d * d;
            }
    const double mse = static_cast<double>(acc / (static_cast<long double>(a.channels()) * a.height() * a.width()));
    return -10.0 * std::log10(std::max(mse, 1e-10));
}

// Per-window SSIM with an explicit 2-D Gaussian, variances as weighted second
// central moments.
inline double oracle_ssim(const Image& a, const Image& b) {
    const int win = 11;
    const double sigma = 1.5, c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    std::vector<double> w(win * win);
    double wsum = 0.0;
    for (int i = 0; i < win; ++i)
        for (int j = 0; j < win; ++j) {
            const double di = i - 5, dj = j - 5;
            w[i * win + j] = std::exp(-(di * di + dj * dj) / (2 * sigma * sigma));
            wsum += w[i * win + j];
        }
    for (auto& v : w) v /= wsum;
    double total = 0.0;
    int count = 0;
    for (int c = 0; c < a.channels(); ++c)
        for (int y0 = 0; y0 + win <= a.height(); ++y0)
            for (int x0 = 0; x0 + win <= a.width(); ++x0) {
                double ma = 0, mb = 0;
                for (int i = 0; i < win; ++i)
                    for (int j = 0; j < win; ++j) {
                        ma += w[i * win + j] * a(c, y0 + i, x0 + j);
                        mb += w[i * win + j] * b(c, y0 + i, x0 + j);
                    }
                double va = 0, vb = 0, cov = 0;
                for (int i = 0; i < win; ++i)
                    for (int j = 0; j < win; ++j) {
                        const double da = a(c, y0 + i, x0 + j) - ma;
                        const double db = b(c, y0 + i, x0 + j) - mb;
                        va += w[i * win + j] * da * da;
                        vb += w[i * win + j] * db * db;
                        cov += w[i * win + j] * da * db;
                    }
                total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                ++count;
            }
    return total / count;
}

inline double oracle_sharpness(const Image& img) {
    const int h = img.height(), w = img.width();
    auto luma = [&](int y, int x) { return 0.299 * img(0, y, x) + 0.587 * img(1, y, x) + 0.114 * img(2, y, x); };
    std::vector<double> lap;
    for (int y = 1; y + 1 < h; ++y)
        for (int x = 1; x + 1 < w; ++x)
            lap.push_back(luma(y - 1, x) + luma(y + 1, x) + luma(y, x - 1) + luma(y, x + 1) - 4 * luma(y, x));
    double mean = 0;
    for (double v : lap) mean += v;
    mean /= static_cast<double>(lap.size());
    double var = 0;
    for (double v : lap) var += (v - mean) * (v - mean);
    return var / static_cast<double>(lap.size());
}

// Contextual similarity from raw stage-3 activations with explicit loops.
inline double oracle_cx(const Image& a, const Image& b, const FeatureExtractor<double>& fx) {
    auto feats = [&](const Image& img) {
        const auto t = fx.features(Var<double>::constant(to_tensor<double>(img)), 3).back().value();
        const Shape s = t.shape();
        std::vector<std::vector<double>> v(s.h * s.w, std::vector<double>(s.c));
        for (int c = 0; c < s.c; ++c)
            for (int y = 0; y < s.h; ++y)
                for (int x = 0; x < s.w; ++x) v[y * s.w + x][c] = t(0, c, y, x);
        for (auto& row : v) {
            double n = 0;
            for (double e : row) n += e * e;
            n = std::sqrt(n);
            if (n > 0)
                for (double& e : row) e /= n;
        }
        return v;
    };
    const auto fa = feats(a), fb = feats(b);
    const std::size_t n = fa.size();
    std::vector<std::vector<double>> cx(n, std::vector<double>(n));
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> d(n);
        double dmin = 1e300;
        for (std::size_t j = 0; j < n; ++j) {
            double dot = 0;
            for (std::size_t c = 0; c < fa[i].size(); ++c) dot += fa[i][c] * fb[j][c];
            d[j] = std::max(0.0, 1.0 - dot);
            dmin = std::min(dmin, d[j]);
        }
        double z = 0;
        for (std::size_t j = 0; j < n; ++j) {
            cx[i][j] = std::exp((1.0 - d[j] / (dmin + 1e-5)) / 0.5);
            z += cx[i][j];
        }
        for (std::size_t j = 0; j < n; ++j) cx[i][j] /= z;
    }
    double acc = 0;
    for (std::size_t j = 0; j < n; ++j) {
        double m = 0;
        for (std::size_t i = 0; i < n; ++i) m = std::max(m, cx[i][j]);
        acc += m;
    }
    return -std::log(acc / static_cast<double>(n));
}

// Splat every trajectory sample into a discrete kernel with its bilinear
// weights, then correlate. Exact for pixels whose footprint stays inside.
struct LineKernel {
    int radius;
    std::vector<double> w;  // (2r+1)^2, row-major, offset (dy, dx)
    double& at(int dy, int dx) { return w[(dy + radius) * (2 * radius + 1) + dx + radius]; }
};

inline LineKernel line_kernel(double vx, double vy, int steps) {
    LineKernel k{static_cast<int>(std::ceil(std::hypot(vx, vy) / 2.0)) + 1, {}};
    k.w.assign((2 * k.radius + 1) * (2 * k.radius + 1), 0.0);
    for (int j = 0; j < steps; ++j) {
        const double t = steps == 1 ? 0.0 : -0.5 + static_cast<double>(j) / (steps - 1);
        const double oy = vy * t, ox = vx * t;
        const int y0 = static_cast<int>(std::floor(oy)), x0 = static_cast<int>(std::floor(ox));
        const double fy = oy - y0, fx = ox - x0;
        k.at(y0, x0) += (1 - fy) * (1 - fx) / steps;
        k.at(y0, x0 + 1) += (1 - fy) * fx / steps;
        k.at(y0 + 1, x0) += fy * (1 - fx) / steps;
        k.at(y0 + 1, x0 + 1) += fy * fx / steps;
    }
    return k;
}

inline double interior_kernel_error(const Image& sharp, const Image& blurry, LineKernel& k, int margin) {
    double err = 0.0;
    int n = 0;
    for (int c = 0; c < sharp.channels(); ++c)
        for (int y = margin; y < sharp.height() - margin; ++y)
            for (int x = margin; x < sharp.width() - margin; ++x) {
                double acc = 0.0;
                for (int dy = -k.radius; dy <= k.radius; ++dy)
                    for (int dx = -k.radius; dx <= k.radius; ++dx) acc += k.at(dy, dx) * sharp(c, y + dy, x + dx);
                err += std::abs(acc - blurry(c, y, x));
                ++n;
            }
    return err / n;
}


}  // namespace drl::oracle
