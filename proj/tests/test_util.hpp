#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <unistd.h>

#include "drl/autograd.hpp"
#include "drl/image.hpp"
#include "drl/nn.hpp"
#include "drl/random.hpp"

namespace drl::test {

template <typename Scalar = double>
Tensor<Scalar> random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor<Scalar> t(shape);
    for (std::ptrdiff_t i = 0; i < t.size(); ++i) t.data()[i] = static_cast<Scalar>(rng.uniform(lo, hi));
    return t;
}

inline Image random_image(int c, int h, int w, Rng& rng) {
    Image img(c, h, w);
    for (auto& v : img.data()) v = rng.uniform();
    return img;
}

/// Compares reverse-mode gradients of `f` with central differences at up to
/// `max_coords` sampled coordinates per leaf. Returns the norm-wise relative
/// error ||analytic - numeric|| / max(||analytic||, ||numeric||).
inline double gradient_error(const std::function<Var<double>()>& f, const std::vector<Var<double>>& leaves,
                             double eps = 1e-6, int max_coords = 40, std::uint64_t seed = 7) {
    for (auto leaf : leaves) leaf.zero_grad();
    backward(f());
    Rng rng(seed);
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (auto leaf : leaves) {
        const Tensor<double> grad = leaf.grad().empty() ? Tensor<double>(leaf.shape()) : leaf.grad();
        const auto size = leaf.value().size();
        std::vector<std::ptrdiff_t> coords;
        if (size <= max_coords) {
            for (std::ptrdiff_t i = 0; i < size; ++i) coords.push_back(i);
        } else {
            for (int k = 0; k < max_coords; ++k) coords.push_back(static_cast<std::ptrdiff_t>(rng.next_u64() % size));
        }
        for (auto i : coords) {
            double& v = leaf.mutable_value().data()[i];
            const double saved = v;
            double plus, minus;
            {
                NoGradGuard no_grad;
                v = saved + eps;
                plus = f().item();
                v = saved - eps;
                minus = f().item();
            }
            v = saved;
            const double numeric = (plus - minus) / (2.0 * eps);
            const double analytic = grad.data()[i];
            diff2 += (analytic - numeric) * (analytic - numeric);
            a2 += analytic * analytic;
            n2 += numeric * numeric;
        }
    }
    const double scale = std::max({std::sqrt(a2), std::sqrt(n2), 1e-300});
    return std::sqrt(diff2) / scale;
}

/// Leaves of every parameter in `params`, for gradient checks.
template <typename Scalar>
std::vector<Var<Scalar>> vars_of(const ParamList<Scalar>& params) {
    std::vector<Var<Scalar>> out;
    for (const auto& p : params) out.push_back(p.var);
    return out;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        Rng rng(std::hash<std::string>{}(tag) ^ static_cast<std::uint64_t>(::getpid()));
        path_ = std::filesystem::temp_directory_path() / ("drl_" + tag + "_" + std::to_string(rng.next_u64() % 1000000007));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    [[nodiscard]] const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

}  // namespace drl::test
