#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "drl/checkpoint.hpp"
#include "drl/nn.hpp"

namespace drl {

/// lr_min + (lr_max - lr_min) (1 + cos(pi step / total)) / 2 for 0 <= step <= total.
inline double cosine_lr(int step, int total_iters, double lr_max, double lr_min) {
    if (total_iters < 1 || step < 0 || step > total_iters) {
        throw std::out_of_range("cosine_lr: step " + std::to_string(step) + " outside [0, " +
                                std::to_string(total_iters) + "]");
    }
    const double t = static_cast<double>(step) / total_iters;
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(std::numbers::pi * t));
}

struct AdamParams {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adam over a fixed parameter list. Parameters that do not require a
/// gradient are skipped; a missing gradient counts as zero.
template <typename Scalar>
class Adam {
public:
    Adam(ParamList<Scalar> params, AdamParams hp = {}) : params_(std::move(params)), hp_(hp) {
        for (const auto& p : params_) {
            m_.emplace_back(p.var.shape());
            v_.emplace_back(p.var.shape());
        }
    }

    void zero_grad() {
        for (auto& p : params_) const_cast<Var<Scalar>&>(p.var).zero_grad();
    }

    void step(double lr) {
        ++t_;
        const double bc1 = 1.0 - std::pow(hp_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(hp_.beta2, static_cast<double>(t_));
        const auto b1 = static_cast<Scalar>(hp_.beta1);
        const auto b2 = static_cast<Scalar>(hp_.beta2);
        const auto step_size = static_cast<Scalar>(lr / bc1);
        const auto inv_sqrt_bc2 = static_cast<Scalar>(1.0 / std::sqrt(bc2));
        const auto eps = static_cast<Scalar>(hp_.eps);
        for (std::size_t i = 0; i < params_.size(); ++i) {
            auto& var = const_cast<Var<Scalar>&>(params_[i].var);
            if (!var.requires_grad()) continue;
            auto m = m_[i].array();
            auto v = v_[i].array();
            if (var.grad().empty()) {
                m *= b1;
                v *= b2;
            } else {
                const auto g = var.grad().array();
                m = b1 * m + (Scalar(1) - b1) * g;
                v = b2 * v + (Scalar(1) - b2) * g.square();
            }
            var.mutable_value().array() -= step_size * m / (v.sqrt() * inv_sqrt_bc2 + eps);
        }
    }

    [[nodiscard]] std::int64_t steps() const { return t_; }
    [[nodiscard]] const ParamList<Scalar>& parameters() const { return params_; }
    [[nodiscard]] std::int64_t trainable_count() const {
        std::int64_t n = 0;
        for (const auto& p : params_) n += p.var.requires_grad() ? p.var.value().size() : 0;
        return n;
    }

    /// Moments are stored as "<prefix>.m.<param>" and "<prefix>.v.<param>".
    void save(Checkpoint& ckpt, const std::string& prefix) const
        requires std::is_same_v<Scalar, float>
    {
        for (std::size_t i = 0; i < params_.size(); ++i) {
            ckpt.tensors[prefix + ".m." + params_[i].name] = m_[i];
            ckpt.tensors[prefix + ".v." + params_[i].name] = v_[i];
        }
        ckpt.header["optimizers"][prefix] = t_;
    }

    void load(const Checkpoint& ckpt, const std::string& prefix)
        requires std::is_same_v<Scalar, float>
    {
        for (std::size_t i = 0; i < params_.size(); ++i) {
            for (auto [key, dst] : {std::pair{".m.", &m_[i]}, std::pair{".v.", &v_[i]}}) {
                const auto it = ckpt.tensors.find(prefix + key + params_[i].name);
                if (it == ckpt.tensors.end() || !(it->second.shape() == dst->shape())) {
                    throw IntegrityError("checkpoint lacks optimizer state " + prefix + key + params_[i].name);
                }
                *dst = it->second;
            }
        }
        t_ = ckpt.header.at("optimizers").at(prefix).get<std::int64_t>();
    }

private:
    ParamList<Scalar> params_;
    AdamParams hp_;
    std::vector<Tensor<Scalar>> m_, v_;
    std::int64_t t_ = 0;
};

}  // namespace drl
