#pragma once

#include <cstdint>
#include <vector>

#include "drl/autograd.hpp"

namespace drl {

/// Counts multiply-accumulates issued by conv2d on this thread while alive.
/// In dry-run mode convolutions only produce correctly shaped zero outputs.
class MacCounter {
public:
    explicit MacCounter(bool dry_run = false);
    ~MacCounter();
    MacCounter(const MacCounter&) = delete;
    MacCounter& operator=(const MacCounter&) = delete;

    [[nodiscard]] std::int64_t macs() const;

private:
    MacCounter* previous_;
    bool dry_run_;
    std::int64_t macs_ = 0;

    friend void record_conv_macs(std::int64_t macs);
    friend bool conv_dry_run();
};

void record_conv_macs(std::int64_t macs);
bool conv_dry_run();

/// 2-D cross-correlation. `weight` is shaped {out_c, in_c, k, k}; `bias` may be
/// undefined or shaped {1, out_c, 1, 1}. Zero padding.
template <typename Scalar>
Var<Scalar> conv2d(const Var<Scalar>& x, const Var<Scalar>& weight, const Var<Scalar>& bias, int stride,
                   int pad);

template <typename Scalar>
Var<Scalar> leaky_relu(const Var<Scalar>& x, Scalar slope);

template <typename Scalar>
Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b);

template <typename Scalar>
Var<Scalar> sub(const Var<Scalar>& a, const Var<Scalar>& b);

template <typename Scalar>
Var<Scalar> mul(const Var<Scalar>& a, const Var<Scalar>& b);

template <typename Scalar>
Var<Scalar> scale(const Var<Scalar>& a, Scalar factor);

/// Channel-wise concatenation of tensors with equal n, h, w.
template <typename Scalar>
Var<Scalar> concat_channels(const std::vector<Var<Scalar>>& parts);

template <typename Scalar>
Var<Scalar> upsample_nearest2x(const Var<Scalar>& x);

/// 2x2 average pooling, stride 2. Requires even spatial dims.
template <typename Scalar>
Var<Scalar> avg_pool2x(const Var<Scalar>& x);

template <typename Scalar>
Var<Scalar> mean(const Var<Scalar>& x);

template <typename Scalar>
Var<Scalar> sum(const Var<Scalar>& x);

/// mean(|a - b|)
template <typename Scalar>
Var<Scalar> l1_mean(const Var<Scalar>& a, const Var<Scalar>& b);

/// mean((a - b)^2)
template <typename Scalar>
Var<Scalar> mse(const Var<Scalar>& a, const Var<Scalar>& b);

/// 10 log10(max(mse(a, b), floor)), i.e. the negated PSNR for unit peak.
template <typename Scalar>
Var<Scalar> neg_psnr(const Var<Scalar>& a, const Var<Scalar>& b, double mse_floor);

/// mean(max(0, 1 + sign * x)); sign = -1 for real logits, +1 for fake logits.
template <typename Scalar>
Var<Scalar> hinge_mean(const Var<Scalar>& x, Scalar sign);

#define DRL_EXTERN_OPS(S)                                                                    \
    extern template Var<S> conv2d(const Var<S>&, const Var<S>&, const Var<S>&, int, int);    \
    extern template Var<S> leaky_relu(const Var<S>&, S);                                     \
    extern template Var<S> add(const Var<S>&, const Var<S>&);                                \
    extern template Var<S> sub(const Var<S>&, const Var<S>&);                                \
    extern template Var<S> mul(const Var<S>&, const Var<S>&);                                \
    extern template Var<S> scale(const Var<S>&, S);                                          \
    extern template Var<S> concat_channels(const std::vector<Var<S>>&);                      \
    extern template Var<S> upsample_nearest2x(const Var<S>&);                                \
    extern template Var<S> avg_pool2x(const Var<S>&);                                        \
    extern template Var<S> mean(const Var<S>&);                                              \
    extern template Var<S> sum(const Var<S>&);                                               \
    extern template Var<S> l1_mean(const Var<S>&, const Var<S>&);                            \
    extern template Var<S> mse(const Var<S>&, const Var<S>&);                                \
    extern template Var<S> neg_psnr(const Var<S>&, const Var<S>&, double);                   \
    extern template Var<S> hinge_mean(const Var<S>&, S);

DRL_EXTERN_OPS(float)
DRL_EXTERN_OPS(double)
#undef DRL_EXTERN_OPS

}  // namespace drl
