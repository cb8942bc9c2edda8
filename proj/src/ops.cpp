#include "drl/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace drl {

namespace {
thread_local MacCounter* active_counter = nullptr;

template <typename Scalar>
using ColMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

int conv_out_dim(int in, int k, int stride, int pad) { return (in + 2 * pad - k) / stride + 1; }

// Rows are (sample, output pixel); columns are (in channel, ky, kx), matching
// the row-major {out_c, in_c, k, k} weight layout.
template <typename Scalar>
void im2col(const Tensor<Scalar>& x, int k, int stride, int pad, int ho, int wo, ColMatrix<Scalar>& col) {
    const Shape& s = x.shape();
    const std::ptrdiff_t p = static_cast<std::ptrdiff_t>(ho) * wo;
    const std::ptrdiff_t rows = p * s.n;
    col.resize(rows, static_cast<std::ptrdiff_t>(s.c) * k * k);
    for (int ci = 0; ci < s.c; ++ci) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                Scalar* dst_col = col.data() + ((static_cast<std::ptrdiff_t>(ci) * k + ky) * k + kx) * rows;
                // Valid output x range where the input column lies inside the image.
                const int ox_lo = std::clamp((pad - kx + stride - 1) / stride, 0, wo);
                const int ox_hi = std::clamp((s.w + pad - kx + stride - 1) / stride, ox_lo, wo);
                for (int n = 0; n < s.n; ++n) {
                    const Scalar* src = x.plane(n, ci);
                    for (int oy = 0; oy < ho; ++oy) {
                        Scalar* dst = dst_col + n * p + static_cast<std::ptrdiff_t>(oy) * wo;
                        const int iy = oy * stride - pad + ky;
                        if (iy < 0 || iy >= s.h) {
                            std::fill(dst, dst + wo, Scalar(0));
                            continue;
                        }
                        std::fill(dst, dst + ox_lo, Scalar(0));
                        std::fill(dst + ox_hi, dst + wo, Scalar(0));
                        const Scalar* row = src + static_cast<std::ptrdiff_t>(iy) * s.w;
                        if (stride == 1) {
                            std::memcpy(dst + ox_lo, row + ox_lo - pad + kx,
                                        sizeof(Scalar) * static_cast<std::size_t>(ox_hi - ox_lo));
                        } else {
                            for (int ox = ox_lo; ox < ox_hi; ++ox) dst[ox] = row[ox * stride - pad + kx];
                        }
                    }
                }
            }
        }
    }
}

template <typename Scalar>
void col2im_add(const ColMatrix<Scalar>& col, int k, int stride, int pad, int ho, int wo, Tensor<Scalar>& dx) {
    const Shape& s = dx.shape();
    const std::ptrdiff_t p = static_cast<std::ptrdiff_t>(ho) * wo;
    const std::ptrdiff_t rows = p * s.n;
    for (int ci = 0; ci < s.c; ++ci) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const Scalar* src_col = col.data() + ((static_cast<std::ptrdiff_t>(ci) * k + ky) * k + kx) * rows;
                const int ox_lo = std::clamp((pad - kx + stride - 1) / stride, 0, wo);
                const int ox_hi = std::clamp((s.w + pad - kx + stride - 1) / stride, ox_lo, wo);
                for (int n = 0; n < s.n; ++n) {
                    Scalar* dst = dx.plane(n, ci);
                    for (int oy = 0; oy < ho; ++oy) {
                        const int iy = oy * stride - pad + ky;
                        if (iy < 0 || iy >= s.h) continue;
                        const Scalar* src = src_col + n * p + static_cast<std::ptrdiff_t>(oy) * wo;
                        Scalar* row = dst + static_cast<std::ptrdiff_t>(iy) * s.w;
                        if (stride == 1) {
                            Scalar* d = row - pad + kx;
                            for (int ox = ox_lo; ox < ox_hi; ++ox) d[ox] += src[ox];
                        } else {
                            for (int ox = ox_lo; ox < ox_hi; ++ox) row[ox * stride - pad + kx] += src[ox];
                        }
                    }
                }
            }
        }
    }
}

template <typename Scalar>
Tensor<Scalar> unary_like(const Var<Scalar>& x) {
    return Tensor<Scalar>(x.shape());
}

}  // namespace

MacCounter::MacCounter(bool dry_run) : previous_(active_counter), dry_run_(dry_run) { active_counter = this; }
MacCounter::~MacCounter() { active_counter = previous_; }
std::int64_t MacCounter::macs() const { return macs_; }

void record_conv_macs(std::int64_t macs) {
    if (active_counter != nullptr) active_counter->macs_ += macs;
}

bool conv_dry_run() { return active_counter != nullptr && active_counter->dry_run_; }

template <typename Scalar>
Var<Scalar> conv2d(const Var<Scalar>& x, const Var<Scalar>& weight, const Var<Scalar>& bias, int stride,
                   int pad) {
    const Shape xs = x.shape();
    const Shape ws = weight.shape();
    if (ws.c != xs.c) {
        throw DimensionError("conv2d: input has " + std::to_string(xs.c) + " channels, weight expects " +
                             std::to_string(ws.c));
    }
    if (ws.h != ws.w) throw DimensionError("conv2d: non-square kernel " + ws.str());
    const int k = ws.h;
    const int ho = conv_out_dim(xs.h, k, stride, pad);
    const int wo = conv_out_dim(xs.w, k, stride, pad);
    if (ho <= 0 || wo <= 0) throw DimensionError("conv2d: input " + xs.str() + " too small for kernel");
    const int out_c = ws.n;
    const std::ptrdiff_t kdim = static_cast<std::ptrdiff_t>(xs.c) * k * k;
    const std::ptrdiff_t p = static_cast<std::ptrdiff_t>(ho) * wo;
    const std::ptrdiff_t rows = p * xs.n;

    record_conv_macs(static_cast<std::int64_t>(rows) * out_c * kdim);

    Tensor<Scalar> out({xs.n, out_c, ho, wo});
    if (!conv_dry_run()) {
        ColMatrix<Scalar> col;
        im2col(x.value(), k, stride, pad, ho, wo, col);
        Eigen::Map<const ColMatrix<Scalar>> wt(weight.value().ptr(), kdim, out_c);
        ColMatrix<Scalar> prod(rows, out_c);
        prod.noalias() = col * wt;
        for (int n = 0; n < xs.n; ++n) {
            for (int co = 0; co < out_c; ++co) {
                std::memcpy(out.plane(n, co), prod.data() + co * rows + n * p, sizeof(Scalar) * p);
            }
        }
    }
    if (bias.defined()) {
        if (bias.value().size() != out_c) throw DimensionError("conv2d: bias size mismatch");
        for (int n = 0; n < xs.n; ++n) {
            for (int co = 0; co < out_c; ++co) {
                Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> plane(out.plane(n, co), p);
                plane.array() += bias.value().data()[co];
            }
        }
    }

    std::vector<Var<Scalar>> inputs{x, weight};
    if (bias.defined()) inputs.push_back(bias);
    return make_result<Scalar>(std::move(out), std::move(inputs), [=](Node<Scalar>& node) {
        auto& xin = *node.inputs[0];
        auto& win = *node.inputs[1];
        const Tensor<Scalar>& g = node.grad;
        ColMatrix<Scalar> dprod(rows, out_c);
        for (int n = 0; n < xs.n; ++n) {
            for (int co = 0; co < out_c; ++co) {
                std::memcpy(dprod.data() + co * rows + n * p, g.plane(n, co), sizeof(Scalar) * p);
            }
        }
        if (node.inputs.size() > 2 && node.inputs[2]->requires_grad) {
            auto& bg = node.inputs[2]->grad_buffer();
            bg.data() += dprod.colwise().sum().transpose();
        }
        if (win.requires_grad) {
            ColMatrix<Scalar> col;
            im2col(xin.value, k, stride, pad, ho, wo, col);
            Eigen::Map<ColMatrix<Scalar>> dwt(win.grad_buffer().ptr(), kdim, out_c);
            dwt.noalias() += col.transpose() * dprod;
        }
        if (xin.requires_grad) {
            Eigen::Map<const ColMatrix<Scalar>> wt(win.value.ptr(), kdim, out_c);
            ColMatrix<Scalar> dcol(rows, kdim);
            dcol.noalias() = dprod * wt.transpose();
            col2im_add(dcol, k, stride, pad, ho, wo, xin.grad_buffer());
        }
    });
}

template <typename Scalar>
Var<Scalar> leaky_relu(const Var<Scalar>& x, Scalar slope) {
    Tensor<Scalar> out = unary_like(x);
    out.array() = (x.value().array() > Scalar(0)).select(x.value().array(), slope * x.value().array());
    return make_result<Scalar>(std::move(out), {x}, [slope](Node<Scalar>& node) {
        auto& in = *node.inputs[0];
        in.grad_buffer().array() +=
            (in.value.array() > Scalar(0)).select(node.grad.array(), slope * node.grad.array());
    });
}

template <typename Scalar>
Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b) {
    require_same_shape(a.shape(), b.shape(), "add");
    Tensor<Scalar> out(a.shape(), a.value().data() + b.value().data());
    return make_result<Scalar>(std::move(out), {a, b}, [](Node<Scalar>& node) {
        for (auto& in : node.inputs) {
            if (in->requires_grad) in->grad_buffer().data() += node.grad.data();
        }
    });
}

template <typename Scalar>
Var<Scalar> sub(const Var<Scalar>& a, const Var<Scalar>& b) {
    require_same_shape(a.shape(), b.shape(), "sub");
    Tensor<Scalar> out(a.shape(), a.value().data() - b.value().data());
    return make_result<Scalar>(std::move(out), {a, b}, [](Node<Scalar>& node) {
        if (node.inputs[0]->requires_grad) node.inputs[0]->grad_buffer().data() += node.grad.data();
        if (node.inputs[1]->requires_grad) node.inputs[1]->grad_buffer().data() -= node.grad.data();
    });
}

template <typename Scalar>
Var<Scalar> mul(const Var<Scalar>& a, const Var<Scalar>& b) {
    require_same_shape(a.shape(), b.shape(), "mul");
    Tensor<Scalar> out(a.shape());
    out.array() = a.value().array() * b.value().array();
    return make_result<Scalar>(std::move(out), {a, b}, [](Node<Scalar>& node) {
        auto& l = *node.inputs[0];
        auto& r = *node.inputs[1];
        if (l.requires_grad) l.grad_buffer().array() += node.grad.array() * r.value.array();
        if (r.requires_grad) r.grad_buffer().array() += node.grad.array() * l.value.array();
    });
}

template <typename Scalar>
Var<Scalar> scale(const Var<Scalar>& a, Scalar factor) {
    Tensor<Scalar> out(a.shape(), a.value().data() * factor);
    return make_result<Scalar>(std::move(out), {a}, [factor](Node<Scalar>& node) {
        node.inputs[0]->grad_buffer().data() += factor * node.grad.data();
    });
}

template <typename Scalar>
Var<Scalar> concat_channels(const std::vector<Var<Scalar>>& parts) {
    if (parts.empty()) throw DimensionError("concat_channels: no inputs");
    Shape s = parts.front().shape();
    int total_c = 0;
    for (const auto& part : parts) {
        const Shape& ps = part.shape();
        if (ps.n != s.n || ps.h != s.h || ps.w != s.w) {
            throw DimensionError("concat_channels: " + ps.str() + " incompatible with " + s.str());
        }
        total_c += ps.c;
    }
    s.c = total_c;
    Tensor<Scalar> out(s);
    const std::ptrdiff_t plane = s.plane();
    for (int n = 0; n < s.n; ++n) {
        int offset = 0;
        for (const auto& part : parts) {
            const int pc = part.shape().c;
            std::memcpy(out.plane(n, offset), part.value().plane(n, 0), sizeof(Scalar) * plane * pc);
            offset += pc;
        }
    }
    return make_result<Scalar>(std::move(out), parts, [s, plane](Node<Scalar>& node) {
        for (int n = 0; n < s.n; ++n) {
            int offset = 0;
            for (auto& in : node.inputs) {
                const int pc = in->value.shape().c;
                if (in->requires_grad) {
                    Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> dst(in->grad_buffer().plane(n, 0),
                                                                             plane * pc);
                    Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> src(node.grad.plane(n, offset),
                                                                                   plane * pc);
                    dst += src;
                }
                offset += pc;
            }
        }
    });
}

template <typename Scalar>
Var<Scalar> upsample_nearest2x(const Var<Scalar>& x) {
    const Shape s = x.shape();
    Tensor<Scalar> out({s.n, s.c, 2 * s.h, 2 * s.w});
    const int ow = 2 * s.w;
    for (int n = 0; n < s.n; ++n) {
        for (int c = 0; c < s.c; ++c) {
            const Scalar* src = x.value().plane(n, c);
            Scalar* dst = out.plane(n, c);
            for (int y = 0; y < s.h; ++y) {
                Scalar* r0 = dst + static_cast<std::ptrdiff_t>(2 * y) * ow;
                for (int xx = 0; xx < s.w; ++xx) r0[2 * xx] = r0[2 * xx + 1] = src[y * s.w + xx];
                std::memcpy(r0 + ow, r0, sizeof(Scalar) * ow);
            }
        }
    }
    return make_result<Scalar>(std::move(out), {x}, [s, ow](Node<Scalar>& node) {
        auto& g = node.inputs[0]->grad_buffer();
        for (int n = 0; n < s.n; ++n) {
            for (int c = 0; c < s.c; ++c) {
                const Scalar* src = node.grad.plane(n, c);
                Scalar* dst = g.plane(n, c);
                for (int y = 0; y < s.h; ++y) {
                    const Scalar* r0 = src + static_cast<std::ptrdiff_t>(2 * y) * ow;
                    const Scalar* r1 = r0 + ow;
                    for (int xx = 0; xx < s.w; ++xx) {
                        dst[y * s.w + xx] += r0[2 * xx] + r0[2 * xx + 1] + r1[2 * xx] + r1[2 * xx + 1];
                    }
                }
            }
        }
    });
}

template <typename Scalar>
Var<Scalar> avg_pool2x(const Var<Scalar>& x) {
    const Shape s = x.shape();
    if (s.h % 2 != 0 || s.w % 2 != 0) throw DimensionError("avg_pool2x: odd spatial dims " + s.str());
    const int oh = s.h / 2;
    const int ow = s.w / 2;
    Tensor<Scalar> out({s.n, s.c, oh, ow});
    for (int n = 0; n < s.n; ++n) {
        for (int c = 0; c < s.c; ++c) {
            const Scalar* src = x.value().plane(n, c);
            Scalar* dst = out.plane(n, c);
            for (int y = 0; y < oh; ++y) {
                const Scalar* r0 = src + static_cast<std::ptrdiff_t>(2 * y) * s.w;
                const Scalar* r1 = r0 + s.w;
                for (int xx = 0; xx < ow; ++xx) {
                    dst[y * ow + xx] = Scalar(0.25) * (r0[2 * xx] + r0[2 * xx + 1] + r1[2 * xx] + r1[2 * xx + 1]);
                }
            }
        }
    }
    return make_result<Scalar>(std::move(out), {x}, [s, oh, ow](Node<Scalar>& node) {
        auto& g = node.inputs[0]->grad_buffer();
        for (int n = 0; n < s.n; ++n) {
            for (int c = 0; c < s.c; ++c) {
                const Scalar* src = node.grad.plane(n, c);
                Scalar* dst = g.plane(n, c);
                for (int y = 0; y < oh; ++y) {
                    Scalar* r0 = dst + static_cast<std::ptrdiff_t>(2 * y) * s.w;
                    Scalar* r1 = r0 + s.w;
                    for (int xx = 0; xx < ow; ++xx) {
                        const Scalar v = Scalar(0.25) * src[y * ow + xx];
                        r0[2 * xx] += v;
                        r0[2 * xx + 1] += v;
                        r1[2 * xx] += v;
                        r1[2 * xx + 1] += v;
                    }
                }
            }
        }
    });
}

template <typename Scalar>
Var<Scalar> sum(const Var<Scalar>& x) {
    auto out = Tensor<Scalar>::scalar(x.value().data().sum());
    return make_result<Scalar>(std::move(out), {x}, [](Node<Scalar>& node) {
        node.inputs[0]->grad_buffer().array() += node.grad.data()[0];
    });
}

template <typename Scalar>
Var<Scalar> mean(const Var<Scalar>& x) {
    const auto count = static_cast<Scalar>(x.value().size());
    auto out = Tensor<Scalar>::scalar(x.value().data().sum() / count);
    return make_result<Scalar>(std::move(out), {x}, [count](Node<Scalar>& node) {
        node.inputs[0]->grad_buffer().array() += node.grad.data()[0] / count;
    });
}

template <typename Scalar>
Var<Scalar> l1_mean(const Var<Scalar>& a, const Var<Scalar>& b) {
    require_same_shape(a.shape(), b.shape(), "l1_mean");
    const auto count = static_cast<Scalar>(a.value().size());
    auto out = Tensor<Scalar>::scalar((a.value().array() - b.value().array()).abs().sum() / count);
    return make_result<Scalar>(std::move(out), {a, b}, [count](Node<Scalar>& node) {
        auto& l = *node.inputs[0];
        auto& r = *node.inputs[1];
        const Scalar g = node.grad.data()[0] / count;
        const auto sign = (l.value.array() - r.value.array()).sign();
        if (l.requires_grad) l.grad_buffer().array() += g * sign;
        if (r.requires_grad) r.grad_buffer().array() -= g * sign;
    });
}

template <typename Scalar>
Var<Scalar> mse(const Var<Scalar>& a, const Var<Scalar>& b) {
    require_same_shape(a.shape(), b.shape(), "mse");
    const auto count = static_cast<Scalar>(a.value().size());
    auto out = Tensor<Scalar>::scalar((a.value().array() - b.value().array()).square().sum() / count);
    return make_result<Scalar>(std::move(out), {a, b}, [count](Node<Scalar>& node) {
        auto& l = *node.inputs[0];
        auto& r = *node.inputs[1];
        const Scalar g = Scalar(2) * node.grad.data()[0] / count;
        const auto diff = l.value.array() - r.value.array();
        if (l.requires_grad) l.grad_buffer().array() += g * diff;
        if (r.requires_grad) r.grad_buffer().array() -= g * diff;
    });
}

template <typename Scalar>
Var<Scalar> neg_psnr(const Var<Scalar>& a, const Var<Scalar>& b, double mse_floor) {
    require_same_shape(a.shape(), b.shape(), "neg_psnr");
    const auto count = static_cast<double>(a.value().size());
    // Accumulate in double so the floor is meaningful for float inputs.
    const double err = (a.value().array() - b.value().array()).template cast<double>().square().sum() / count;
    const bool floored = err <= mse_floor;
    const double value = 10.0 * std::log10(std::max(err, mse_floor));
    auto out = Tensor<Scalar>::scalar(static_cast<Scalar>(value));
    return make_result<Scalar>(std::move(out), {a, b}, [=](Node<Scalar>& node) {
        if (floored) return;
        auto& l = *node.inputs[0];
        auto& r = *node.inputs[1];
        const double dloss_dmse = 10.0 / (std::log(10.0) * err);
        const auto g = static_cast<Scalar>(node.grad.data()[0] * dloss_dmse * 2.0 / count);
        const auto diff = l.value.array() - r.value.array();
        if (l.requires_grad) l.grad_buffer().array() += g * diff;
        if (r.requires_grad) r.grad_buffer().array() -= g * diff;
    });
}

template <typename Scalar>
Var<Scalar> hinge_mean(const Var<Scalar>& x, Scalar sign) {
    const auto count = static_cast<Scalar>(x.value().size());
    auto out = Tensor<Scalar>::scalar((Scalar(1) + sign * x.value().array()).max(Scalar(0)).sum() / count);
    return make_result<Scalar>(std::move(out), {x}, [sign, count](Node<Scalar>& node) {
        auto& in = *node.inputs[0];
        const Scalar g = node.grad.data()[0] * sign / count;
        in.grad_buffer().array() += (Scalar(1) + sign * in.value.array() > Scalar(0)).template cast<Scalar>() * g;
    });
}

#define DRL_INSTANTIATE_OPS(S)                                                       \
    template Var<S> conv2d(const Var<S>&, const Var<S>&, const Var<S>&, int, int);   \
    template Var<S> leaky_relu(const Var<S>&, S);                                    \
    template Var<S> add(const Var<S>&, const Var<S>&);                               \
    template Var<S> sub(const Var<S>&, const Var<S>&);                               \
    template Var<S> mul(const Var<S>&, const Var<S>&);                               \
    template Var<S> scale(const Var<S>&, S);                                         \
    template Var<S> concat_channels(const std::vector<Var<S>>&);                     \
    template Var<S> upsample_nearest2x(const Var<S>&);                               \
    template Var<S> avg_pool2x(const Var<S>&);                                       \
    template Var<S> mean(const Var<S>&);                                             \
    template Var<S> sum(const Var<S>&);                                              \
    template Var<S> l1_mean(const Var<S>&, const Var<S>&);                           \
    template Var<S> mse(const Var<S>&, const Var<S>&);                               \
    template Var<S> neg_psnr(const Var<S>&, const Var<S>&, double);                  \
    template Var<S> hinge_mean(const Var<S>&, S);

DRL_INSTANTIATE_OPS(float)
DRL_INSTANTIATE_OPS(double)

}  // namespace drl
