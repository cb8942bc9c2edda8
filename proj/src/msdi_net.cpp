#include "drl/msdi_net.hpp"

#include "drl/encoder.hpp"
#include "drl/metrics.hpp"

namespace drl {

namespace {

std::string scale_name(const std::string& prefix, const char* what, int s) {
    return prefix + "." + what + std::to_string(s);
}

}  // namespace

template <typename Scalar>
SpatialModulation<Scalar>::SpatialModulation(int map_channels, int feature_channels, Rng& rng)
    : gamma_hidden_(map_channels, feature_channels, 3, 1, rng),
      gamma_out_(feature_channels, feature_channels, 3, 1, rng),
      beta_hidden_(map_channels, feature_channels, 3, 1, rng),
      beta_out_(feature_channels, feature_channels, 3, 1, rng) {
    gamma_out_.bias().mutable_value().data().setConstant(Scalar(1));
}

template <typename Scalar>
Var<Scalar> SpatialModulation<Scalar>::operator()(const Var<Scalar>& f, const Var<Scalar>& m) const {
    const Shape& fs = f.shape();
    const Shape& ms = m.shape();
    if (fs.n != ms.n || fs.h != ms.h || fs.w != ms.w) {
        throw DimensionError("SAM: feature " + fs.str() + " and degradation map " + ms.str() + " disagree");
    }
    const Var<Scalar> gamma = gamma_out_(lrelu(gamma_hidden_(m)));
    const Var<Scalar> beta = beta_out_(lrelu(beta_hidden_(m)));
    return add(mul(gamma, f), beta);
}

template <typename Scalar>
void SpatialModulation<Scalar>::collect(const std::string& prefix, ParamList<Scalar>& out) const {
    gamma_hidden_.collect(prefix + ".gamma_hidden", out);
    gamma_out_.collect(prefix + ".gamma_out", out);
    beta_hidden_.collect(prefix + ".beta_hidden", out);
    beta_out_.collect(prefix + ".beta_out", out);
}

template <typename Scalar>
ConcatInjection<Scalar>::ConcatInjection(int map_channels, int feature_channels, Rng& rng)
    : fuse_(map_channels + feature_channels, feature_channels, 3, 1, rng),
      res1_(feature_channels, feature_channels, 3, 1, rng),
      res2_(feature_channels, feature_channels, 3, 1, rng) {}

template <typename Scalar>
Var<Scalar> ConcatInjection<Scalar>::operator()(const Var<Scalar>& f, const Var<Scalar>& m) const {
    const Shape& fs = f.shape();
    const Shape& ms = m.shape();
    if (fs.n != ms.n || fs.h != ms.h || fs.w != ms.w) {
        throw DimensionError("concat injection: feature " + fs.str() + " and map " + ms.str() + " disagree");
    }
    const Var<Scalar> h = fuse_(concat_channels<Scalar>({f, m}));
    return add(h, res2_(lrelu(res1_(h))));
}

template <typename Scalar>
void ConcatInjection<Scalar>::collect(const std::string& prefix, ParamList<Scalar>& out) const {
    fuse_.collect(prefix + ".fuse", out);
    res1_.collect(prefix + ".res1", out);
    res2_.collect(prefix + ".res2", out);
}

template <typename Scalar>
MSDINet<Scalar>::MSDINet(const MSDINetConfig& config, Rng& rng) : config_(config) {
    config.validate();
    constexpr int S = MSDINetConfig::kScales;
    const auto c = [&](int s) { return config_.channels(s); };
    const bool injecting = config.injection_mode != InjectionMode::none;

    const int stem_in = config.in_channels + (config.injection_mode == InjectionMode::input_concat ? c(0) : 0);
    stem_a_ = Conv2d<Scalar>(stem_in, c(0), 3, 1, rng);
    stem_b_ = Conv2d<Scalar>(c(0), c(0), 3, 1, rng);
    down_.resize(S);
    enc_.resize(S);
    for (int s = 1; s < S; ++s) {
        down_[s] = Conv2d<Scalar>(c(s - 1), c(s), 3, 2, rng);
        enc_[s] = Conv2d<Scalar>(c(s), c(s), 3, 1, rng);
    }

    if (injecting) {
        map_in_ = Conv2d<Scalar>(config.degradation_channels, c(S - 1), 3, 1, rng);
        map_up_.resize(S - 1);
        const bool full_chain = config.injection_mode == InjectionMode::input_concat ||
                                config.injection_scales == InjectionScales::all;
        if (full_chain) {
            for (int s = S - 2; s >= 0; --s) map_up_[s] = DegradationUpsampler<Scalar>(c(s + 1), c(s), rng);
        }
        if (config.injection_mode == InjectionMode::sam) {
            sam_.resize(S);
            for (int s = S - 1; s >= 0; --s) {
                if (injects_at(s)) sam_[s] = SpatialModulation<Scalar>(c(s), c(s), rng);
            }
        } else if (config.injection_mode == InjectionMode::concat) {
            concat_.resize(S);
            for (int s = S - 1; s >= 0; --s) {
                if (injects_at(s)) concat_[s] = ConcatInjection<Scalar>(c(s), c(s), rng);
            }
        }
    }

    dec_up_.resize(S - 1);
    dec_a_.resize(S - 1);
    dec_b_.resize(S - 1);
    for (int s = S - 2; s >= 0; --s) {
        dec_up_[s] = Conv2d<Scalar>(c(s + 1), c(s), 3, 1, rng);
        dec_a_[s] = Conv2d<Scalar>(2 * c(s), c(s), 3, 1, rng);
        dec_b_[s] = Conv2d<Scalar>(c(s), c(s), 3, 1, rng);
    }
    head_ = Conv2d<Scalar>(c(0), config.in_channels, 3, 1, rng);
    // Small initial residuals keep an untrained generator close to the identity.
    head_.weight().mutable_value().data() *= Scalar(0.01);
}

template <typename Scalar>
bool MSDINet<Scalar>::injects_at(int scale) const {
    if (config_.injection_mode != InjectionMode::sam && config_.injection_mode != InjectionMode::concat) return false;
    return config_.injection_scales == InjectionScales::all || scale == MSDINetConfig::kScales - 1;
}

template <typename Scalar>
Var<Scalar> MSDINet<Scalar>::forward_residual(const Var<Scalar>& input, const Var<Scalar>& deg,
                                              InjectionTrace* trace) const {
    constexpr int S = MSDINetConfig::kScales;
    const Shape& in = input.shape();
    if (in.h <= 0 || in.w <= 0 || in.h % 16 != 0 || in.w % 16 != 0) {
        throw DimensionError("MSDI-Net input sides must be multiples of 16, got " + in.str());
    }
    if (in.c != config_.in_channels) throw DimensionError("MSDI-Net: wrong input channels " + in.str());

    const bool injecting = config_.injection_mode != InjectionMode::none;
    std::vector<Var<Scalar>> maps(S);
    if (injecting) {
        const Shape& ds = deg.shape();
        if (ds.n != in.n || ds.c != config_.degradation_channels || ds.h * 16 != in.h || ds.w * 16 != in.w) {
            throw DimensionError("degradation map " + ds.str() + " does not match input " + in.str());
        }
        maps[S - 1] = map_in_(deg);
        for (int s = S - 2; s >= 0; --s) {
            if (map_up_[s].conv().kernel() == 0) break;
            maps[s] = map_up_[s](maps[s + 1]);
        }
    }

    Var<Scalar> h = input;
    if (config_.injection_mode == InjectionMode::input_concat) h = concat_channels<Scalar>({input, maps[0]});

    std::vector<Var<Scalar>> skips(S);
    h = lrelu(stem_b_(lrelu(stem_a_(h))));
    skips[0] = h;
    for (int s = 1; s < S; ++s) {
        h = lrelu(enc_[s](lrelu(down_[s](h))));
        skips[s] = h;
    }

    for (int s = S - 1; s >= 0; --s) {
        if (!injects_at(s)) continue;
        if (trace) {
            trace->injections += 1;
            trace->scales.push_back(s);
            trace->skip_shapes.push_back(skips[s].shape());
            trace->map_shapes.push_back(maps[s].shape());
        }
        skips[s] = config_.injection_mode == InjectionMode::sam ? sam_[s](skips[s], maps[s])
                                                                : concat_[s](skips[s], maps[s]);
    }

    Var<Scalar> d = skips[S - 1];
    for (int s = S - 2; s >= 0; --s) {
        const Var<Scalar> u = lrelu(dec_up_[s](upsample_nearest2x(d)));
        d = lrelu(dec_b_[s](lrelu(dec_a_[s](concat_channels<Scalar>({u, skips[s]})))));
    }
    return head_(d);
}

template <typename Scalar>
ParamList<Scalar> MSDINet<Scalar>::parameters(const std::string& prefix) const {
    constexpr int S = MSDINetConfig::kScales;
    ParamList<Scalar> out;
    stem_a_.collect(prefix + ".stem_a", out);
    stem_b_.collect(prefix + ".stem_b", out);
    for (int s = 1; s < S; ++s) {
        down_[s].collect(scale_name(prefix, "down", s), out);
        enc_[s].collect(scale_name(prefix, "enc", s), out);
    }
    if (config_.injection_mode != InjectionMode::none) {
        map_in_.collect(prefix + ".map_in", out);
        for (int s = S - 2; s >= 0; --s) {
            if (map_up_[s].conv().kernel() == 0) break;
            map_up_[s].collect(scale_name(prefix, "map_up", s), out);
        }
    }
    for (int s = S - 1; s >= 0; --s) {
        if (!injects_at(s)) continue;
        if (config_.injection_mode == InjectionMode::sam) {
            sam_[s].collect(scale_name(prefix, "sam", s), out);
        } else {
            concat_[s].collect(scale_name(prefix, "concat", s), out);
        }
    }
    for (int s = S - 2; s >= 0; --s) {
        dec_up_[s].collect(scale_name(prefix, "dec_up", s), out);
        dec_a_[s].collect(scale_name(prefix, "dec_a", s), out);
        dec_b_[s].collect(scale_name(prefix, "dec_b", s), out);
    }
    head_.collect(prefix + ".head", out);
    return out;
}

template <typename Scalar>
Generator<Scalar>::Generator(const MSDINetConfig& config, Rng& rng) : config_(config) {
    config.validate();
    for (int k = 0; k < config.stack_depth; ++k) {
        MSDINetConfig net = config;
        if (k > 0 && !config.inject_all_stacked) net.injection_mode = InjectionMode::none;
        nets_.emplace_back(net, rng);
    }
}

template <typename Scalar>
GeneratorOutput<Scalar> Generator<Scalar>::operator()(const Var<Scalar>& input, const Var<Scalar>& deg,
                                                      std::vector<InjectionTrace>* traces) const {
    GeneratorOutput<Scalar> out;
    Var<Scalar> current = input;
    for (const auto& net : nets_) {
        InjectionTrace* trace = nullptr;
        if (traces) trace = &traces->emplace_back();
        current = add(current, net.forward_residual(current, deg, trace));
        out.stages.push_back(current);
    }
    return out;
}

template <typename Scalar>
ParamList<Scalar> Generator<Scalar>::parameters(const std::string& prefix) const {
    ParamList<Scalar> out;
    for (std::size_t k = 0; k < nets_.size(); ++k) {
        auto part = nets_[k].parameters(prefix + ".net" + std::to_string(k));
        out.insert(out.end(), part.begin(), part.end());
    }
    return out;
}

template class SpatialModulation<float>;
template class SpatialModulation<double>;
template class ConcatInjection<float>;
template class ConcatInjection<double>;
template class MSDINet<float>;
template class MSDINet<double>;
template class Generator<float>;
template class Generator<double>;

std::int64_t count_macs(const MSDINetConfig& net, const EncoderConfig& encoder, int input_h, int input_w) {
    Rng rng(0);
    const DegradationEncoder<float> e(encoder, rng);
    MSDINetConfig g_config = net;
    g_config.degradation_channels = encoder.latent_channels;
    const Generator<float> g(g_config, rng);

    NoGradGuard no_grad;
    MacCounter counter(/*dry_run=*/true);
    const auto y = Var<float>::constant(Tensor<float>({1, net.in_channels, input_h, input_w}));
    const auto deg = e.encode(y);
    g(y, deg);
    return counter.macs();
}

}  // namespace drl
