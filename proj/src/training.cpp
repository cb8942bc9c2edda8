#include "drl/training.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace drl {

namespace {

enum Stream : std::uint64_t { kInitE = 1, kInitGr = 2, kInitGd = 3, kInitD = 4, kBatches = 5, kAugment = 6 };

Rng init_rng(std::uint64_t seed, Stream stream) { return Rng::derive(seed, stream); }

template <typename Params>
void append(ParamList<float>& out, const Params& more) {
    out.insert(out.end(), more.begin(), more.end());
}

std::size_t checked_size(const std::vector<ImagePair>& train, const TrainConfig& config) {
    config.validate();
    if (train.empty()) throw ConfigError("data", "training set is empty");
    if (train.size() < static_cast<std::size_t>(config.batch_size)) {
        throw ConfigError("batch_size", "exceeds the number of training pairs");
    }
    return train.size();
}

Var<float> sum_defined(const Var<float>& a, const Var<float>& b) { return a.defined() ? add(a, b) : b; }

Tensor<float> clamp01(Tensor<float> t) {
    t.array() = t.array().cwiseMax(0.0f).cwiseMin(1.0f);
    return t;
}

Image clamped_image(const Tensor<float>& t, int index = 0) {
    Image out = from_tensor(t, index);
    out.clamp01();
    return out;
}

// Evaluates `fn` on a reflect-padded copy and crops the result back.
template <typename Fn>
Image with_padding(const Image& input, Fn&& fn) {
    const Image padded = pad_reflect_to_multiple(input, 16);
    Image out = fn(padded);
    if (out.height() != input.height() || out.width() != input.width()) {
        out = out.crop(0, 0, input.height(), input.width());
    }
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Inference

ModelBundle load_models(const Checkpoint& checkpoint) {
    ModelBundle m;
    m.config = train_config_from_json(checkpoint.header.at("config"));
    Rng rng(0);
    if (checkpoint.has_prefix("E.")) {
        m.encoder = std::make_unique<DegradationEncoder<float>>(m.config.encoder, rng);
        checkpoint.restore(m.encoder->parameters("E"));
        m.encoder->freeze();
    }
    if (checkpoint.has_prefix("G_r.")) {
        m.reblur = std::make_unique<Generator<float>>(m.config.generator, rng);
        checkpoint.restore(m.reblur->parameters("G_r"));
    }
    if (checkpoint.has_prefix("G_d.")) {
        m.deblur = std::make_unique<Generator<float>>(m.config.generator, rng);
        checkpoint.restore(m.deblur->parameters("G_d"));
    }
    return m;
}

Tensor<float> degradation_of(const DegradationEncoder<float>& encoder, const Image& image) {
    NoGradGuard no_grad;
    const Image padded = pad_reflect_to_multiple(image, 16);
    return encoder.encode(Var<float>::constant(to_tensor<float>(padded))).value();
}

Image reblur_with(const Generator<float>& g_r, const Image& sharp, const Tensor<float>& deg) {
    NoGradGuard no_grad;
    return with_padding(sharp, [&](const Image& x) {
        const auto out = g_r(Var<float>::constant(to_tensor<float>(x)), Var<float>::constant(deg));
        return clamped_image(out.final().value());
    });
}

Image encode_and_deblur(const ModelBundle& models, const Image& blurry) {
    if (!models.encoder || !models.deblur) throw IoError("checkpoint lacks the encoder or deblurring generator");
    NoGradGuard no_grad;
    return with_padding(blurry, [&](const Image& y) {
        const auto yv = Var<float>::constant(to_tensor<float>(y));
        const auto out = (*models.deblur)(yv, models.encoder->encode(yv));
        return clamped_image(out.final().value());
    });
}

Image encode_and_reblur(const ModelBundle& models, const Image& sharp, const Image& degradation_source) {
    if (!models.encoder || !models.reblur) throw IoError("checkpoint lacks the encoder or reblurring generator");
    if (!sharp.same_shape(degradation_source)) {
        throw DimensionError("reblur: degradation source must have the input's size");
    }
    return reblur_with(*models.reblur, sharp, degradation_of(*models.encoder, degradation_source));
}

// ---------------------------------------------------------------------------
// Records

double StepRecord::get(const std::string& name) const {
    for (const auto& [k, v] : losses) {
        if (k == name) return v;
    }
    throw std::out_of_range("no loss named " + name);
}

nlohmann::json StepRecord::to_json(int stage) const {
    nlohmann::json j{{"stage", stage}, {"step", step}, {"lr", lr}};
    for (const auto& [k, v] : losses) j[k] = v;
    return j;
}

nlohmann::json EvalReport::to_json() const {
    nlohmann::json j{{"n", n}, {"input_psnr", input_psnr}, {"deblur_psnr", deblur_psnr}, {"deblur_ssim", deblur_ssim}};
    if (has_reblur) {
        j["reblur_psnr"] = reblur_psnr;
        j["blurry_vs_sharp_psnr"] = blurry_vs_sharp;
    }
    return j;
}

// ---------------------------------------------------------------------------
// Trainer

Trainer::Trainer(TrainConfig config, std::vector<ImagePair> train)
    : config_(std::move(config)),
      train_(std::move(train)),
      batches_(checked_size(train_, config_), config_.batch_size, init_rng(config_.seed, kBatches).next_u64()),
      augment_rng_(init_rng(config_.seed, kAugment)) {
    for (const auto& p : train_) {
        if (p.sharp.height() < config_.patch_size || p.sharp.width() < config_.patch_size) {
            throw ConfigError("patch_size", "larger than training image " + p.id);
        }
    }

    Rng rng_e = init_rng(config_.seed, kInitE);
    Rng rng_gr = init_rng(config_.seed, kInitGr);
    Rng rng_gd = init_rng(config_.seed, kInitGd);
    Rng rng_d = init_rng(config_.seed, kInitD);
    e_ = std::make_unique<DegradationEncoder<float>>(config_.encoder, rng_e);
    g_d_ = std::make_unique<Generator<float>>(config_.generator, rng_gd);
    extractor_ = std::make_unique<FeatureExtractor<float>>(config_.extractor);
    const AdamParams hp{config_.adam_beta1, config_.adam_beta2, config_.adam_eps};

    if (config_.stage == 1) {
        ParamList<float> g_params = e_->parameters("E");
        if (config_.ablation != Ablation::without_reblurring) {
            g_r_ = std::make_unique<Generator<float>>(config_.generator, rng_gr);
            d_ = std::make_unique<MultiScaleDiscriminator<float>>(config_.discriminator, rng_d);
            append(g_params, g_r_->parameters("G_r"));
            opt_d_ = std::make_unique<Adam<float>>(d_->parameters("D"), hp);
        }
        append(g_params, g_d_->parameters("G_d"));
        opt_g_ = std::make_unique<Adam<float>>(std::move(g_params), hp);
    } else {
        e_->freeze();
        opt_g_ = std::make_unique<Adam<float>>(g_d_->parameters("G_d"), hp);
    }
}

void Trainer::load_encoder(const Checkpoint& checkpoint) {
    if (config_.stage != 2) throw ConfigError("stage", "an encoder checkpoint is only loaded for stage 2");
    if (iteration_ != 0) throw ConfigError("encoder", "cannot swap the encoder of a running stage");
    checkpoint.restore(e_->parameters("E"));
    e_->freeze();
    // G_r rides along so the final stage-2 checkpoint supports reblurring analyses.
    if (checkpoint.has_prefix("G_r.")) {
        const TrainConfig source = train_config_from_json(checkpoint.header.at("config"));
        Rng rng(0);
        g_r_ = std::make_unique<Generator<float>>(source.generator, rng);
        checkpoint.restore(g_r_->parameters("G_r"));
        set_requires_grad(g_r_->parameters("G_r"), false);
    }
    encoder_loaded_ = true;
}

ParamList<float> Trainer::all_parameters() const {
    ParamList<float> out = e_->parameters("E");
    if (g_r_) append(out, g_r_->parameters("G_r"));
    append(out, g_d_->parameters("G_d"));
    if (d_) append(out, d_->parameters("D"));
    return out;
}

std::pair<Var<float>, Var<float>> Trainer::next_batch() {
    std::vector<Image> sharp, blurry;
    for (std::size_t index : batches_.next()) {
        ImagePair p = crop_and_augment(train_[index], config_.patch_size, augment_rng_, config_.augment);
        sharp.push_back(std::move(p.sharp));
        blurry.push_back(std::move(p.blurry));
    }
    return {Var<float>::constant(to_tensor<float>(sharp)), Var<float>::constant(to_tensor<float>(blurry))};
}

void Trainer::guard(const StepRecord& record) const {
    for (const auto& [name, value] : record.losses) {
        if (!std::isfinite(value) || std::abs(value) > config_.divergence_threshold) {
            std::ostringstream msg;
            msg << "loss " << name << " = " << value << " at step " << record.step;
            throw DivergenceError(msg.str());
        }
    }
}

StepRecord Trainer::step() {
    if (iteration_ >= config_.total_iters) throw ConfigError("total_iters", "training already finished");
    const double lr = lr_override_ ? *lr_override_ : cosine_lr(iteration_, config_.total_iters, config_.lr_max, config_.lr_min);
    StepRecord r = config_.stage == 1 ? step_stage1(lr) : step_stage2(lr);
    ++iteration_;
    return r;
}

StepRecord Trainer::step_stage1(double lr) {
    const auto [x, y] = next_batch();
    opt_g_->zero_grad();
    if (opt_d_) opt_d_->zero_grad();

    const Stage1Models<float> models{e_.get(), g_r_.get(), g_d_.get(), d_.get(), extractor_.get()};
    const Stage1Losses<float> L = stage1_objective(x, y, models, config_.weights);
    const Var<float> objective = L.generator_objective();

    StepRecord r;
    r.step = iteration_ + 1;
    r.lr = lr;
    if (L.g_total.defined()) {
        r.losses = {{"adversarial", L.adversarial.item()},
                    {"perceptual", L.perceptual.item()},
                    {"g_total", L.g_total.item()},
                    {"d_loss", L.d_loss.item()}};
    }
    r.losses.emplace_back("deblur", L.deblur.item());
    r.losses.emplace_back("objective", objective.item());
    guard(r);

    backward(objective);
    if (opt_d_) {
        // The generator pass also reached D through D(x, y'); D learns from L_D only.
        opt_d_->zero_grad();
        backward(L.d_loss);
    }
    opt_g_->step(lr);
    if (opt_d_) opt_d_->step(lr);
    return r;
}

StepRecord Trainer::step_stage2(double lr) {
    const bool needs_encoder =
        config_.generator.injection_mode != InjectionMode::none || config_.weights.lambda3 != 0.0;
    if (needs_encoder && !encoder_loaded_) {
        throw ConfigError("encoder", "stage 2 needs a trained encoder checkpoint");
    }
    const auto [x, y] = next_batch();
    opt_g_->zero_grad();

    Var<float> deg;
    {
        NoGradGuard no_grad;
        deg = e_->encode(y);
    }
    const GeneratorOutput<float> out = deblur(*g_d_, y, deg);
    Var<float> psnr_terms;
    for (const auto& stage : out.stages) psnr_terms = sum_defined(psnr_terms, psnr_loss(x, stage));
    Var<float> total = psnr_terms;
    double blur_value = 0.0;
    if (config_.weights.lambda3 != 0.0) {
        const Var<float> blur = blur_aware_loss(*e_, out.final(), x);
        blur_value = blur.item();
        total = add(total, scale(blur, static_cast<float>(config_.weights.lambda3)));
    }

    StepRecord r;
    r.step = iteration_ + 1;
    r.lr = lr;
    r.losses = {{"psnr", -psnr_loss(x, out.final().detach()).item()},
                {"blur", blur_value},
                {"objective", total.item()}};
    guard(r);

    backward(total);
    opt_g_->step(lr);
    return r;
}

void Trainer::run(const std::function<bool(const StepRecord&)>& on_step) {
    while (iteration_ < config_.total_iters) {
        const StepRecord r = step();
        if (on_step && !on_step(r)) break;
    }
}

EvalReport Trainer::evaluate(const std::vector<ImagePair>& pairs) const {
    EvalReport report;
    if (pairs.empty()) return report;
    NoGradGuard no_grad;
    report.has_reblur = g_r_ != nullptr;
    const std::size_t chunk = static_cast<std::size_t>(config_.batch_size);
    for (std::size_t start = 0; start < pairs.size(); start += chunk) {
        const std::size_t end = std::min(pairs.size(), start + chunk);
        std::vector<Image> sharp, blurry;
        for (std::size_t i = start; i < end; ++i) {
            sharp.push_back(pairs[i].sharp);
            blurry.push_back(pairs[i].blurry);
        }
        const auto x = Var<float>::constant(to_tensor<float>(sharp));
        const auto y = Var<float>::constant(to_tensor<float>(blurry));
        const Var<float> deg = e_->encode(y);
        const Tensor<float> restored = clamp01((*g_d_)(y, deg).final().value());
        Tensor<float> reblurred;
        if (g_r_) reblurred = clamp01((*g_r_)(x, deg).final().value());
        for (std::size_t i = 0; i < sharp.size(); ++i) {
            const Image out = from_tensor(restored, static_cast<int>(i));
            report.input_psnr += psnr(blurry[i], sharp[i]);
            report.deblur_psnr += psnr(out, sharp[i]);
            report.deblur_ssim += ssim(out, sharp[i]);
            if (g_r_) report.reblur_psnr += psnr(from_tensor(reblurred, static_cast<int>(i)), blurry[i]);
        }
    }
    report.n = static_cast<int>(pairs.size());
    const double n = report.n;
    report.input_psnr /= n;
    report.deblur_psnr /= n;
    report.deblur_ssim /= n;
    report.reblur_psnr /= n;
    report.blurry_vs_sharp = report.input_psnr;
    return report;
}

Checkpoint Trainer::checkpoint() const {
    Checkpoint c;
    c.header["kind"] = "drl-train";
    c.header["stage"] = config_.stage;
    c.header["iteration"] = iteration_;
    c.header["config"] = to_json(config_);
    c.header["config_hash"] = config_.hash();
    c.header["encoder_loaded"] = encoder_loaded_;
    c.header["rng"] = {{"augment", augment_rng_.state()}, {"batches", batches_.state()}};
    c.put(all_parameters());
    opt_g_->save(c, "opt_g");
    if (opt_d_) opt_d_->save(c, "opt_d");
    return c;
}

void Trainer::resume(const Checkpoint& checkpoint) {
    const auto& h = checkpoint.header;
    if (h.value("kind", "") != "drl-train") throw IntegrityError("not a training checkpoint");
    if (h.at("stage").get<int>() != config_.stage) throw ConfigError("stage", "checkpoint is from another stage");
    if (h.at("config_hash").get<std::uint64_t>() != config_.hash()) {
        throw ConfigError("config", "checkpoint was written with a different configuration");
    }
    if (config_.stage == 2 && checkpoint.has_prefix("G_r.") && !g_r_) {
        Rng rng(0);
        g_r_ = std::make_unique<Generator<float>>(config_.generator, rng);
        set_requires_grad(g_r_->parameters("G_r"), false);
    }
    checkpoint.restore(all_parameters());
    opt_g_->load(checkpoint, "opt_g");
    if (opt_d_) opt_d_->load(checkpoint, "opt_d");
    augment_rng_.set_state(h.at("rng").at("augment").get<std::string>());
    batches_.set_state(h.at("rng").at("batches").get<std::string>());
    iteration_ = h.at("iteration").get<int>();
    encoder_loaded_ = h.at("encoder_loaded").get<bool>();
    if (config_.stage == 2) e_->freeze();
}

// ---------------------------------------------------------------------------
// Runs

void train_with_outputs(Trainer& trainer, const RunOptions& options) {
    const int stage = trainer.config().stage;
    const int every = trainer.config().eval_every;
    std::ofstream metrics;
    if (!options.out_dir.empty()) {
        std::filesystem::create_directories(options.out_dir);
        const auto mode = trainer.iteration() > 0 ? std::ios::app : std::ios::trunc;
        metrics.open(options.out_dir / "metrics.jsonl", std::ios::out | mode);
        if (!metrics) throw IoError("cannot write " + (options.out_dir / "metrics.jsonl").string());
    }
    auto emit_eval = [&](int step) {
        if (options.validation.empty()) return;
        nlohmann::json j{{"stage", stage}, {"step", step}, {"eval", trainer.evaluate(options.validation).to_json()}};
        if (metrics.is_open()) metrics << j.dump() << '\n' << std::flush;
        if (options.log) *options.log << j.dump() << std::endl;
    };
    trainer.run([&](const StepRecord& r) {
        if (metrics.is_open()) metrics << r.to_json(stage).dump() << '\n';
        if (every > 0 && r.step % every == 0) {
            if (!options.out_dir.empty()) {
                std::ostringstream name;
                name << "ckpt_" << std::setw(6) << std::setfill('0') << r.step << ".bin";
                save_checkpoint(trainer.checkpoint(), options.out_dir / name.str());
            }
            emit_eval(r.step);
        }
        return true;
    });
    if (!options.out_dir.empty()) save_checkpoint(trainer.checkpoint(), options.out_dir / "final.bin");
    if (every == 0 || trainer.iteration() % every != 0) emit_eval(trainer.iteration());
}

AblationResult run_ablation(Ablation ablation, const TrainConfig& stage1_config, const TrainConfig& stage2_config,
                            const std::vector<ImagePair>& train, const std::vector<ImagePair>& validation,
                            const Checkpoint* shared_stage1, Checkpoint* stage1_out) {
    TrainConfig s1 = apply_ablation(stage1_config, ablation);
    TrainConfig s2 = apply_ablation(stage2_config, ablation);
    s1.stage = 1;
    s2.stage = 2;

    AblationResult result;
    result.ablation = ablation;
    result.config_hash = s2.hash();

    Trainer stage2(s2, train);
    if (ablation != Ablation::without_degradation) {
        Checkpoint encoder;
        const bool reuse = shared_stage1 != nullptr &&
                           (ablation == Ablation::full || ablation == Ablation::without_blur_loss);
        if (reuse) {
            encoder = *shared_stage1;
        } else {
            Trainer stage1(s1, train);
            stage1.run();
            encoder = stage1.checkpoint();
        }
        stage2.load_encoder(encoder);
        if (stage1_out) *stage1_out = std::move(encoder);
    }
    stage2.run();
    result.eval = stage2.evaluate(validation);
    return result;
}

}  // namespace drl
