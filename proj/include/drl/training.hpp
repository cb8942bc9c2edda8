#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "drl/blur_synth.hpp"
#include "drl/checkpoint.hpp"
#include "drl/losses.hpp"
#include "drl/metrics.hpp"
#include "drl/optim.hpp"

namespace drl {

/// Networks restored from a checkpoint for inference. Members absent from the
/// checkpoint stay null.
struct ModelBundle {
    TrainConfig config;
    std::unique_ptr<DegradationEncoder<float>> encoder;
    std::unique_ptr<Generator<float>> reblur;
    std::unique_ptr<Generator<float>> deblur;
};

ModelBundle load_models(const Checkpoint& checkpoint);

/// Inference helpers on single images. Inputs whose sides are not multiples of
/// 16 are reflect-padded and the output cropped back. Outputs are clamped to [0, 1].
Image encode_and_deblur(const ModelBundle& models, const Image& blurry);
Image encode_and_reblur(const ModelBundle& models, const Image& sharp, const Image& degradation_source);
/// Raw degradation map E(image), 1 x C_d x H/16 x W/16.
Tensor<float> degradation_of(const DegradationEncoder<float>& encoder, const Image& image);
Image reblur_with(const Generator<float>& g_r, const Image& sharp, const Tensor<float>& deg);

struct StepRecord {
    int step = 0;  // 1-based index of the completed iteration
    double lr = 0.0;
    // Stage 1: adversarial, perceptual, g_total, d_loss, deblur. Stage 2: psnr, blur, total.
    std::vector<std::pair<std::string, double>> losses;

    [[nodiscard]] double get(const std::string& name) const;
    [[nodiscard]] nlohmann::json to_json(int stage) const;
};

struct EvalReport {
    int n = 0;
    double input_psnr = 0.0;      // PSNR(y, x)
    double deblur_psnr = 0.0;     // PSNR(x', x)
    double deblur_ssim = 0.0;
    double reblur_psnr = 0.0;     // PSNR(y', y), stage 1 only
    double blurry_vs_sharp = 0.0; // PSNR(x, y), equal to input_psnr
    bool has_reblur = false;

    [[nodiscard]] nlohmann::json to_json() const;
};

/// Owns the networks and optimizers of one training stage.
///
/// Stage 1 trains {E, G_r, G_d} jointly and D separately; under the
/// "w/o reblurring" ablation G_r and D are not built. Stage 2 needs an encoder
/// from load_encoder(), freezes it and trains a freshly initialised G_d.
class Trainer {
public:
    Trainer(TrainConfig config, std::vector<ImagePair> train);

    /// Stage 2 only: copies E (and G_r for later analysis) from a checkpoint and
    /// freezes E. Any G_d in the checkpoint is ignored.
    void load_encoder(const Checkpoint& checkpoint);

    StepRecord step();
    /// Runs until total_iters. `on_step` is called after every iteration;
    /// returning false stops early.
    void run(const std::function<bool(const StepRecord&)>& on_step = {});

    EvalReport evaluate(const std::vector<ImagePair>& pairs) const;

    [[nodiscard]] Checkpoint checkpoint() const;
    void resume(const Checkpoint& checkpoint);

    /// Replaces the cosine schedule with a constant rate (nullopt restores it).
    void set_learning_rate_override(std::optional<double> lr) { lr_override_ = lr; }
    [[nodiscard]] int iteration() const { return iteration_; }
    [[nodiscard]] const TrainConfig& config() const { return config_; }
    [[nodiscard]] bool reblurring() const { return g_r_ != nullptr && d_ != nullptr; }

    DegradationEncoder<float>& encoder() { return *e_; }
    Generator<float>* reblur_generator() { return g_r_.get(); }
    Generator<float>& deblur_generator() { return *g_d_; }
    MultiScaleDiscriminator<float>* discriminator() { return d_.get(); }
    const FeatureExtractor<float>& extractor() const { return *extractor_; }
    [[nodiscard]] const Adam<float>& generator_optimizer() const { return *opt_g_; }
    [[nodiscard]] const Adam<float>* discriminator_optimizer() const { return opt_d_.get(); }

    /// Parameters of every network present, with their checkpoint names.
    [[nodiscard]] ParamList<float> all_parameters() const;

private:
    std::pair<Var<float>, Var<float>> next_batch();
    StepRecord step_stage1(double lr);
    StepRecord step_stage2(double lr);
    void guard(const StepRecord& record) const;

    TrainConfig config_;
    std::vector<ImagePair> train_;
    std::unique_ptr<DegradationEncoder<float>> e_;
    std::unique_ptr<Generator<float>> g_r_;
    std::unique_ptr<Generator<float>> g_d_;
    std::unique_ptr<MultiScaleDiscriminator<float>> d_;
    std::unique_ptr<FeatureExtractor<float>> extractor_;
    std::unique_ptr<Adam<float>> opt_g_;
    std::unique_ptr<Adam<float>> opt_d_;
    BatchIterator batches_;
    Rng augment_rng_;
    int iteration_ = 0;
    bool encoder_loaded_ = false;
    std::optional<double> lr_override_;
};

/// Everything a CLI-style run needs besides the trainer itself.
struct RunOptions {
    std::filesystem::path out_dir;  // checkpoints and metrics.jsonl; empty disables writing
    std::vector<ImagePair> validation;
    std::ostream* log = nullptr;    // JSON line per eval
};

/// Trains to completion, writing `ckpt_<iter>.bin` every eval_every iterations,
/// `final.bin`, and one JSON record per step to metrics.jsonl.
void train_with_outputs(Trainer& trainer, const RunOptions& options);

struct AblationResult {
    Ablation ablation = Ablation::full;
    std::uint64_t config_hash = 0;
    EvalReport eval;
};

/// Runs the stages an ablation needs and evaluates the stage-2 deblurrer on
/// `validation`. "w/o degradation" skips stage 1 (nothing to learn for E).
/// When `shared_stage1` is given it is used for entries whose stage 1 equals the
/// full model's ("full", "w/o blur loss").
AblationResult run_ablation(Ablation ablation, const TrainConfig& stage1_config, const TrainConfig& stage2_config,
                            const std::vector<ImagePair>& train, const std::vector<ImagePair>& validation,
                            const Checkpoint* shared_stage1 = nullptr, Checkpoint* stage1_out = nullptr);

}  // namespace drl
