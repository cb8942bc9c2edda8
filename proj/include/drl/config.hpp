#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "drl/blur_synth.hpp"

namespace drl {

struct EncoderConfig {
    int in_channels = 3;
    std::array<int, 4> widths{16, 32, 64, 64};
    int latent_channels = 32;

    void validate() const;
};

enum class InjectionMode { sam, concat, none, input_concat };
enum class InjectionScales { all, coarsest_only };

struct MSDINetConfig {
    static constexpr int kScales = 5;

    int in_channels = 3;
    int base_channels = 16;
    int max_channels = 128;
    int stack_depth = 2;
    InjectionMode injection_mode = InjectionMode::sam;
    InjectionScales injection_scales = InjectionScales::all;
    int degradation_channels = 32;
    // When false only the first stacked net receives the degradation map.
    bool inject_all_stacked = true;

    /// Channel width at scale index s (0 = full resolution, 4 = coarsest).
    [[nodiscard]] int channels(int s) const {
        int c = base_channels;
        for (int i = 0; i < s; ++i) c *= 2;
        return c < max_channels ? c : max_channels;
    }

    void validate() const;
};

struct DiscriminatorConfig {
    int scales = 2;
    int base_channels = 32;

    void validate() const;
};

struct ExtractorConfig {
    std::array<int, 5> widths{8, 16, 32, 32, 32};
    std::uint64_t seed = 20220725;
    // Optional checkpoint-format file with pre-trained extractor weights.
    std::string weights_path;
};

struct LossWeights {
    double lambda1 = 30.0;  // perceptual weight in the reblurring objective
    double lambda2 = 10.0;  // L1 weight of the stage-1 deblurring branch
    double lambda3 = 1.0;   // blur-aware weight of the stage-2 objective

    void validate() const;
};

enum class Ablation {
    full,
    without_degradation,
    without_reblurring,
    without_blur_loss,
    injection_single_scale,
    input_concat,
    concat_injection,
};

/// Canonical names as used in ablation tables, e.g. "w/o degradation".
std::string_view ablation_name(Ablation ablation);
/// Accepts the canonical names with or without an "Ours"/"Our" prefix.
Ablation parse_ablation(std::string_view name);
std::vector<std::string> ablation_names();

struct TrainConfig {
    int stage = 1;
    int batch_size = 4;
    int total_iters = 5000;
    double lr_max = 3e-4;
    double lr_min = 1e-7;
    std::uint64_t seed = 0;
    int eval_every = 500;
    int patch_size = 64;
    bool augment = true;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double divergence_threshold = 1e6;
    LossWeights weights;
    Ablation ablation = Ablation::full;
    EncoderConfig encoder;
    MSDINetConfig generator;
    DiscriminatorConfig discriminator;
    ExtractorConfig extractor;

    void validate() const;
    /// FNV-1a of the canonical JSON serialisation.
    [[nodiscard]] std::uint64_t hash() const;
};

/// Sets the flags an ablation entry implies on top of `base`.
TrainConfig apply_ablation(TrainConfig base, Ablation ablation);

nlohmann::json to_json(const DatasetConfig& config);
DatasetConfig dataset_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j);

DatasetConfig load_dataset_config(const std::string& path);
TrainConfig load_train_config(const std::string& path);

}  // namespace drl
