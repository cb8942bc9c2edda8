#include "drl/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "drl/errors.hpp"

namespace drl {

using nlohmann::json;

namespace {

const char* mode_name(InjectionMode m) {
    switch (m) {
        case InjectionMode::sam: return "sam";
        case InjectionMode::concat: return "concat";
        case InjectionMode::none: return "none";
        case InjectionMode::input_concat: return "input_concat";
    }
    return "sam";
}

const char* scales_name(InjectionScales s) { return s == InjectionScales::all ? "all" : "coarsest_only"; }

// Reads fields of one JSON object and rejects keys that were never consumed.
class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
    }

    template <typename T>
    void read(const char* key, T& out) {
        used_.insert(key);
        if (!j_.contains(key)) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception& e) {
            throw ConfigError(name(key), std::string("wrong type (") + e.what() + ")");
        }
    }

    const json* child(const char* key) {
        used_.insert(key);
        return j_.contains(key) ? &j_.at(key) : nullptr;
    }

    [[nodiscard]] std::string name(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    void finish() const {
        for (const auto& [key, value] : j_.items()) {
            if (!used_.contains(key)) throw ConfigError(name(key), "unknown field");
        }
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> used_;
};

std::uint64_t fnv1a(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

json read_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config " + path);
    try {
        return json::parse(is);
    } catch (const json::parse_error& e) {
        throw ConfigError("<root>", std::string("malformed JSON: ") + e.what());
    }
}

}  // namespace

void EncoderConfig::validate() const {
    if (in_channels < 1) throw ConfigError("encoder.in_channels", "must be positive");
    for (int w : widths) {
        if (w < 1) throw ConfigError("encoder.widths", "must be positive");
    }
    if (latent_channels < 1) throw ConfigError("encoder.latent_channels", "must be positive");
}

void MSDINetConfig::validate() const {
    if (in_channels < 1) throw ConfigError("generator.in_channels", "must be positive");
    if (base_channels < 1) throw ConfigError("generator.base_channels", "must be positive");
    if (max_channels < base_channels) throw ConfigError("generator.max_channels", "must be >= base_channels");
    if (stack_depth < 1) throw ConfigError("generator.stack_depth", "must be at least 1");
    if (degradation_channels < 1) throw ConfigError("generator.degradation_channels", "must be positive");
}

void DiscriminatorConfig::validate() const {
    if (scales < 1) throw ConfigError("discriminator.scales", "must be at least 1");
    if (base_channels < 1) throw ConfigError("discriminator.base_channels", "must be positive");
}

void LossWeights::validate() const {
    if (!(lambda1 >= 0.0)) throw ConfigError("weights.lambda1", "must be non-negative");
    if (!(lambda2 >= 0.0)) throw ConfigError("weights.lambda2", "must be non-negative");
    if (!(lambda3 >= 0.0)) throw ConfigError("weights.lambda3", "must be non-negative");
}

void TrainConfig::validate() const {
    if (stage != 1 && stage != 2) throw ConfigError("stage", "must be 1 or 2");
    if (batch_size < 1) throw ConfigError("batch_size", "must be at least 1");
    if (total_iters < 1) throw ConfigError("total_iters", "must be at least 1");
    if (!(lr_min >= 0.0)) throw ConfigError("lr_min", "must be non-negative");
    if (!(lr_min < lr_max)) throw ConfigError("lr_min", "must be smaller than lr_max");
    if (eval_every < 0) throw ConfigError("eval_every", "must be non-negative");
    if (patch_size < 32 || patch_size % 16 != 0) {
        throw ConfigError("patch_size", "must be >= 32 and divisible by 16");
    }
    if (!(divergence_threshold > 0.0)) throw ConfigError("divergence_threshold", "must be positive");
    weights.validate();
    encoder.validate();
    generator.validate();
    discriminator.validate();
    if (generator.degradation_channels != encoder.latent_channels) {
        throw ConfigError("generator.degradation_channels", "must equal encoder.latent_channels");
    }
}

std::uint64_t TrainConfig::hash() const { return fnv1a(to_json(*this).dump()); }

std::string_view ablation_name(Ablation ablation) {
    switch (ablation) {
        case Ablation::full: return "full";
        case Ablation::without_degradation: return "w/o degradation";
        case Ablation::without_reblurring: return "w/o reblurring";
        case Ablation::without_blur_loss: return "w/o blur loss";
        case Ablation::injection_single_scale: return "injection w/o multi-scale";
        case Ablation::input_concat: return "input w/ concat";
        case Ablation::concat_injection: return "w/ concat injection";
    }
    return "full";
}

std::vector<std::string> ablation_names() {
    std::vector<std::string> names;
    for (auto a : {Ablation::full, Ablation::without_degradation, Ablation::without_reblurring,
                   Ablation::without_blur_loss, Ablation::injection_single_scale, Ablation::input_concat,
                   Ablation::concat_injection}) {
        names.emplace_back(ablation_name(a));
    }
    return names;
}

Ablation parse_ablation(std::string_view name) {
    std::string s(name);
    for (const char* prefix : {"Ours ", "Our "}) {
        if (s.starts_with(prefix)) {
            s = s.substr(std::string_view(prefix).size());
            break;
        }
    }
    if (s == "Ours" || s == "ours") s = "full";
    for (auto a : {Ablation::full, Ablation::without_degradation, Ablation::without_reblurring,
                   Ablation::without_blur_loss, Ablation::injection_single_scale, Ablation::input_concat,
                   Ablation::concat_injection}) {
        if (s == ablation_name(a)) return a;
    }
    std::string valid;
    for (const auto& n : ablation_names()) valid += (valid.empty() ? "" : ", ") + ("\"" + n + "\"");
    throw ConfigError("ablation", "unknown ablation \"" + std::string(name) + "\"; valid names: " + valid);
}

TrainConfig apply_ablation(TrainConfig base, Ablation ablation) {
    base.ablation = ablation;
    switch (ablation) {
        case Ablation::full:
        case Ablation::without_reblurring: break;
        case Ablation::without_degradation:
            base.generator.injection_mode = InjectionMode::none;
            base.weights.lambda3 = 0.0;
            break;
        case Ablation::without_blur_loss: base.weights.lambda3 = 0.0; break;
        case Ablation::injection_single_scale: base.generator.injection_scales = InjectionScales::coarsest_only; break;
        case Ablation::input_concat: base.generator.injection_mode = InjectionMode::input_concat; break;
        case Ablation::concat_injection: base.generator.injection_mode = InjectionMode::concat; break;
    }
    return base;
}

json to_json(const DatasetConfig& c) {
    return {{"num_pairs", c.num_pairs},       {"patch_size", c.patch_size},   {"seed", c.seed},
            {"max_magnitude", c.max_magnitude}, {"max_segments", c.max_segments}, {"augment", c.augment},
            {"smoothness", c.smoothness},     {"max_noise_sigma", c.max_noise_sigma}};
}

DatasetConfig dataset_config_from_json(const json& j) {
    DatasetConfig c;
    Section s(j, "");
    s.read("num_pairs", c.num_pairs);
    s.read("patch_size", c.patch_size);
    s.read("seed", c.seed);
    s.read("max_magnitude", c.max_magnitude);
    s.read("max_segments", c.max_segments);
    s.read("augment", c.augment);
    s.read("smoothness", c.smoothness);
    s.read("max_noise_sigma", c.max_noise_sigma);
    s.finish();
    c.validate();
    return c;
}

json to_json(const TrainConfig& c) {
    return {
        {"stage", c.stage},
        {"batch_size", c.batch_size},
        {"total_iters", c.total_iters},
        {"lr_max", c.lr_max},
        {"lr_min", c.lr_min},
        {"seed", c.seed},
        {"eval_every", c.eval_every},
        {"patch_size", c.patch_size},
        {"augment", c.augment},
        {"adam", {{"beta1", c.adam_beta1}, {"beta2", c.adam_beta2}, {"eps", c.adam_eps}}},
        {"divergence_threshold", c.divergence_threshold},
        {"ablation", std::string(ablation_name(c.ablation))},
        {"weights", {{"lambda1", c.weights.lambda1}, {"lambda2", c.weights.lambda2}, {"lambda3", c.weights.lambda3}}},
        {"encoder",
         {{"in_channels", c.encoder.in_channels},
          {"widths", c.encoder.widths},
          {"latent_channels", c.encoder.latent_channels}}},
        {"generator",
         {{"in_channels", c.generator.in_channels},
          {"base_channels", c.generator.base_channels},
          {"max_channels", c.generator.max_channels},
          {"stack_depth", c.generator.stack_depth},
          {"injection_mode", mode_name(c.generator.injection_mode)},
          {"injection_scales", scales_name(c.generator.injection_scales)},
          {"degradation_channels", c.generator.degradation_channels},
          {"inject_all_stacked", c.generator.inject_all_stacked}}},
        {"discriminator", {{"scales", c.discriminator.scales}, {"base_channels", c.discriminator.base_channels}}},
        {"extractor",
         {{"widths", c.extractor.widths}, {"seed", c.extractor.seed}, {"weights_path", c.extractor.weights_path}}},
    };
}

TrainConfig train_config_from_json(const json& j) {
    TrainConfig c;
    Section s(j, "");
    s.read("stage", c.stage);
    s.read("batch_size", c.batch_size);
    s.read("total_iters", c.total_iters);
    s.read("lr_max", c.lr_max);
    s.read("lr_min", c.lr_min);
    s.read("seed", c.seed);
    s.read("eval_every", c.eval_every);
    s.read("patch_size", c.patch_size);
    s.read("augment", c.augment);
    s.read("divergence_threshold", c.divergence_threshold);
    std::string ablation;
    s.read("ablation", ablation);
    if (const json* a = s.child("adam")) {
        Section sa(*a, "adam");
        sa.read("beta1", c.adam_beta1);
        sa.read("beta2", c.adam_beta2);
        sa.read("eps", c.adam_eps);
        sa.finish();
    }
    if (const json* w = s.child("weights")) {
        Section sw(*w, "weights");
        sw.read("lambda1", c.weights.lambda1);
        sw.read("lambda2", c.weights.lambda2);
        sw.read("lambda3", c.weights.lambda3);
        sw.finish();
    }
    if (const json* e = s.child("encoder")) {
        Section se(*e, "encoder");
        se.read("in_channels", c.encoder.in_channels);
        se.read("widths", c.encoder.widths);
        se.read("latent_channels", c.encoder.latent_channels);
        se.finish();
    }
    c.generator.degradation_channels = c.encoder.latent_channels;
    if (const json* g = s.child("generator")) {
        Section sg(*g, "generator");
        sg.read("in_channels", c.generator.in_channels);
        sg.read("base_channels", c.generator.base_channels);
        sg.read("max_channels", c.generator.max_channels);
        sg.read("stack_depth", c.generator.stack_depth);
        std::string mode = mode_name(c.generator.injection_mode);
        sg.read("injection_mode", mode);
        if (mode == "sam") {
            c.generator.injection_mode = InjectionMode::sam;
        } else if (mode == "concat") {
            c.generator.injection_mode = InjectionMode::concat;
        } else if (mode == "none") {
            c.generator.injection_mode = InjectionMode::none;
        } else if (mode == "input_concat") {
            c.generator.injection_mode = InjectionMode::input_concat;
        } else {
            throw ConfigError("generator.injection_mode", "expected sam, concat, none or input_concat");
        }
        std::string scales = scales_name(c.generator.injection_scales);
        sg.read("injection_scales", scales);
        if (scales == "all") {
            c.generator.injection_scales = InjectionScales::all;
        } else if (scales == "coarsest_only") {
            c.generator.injection_scales = InjectionScales::coarsest_only;
        } else {
            throw ConfigError("generator.injection_scales", "expected all or coarsest_only");
        }
        sg.read("degradation_channels", c.generator.degradation_channels);
        sg.read("inject_all_stacked", c.generator.inject_all_stacked);
        sg.finish();
    }
    if (const json* d = s.child("discriminator")) {
        Section sd(*d, "discriminator");
        sd.read("scales", c.discriminator.scales);
        sd.read("base_channels", c.discriminator.base_channels);
        sd.finish();
    }
    if (const json* x = s.child("extractor")) {
        Section sx(*x, "extractor");
        sx.read("widths", c.extractor.widths);
        sx.read("seed", c.extractor.seed);
        sx.read("weights_path", c.extractor.weights_path);
        sx.finish();
    }
    s.finish();
    if (!ablation.empty()) c = apply_ablation(c, parse_ablation(ablation));
    c.validate();
    return c;
}

DatasetConfig load_dataset_config(const std::string& path) { return dataset_config_from_json(read_file(path)); }

TrainConfig load_train_config(const std::string& path) { return train_config_from_json(read_file(path)); }

}  // namespace drl
