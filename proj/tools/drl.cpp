// Command-line entry point: dataset synthesis, the two training stages,
// inference and the representation analyses.
//
// Exit codes: 0 success, 2 usage or invalid configuration, 3 divergence, 4 I/O.

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "drl/analysis.hpp"

namespace fs = std::filesystem;
using namespace drl;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitDivergence = 3;
constexpr int kExitIo = 4;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void print(const nlohmann::json& j) { std::cout << j.dump() << std::endl; }

std::vector<fs::path> png_files(const fs::path& input) {
    std::vector<fs::path> out;
    if (fs::is_directory(input)) {
        for (const auto& entry : fs::directory_iterator(input)) {
            if (entry.is_regular_file() && entry.path().extension() == ".png") out.push_back(entry.path());
        }
        std::sort(out.begin(), out.end());
    } else if (fs::is_regular_file(input)) {
        out.push_back(input);
    }
    if (out.empty()) throw IoError("no PNG images at " + input.string());
    return out;
}

std::vector<ImagePair> require_pairs(const fs::path& dir) {
    auto pairs = load_dataset(dir);
    if (pairs.empty()) throw IoError("no image pairs in " + dir.string());
    return pairs;
}

ModelBundle models_from(const fs::path& ckpt) { return load_models(load_checkpoint(ckpt)); }

void need(const ModelBundle& m, bool encoder, bool reblur, bool deblur) {
    if ((encoder && !m.encoder) || (reblur && !m.reblur) || (deblur && !m.deblur)) {
        throw IoError("checkpoint does not contain the networks this command needs");
    }
}

std::vector<double> parse_alphas(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            const double a = std::stod(item, &used);
            if (used != item.size() || a < 0.0 || a > 1.0) throw std::invalid_argument(item);
            out.push_back(a);
        } catch (const std::exception&) {
            throw UsageError("--alphas expects comma-separated values in [0, 1], got '" + item + "'");
        }
    }
    if (out.empty()) throw UsageError("--alphas is empty");
    return out;
}

// Sibling blurry image of a dataset "<id>_sharp.png", if present.
std::optional<fs::path> blurry_sibling(const fs::path& sharp) {
    const std::string name = sharp.filename().string();
    const std::string suffix = "_sharp.png";
    if (name.size() <= suffix.size() || name.compare(name.size() - suffix.size(), suffix.size(), suffix) != 0) {
        return std::nullopt;
    }
    const fs::path blur = sharp.parent_path() / (name.substr(0, name.size() - suffix.size()) + "_blur.png");
    if (!fs::exists(blur)) return std::nullopt;
    return blur;
}

struct TrainArgs {
    std::string config, data, out, resume, encoder, ablation, val;
};

void add_train_flags(CLI::App* cmd, TrainArgs& a, bool stage2) {
    cmd->add_option("--config", a.config, "Training configuration (JSON)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--data", a.data, "Dataset directory written by `synth`")->required();
    cmd->add_option("--out", a.out, "Output directory for checkpoints and metrics.jsonl")->required();
    cmd->add_option("--resume", a.resume, "Continue from a checkpoint of this stage");
    if (stage2) cmd->add_option("--encoder", a.encoder, "Stage-1 checkpoint providing the frozen encoder");
    cmd->add_option("--ablation", a.ablation,
                    "Ablation entry, e.g. \"w/o degradation\", \"w/o reblurring\", \"w/o blur loss\", "
                    "\"injection w/o multi-scale\", \"input w/ concat\", \"w/ concat injection\"");
    cmd->add_option("--val", a.val, "Held-out dataset directory evaluated every eval_every iterations");
}

int run_train(const TrainArgs& a, int stage) {
    TrainConfig config = load_train_config(a.config);
    if (!a.ablation.empty()) config = apply_ablation(config, parse_ablation(a.ablation));
    config.stage = stage;
    const bool needs_encoder =
        config.generator.injection_mode != InjectionMode::none || config.weights.lambda3 != 0.0;
    if (stage == 2 && a.encoder.empty() && a.resume.empty() && needs_encoder) {
        throw UsageError("train-stage2 requires --encoder (a stage-1 checkpoint)");
    }
    std::optional<Checkpoint> encoder;
    if (!a.encoder.empty()) encoder = load_checkpoint(a.encoder);
    std::optional<Checkpoint> resume;
    if (!a.resume.empty()) resume = load_checkpoint(a.resume);

    Trainer trainer(config, require_pairs(a.data));
    if (encoder) trainer.load_encoder(*encoder);
    if (resume) trainer.resume(*resume);

    RunOptions options;
    options.out_dir = a.out;
    if (!a.val.empty()) options.validation = require_pairs(a.val);
    options.log = &std::cout;
    train_with_outputs(trainer, options);
    print({{"stage", stage},
           {"iterations", trainer.iteration()},
           {"config_hash", config.hash()},
           {"ablation", std::string(ablation_name(config.ablation))},
           {"checkpoint", (fs::path(a.out) / "final.bin").string()}});
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Degradation-representation deblurring: synthesis, training, inference and analysis"};
    app.require_subcommand(1);

    std::string synth_config, synth_out;
    auto* synth = app.add_subcommand("synth", "Generate a synthetic spatially varying blur dataset");
    synth->add_option("--config", synth_config, "Dataset configuration (JSON)")->required()->check(CLI::ExistingFile);
    synth->add_option("--out", synth_out, "Output directory")->required();

    TrainArgs t1, t2;
    auto* train1 = app.add_subcommand("train-stage1", "Jointly train E, G_r, G_d and D");
    add_train_flags(train1, t1, false);
    auto* train2 = app.add_subcommand("train-stage2", "Retrain G_d with the stage-1 encoder frozen");
    add_train_flags(train2, t2, true);

    std::string ckpt, input, out, degradation_source, data, alphas_text = "0,0.25,0.5,0.75,1";
    double fraction = 0.1;
    auto* deblur_cmd = app.add_subcommand("deblur", "Deblur a PNG or every PNG in a directory");
    auto* reblur_cmd = app.add_subcommand("reblur", "Reblur sharp PNGs with a degradation taken from a blurry PNG");
    for (auto* cmd : {deblur_cmd, reblur_cmd}) {
        cmd->add_option("--ckpt", ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
        cmd->add_option("--input", input, "PNG file or directory")->required()->check(CLI::ExistingPath);
        cmd->add_option("--out", out, "Output directory")->required();
    }
    reblur_cmd->add_option("--degradation-source", degradation_source,
                           "Blurry PNG whose degradation is applied (default: the input's <id>_blur.png sibling)")
        ->check(CLI::ExistingFile);

    auto* eval_cmd = app.add_subcommand("eval", "Mean PSNR/SSIM and blurriest/sharpest split of the deblurrer");
    auto* interp_cmd = app.add_subcommand("interpolate", "Reblur along E(x) -> E(y) interpolations");
    auto* swap_cmd = app.add_subcommand("swap", "Reblur A with the degradation of blur(B)");
    auto* decouple_cmd = app.add_subcommand("decouple", "Contextual-similarity decoupleness table");
    for (auto* cmd : {eval_cmd, interp_cmd, swap_cmd, decouple_cmd}) {
        cmd->add_option("--ckpt", ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
        cmd->add_option("--data", data, "Dataset directory")->required();
        cmd->add_option("--out", out, "Output directory");
    }
    for (auto* cmd : {interp_cmd, swap_cmd, decouple_cmd}) cmd->get_option("--out")->required();
    eval_cmd->add_option("--fraction", fraction, "Share of pairs in the blurriest and sharpest subsets")
        ->check(CLI::Range(0.0, 0.5));
    interp_cmd->add_option("--alphas", alphas_text, "Comma-separated interpolation weights in [0, 1]");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        if (synth->parsed()) {
            const DatasetConfig config = load_dataset_config(synth_config);
            const auto pairs = make_dataset(config);
            save_dataset(pairs, config, synth_out);
            double mean = 0.0;
            for (const auto& p : pairs) mean += psnr(p.blurry, p.sharp);
            print({{"pairs", pairs.size()}, {"mean_input_psnr", mean / static_cast<double>(pairs.size())}});
            return 0;
        }
        if (train1->parsed()) return run_train(t1, 1);
        if (train2->parsed()) return run_train(t2, 2);

        if (deblur_cmd->parsed()) {
            const ModelBundle m = models_from(ckpt);
            need(m, true, false, true);
            fs::create_directories(out);
            int n = 0;
            for (const auto& path : png_files(input)) {
                save_image(encode_and_deblur(m, load_image(path)), fs::path(out) / path.filename());
                ++n;
            }
            print({{"command", "deblur"}, {"images", n}});
            return 0;
        }
        if (reblur_cmd->parsed()) {
            const ModelBundle m = models_from(ckpt);
            need(m, true, true, false);
            fs::create_directories(out);
            int n = 0;
            for (const auto& path : png_files(input)) {
                fs::path source = degradation_source;
                if (source.empty()) {
                    const auto sibling = blurry_sibling(path);
                    if (!sibling) throw UsageError("no --degradation-source and no blurry sibling for " + path.string());
                    source = *sibling;
                }
                save_image(encode_and_reblur(m, load_image(path), load_image(source)), fs::path(out) / path.filename());
                ++n;
            }
            print({{"command", "reblur"}, {"images", n}});
            return 0;
        }

        const ModelBundle m = models_from(ckpt);
        const auto pairs = require_pairs(data);
        if (!out.empty()) fs::create_directories(out);

        if (eval_cmd->parsed()) {
            need(m, true, false, true);
            std::vector<Image> outputs;
            // Scored on the 8-bit values that `deblur` writes.
            for (const auto& p : pairs) outputs.push_back(quantize(encode_and_deblur(m, p.blurry)));
            if (!out.empty()) {
                for (std::size_t i = 0; i < pairs.size(); ++i) {
                    save_image(outputs[i], fs::path(out) / (pairs[i].id + "_deblur.png"));
                }
            }
            print(evaluate_outputs(pairs, outputs, fraction).to_json());
            return 0;
        }

        need(m, true, true, false);
        if (interp_cmd->parsed()) {
            const auto alphas = parse_alphas(alphas_text);
            for (const auto& p : pairs) {
                const auto images = interpolate_degradations(p.sharp, p.blurry, *m.encoder, *m.reblur, alphas);
                save_image(make_contact_sheet({images}), fs::path(out) / (p.id + "_interp.png"));
                nlohmann::json sharpness = nlohmann::json::array();
                for (const auto& img : images) sharpness.push_back(drl::sharpness(img));
                print({{"id", p.id}, {"alphas", alphas}, {"sharpness", sharpness}});
            }
            return 0;
        }
        if (swap_cmd->parsed()) {
            if (pairs.size() < 2) throw IoError("swap needs at least two pairs");
            for (std::size_t k = 0; k + 1 < pairs.size(); k += 2) {
                const auto& a = pairs[k];
                const auto& b = pairs[k + 1];
                const Image swapped = swap_reblur(a.sharp, b.blurry, *m.encoder, *m.reblur);
                save_image(make_contact_sheet({{a.sharp, b.blurry, swapped}}),
                           fs::path(out) / (a.id + "_with_" + b.id + ".png"));
                print({{"a", a.id},
                       {"b", b.id},
                       {"sharpness_a", sharpness(a.sharp)},
                       {"sharpness_swap", sharpness(swapped)},
                       {"l1_swap_a", (swapped.data() - a.sharp.data()).abs().mean()}});
            }
            return 0;
        }
        if (decouple_cmd->parsed()) {
            const DecouplenessReport r = decoupleness_report(pairs, *m.encoder, *m.reblur);
            std::ofstream table(fs::path(out) / "decouple.jsonl");
            for (const auto& d : r.details) {
                table << nlohmann::json{{"a", d.a_id},
                                        {"b", d.b_id},
                                        {"cx_blurA_A", d.blur_a_vs_a},
                                        {"cx_reblurA_degB_A", d.reblur_vs_a},
                                        {"cx_blurA_B", d.blur_a_vs_b},
                                        {"cx_reblurA_degB_B", d.reblur_vs_b}}
                             .dump()
                      << '\n';
            }
            print(r.to_json());
            return 0;
        }
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const ConfigError& e) {
        std::cerr << "invalid configuration: " << e.what() << '\n';
        return kExitUsage;
    } catch (const DivergenceError& e) {
        std::cerr << "diverged: " << e.what() << '\n';
        return kExitDivergence;
    } catch (const IoError& e) {
        std::cerr << "I/O error: " << e.what() << '\n';
        return kExitIo;
    } catch (const IntegrityError& e) {
        std::cerr << "corrupt checkpoint: " << e.what() << '\n';
        return kExitIo;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "I/O error: " << e.what() << '\n';
        return kExitIo;
    } catch (const DimensionError& e) {
        std::cerr << "dimension error: " << e.what() << '\n';
        return kExitUsage;
    }
    return 0;
}
