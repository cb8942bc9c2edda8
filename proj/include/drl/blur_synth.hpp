#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "drl/image.hpp"
#include "drl/random.hpp"

namespace drl {

struct DatasetConfig {
    int num_pairs = 8;
    int patch_size = 64;
    std::uint64_t seed = 0;
    double max_magnitude = 8.0;
    int max_segments = 3;
    bool augment = true;
    // Per-pixel change of the motion vector inside a region, in px/px.
    double smoothness = 0.05;
    double max_noise_sigma = 0.01;

    /// Throws ConfigError naming the first invalid field.
    void validate() const;
};

/// Per-pixel blur trajectory: the exposure sweeps p + v(p) * t for t in [-1/2, 1/2].
struct MotionField {
    Image::RowMatrix dx;
    Image::RowMatrix dy;
    // Region index each pixel was generated from; regions are blended near boundaries.
    Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> labels;
    double max_magnitude = 0.0;

    [[nodiscard]] int height() const { return static_cast<int>(dx.rows()); }
    [[nodiscard]] int width() const { return static_cast<int>(dx.cols()); }
    [[nodiscard]] bool empty() const { return dx.size() == 0; }

    static MotionField uniform(int height, int width, double vx, double vy);
};

/// Truncation radius of the Gaussian used to blend region boundaries. Pixels whose
/// (2r+1)^2 neighbourhood holds a single label carry that region's affine motion.
inline constexpr int kFieldBlendRadius = 6;
inline constexpr double kFieldBlendSigma = 2.0;

/// Bound on |v(p + e) - v(p)| per component for unit steps e between pixels that
/// are away from region boundaries.
double field_gradient_bound(const DatasetConfig& config);

MotionField synthesize_motion_field(Rng& rng, int height, int width, const DatasetConfig& config);

/// max(3, ceil(2 * max_magnitude) + 1)
int default_blur_steps(double max_magnitude);

/// Averages `steps` bilinear samples (clamp-to-edge) along p + field(p) * t,
/// t evenly spaced in [-1/2, 1/2], then adds N(0, noise_sigma) and clamps to [0, 1].
Image apply_spatially_varying_blur(const Image& sharp, const MotionField& field, int steps, double noise_sigma,
                                   Rng& rng);

struct ImagePair {
    Image sharp;
    Image blurry;
    MotionField field;  // empty once cropped/augmented or loaded from disk
    double noise_sigma = 0.0;
    std::uint64_t field_seed = 0;
    std::string id;
};

/// Procedural scene with gradients, shapes, band-limited noise and stroke glyphs.
Image synthesize_sharp_image(Rng& rng, int height, int width);

/// Pair `index` of the dataset; depends only on (config, index).
ImagePair make_pair(const DatasetConfig& config, int index);

std::vector<ImagePair> make_dataset(const DatasetConfig& config);

struct AugmentParams {
    int top = 0;
    int left = 0;
    bool flip = false;
    int quarter_turns = 0;
};

/// Applies the same crop and flip/rotation to both images of the pair.
ImagePair apply_augment(const ImagePair& pair, int size, const AugmentParams& params);

/// Random crop of `size` plus (when `augment`) random horizontal flip and 90 degree rotation.
ImagePair crop_and_augment(const ImagePair& pair, int size, Rng& rng, bool augment = true);

/// Shuffled epochs of index batches; the trailing partial batch is dropped.
class BatchIterator {
public:
    BatchIterator(std::size_t dataset_size, int batch_size, std::uint64_t seed);

    std::vector<std::size_t> next();
    [[nodiscard]] std::size_t batches_per_epoch() const { return size_ / static_cast<std::size_t>(batch_size_); }
    [[nodiscard]] const Rng& rng() const { return rng_; }
    [[nodiscard]] std::string state() const;
    void set_state(const std::string& text);

private:
    void reshuffle();

    std::size_t size_;
    int batch_size_;
    Rng rng_;
    std::vector<std::size_t> order_;
    std::size_t cursor_ = 0;
};

/// Writes `{id}_sharp.png`, `{id}_blur.png` and `manifest.json`.
void save_dataset(const std::vector<ImagePair>& pairs, const DatasetConfig& config,
                  const std::filesystem::path& dir);

/// Loads every `{id}_sharp.png` / `{id}_blur.png` pair in `dir`, sorted by id.
std::vector<ImagePair> load_dataset(const std::filesystem::path& dir);

}  // namespace drl
