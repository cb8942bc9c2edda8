#include "drl/blur_synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>

#include <nlohmann/json.hpp>

#include "drl/config.hpp"
#include "drl/errors.hpp"

namespace drl {

void DatasetConfig::validate() const {
    if (num_pairs < 1) throw ConfigError("num_pairs", "must be at least 1");
    if (patch_size < 32) throw ConfigError("patch_size", "must be at least 32");
    if (patch_size % 16 != 0) throw ConfigError("patch_size", "must be divisible by 16, got " + std::to_string(patch_size));
    if (!(max_magnitude >= 0.0)) throw ConfigError("max_magnitude", "must be non-negative");
    if (max_segments < 1) throw ConfigError("max_segments", "must be at least 1");
    if (!(smoothness >= 0.0)) throw ConfigError("smoothness", "must be non-negative");
    if (!(max_noise_sigma >= 0.0 && max_noise_sigma <= 0.02)) {
        throw ConfigError("max_noise_sigma", "must lie in [0, 0.02]");
    }
}

MotionField MotionField::uniform(int height, int width, double vx, double vy) {
    MotionField f;
    f.dx = Image::RowMatrix::Constant(height, width, vx);
    f.dy = Image::RowMatrix::Constant(height, width, vy);
    f.labels = decltype(f.labels)::Zero(height, width);
    f.max_magnitude = std::hypot(vx, vy);
    return f;
}

double field_gradient_bound(const DatasetConfig& config) {
    // Each Jacobian entry is bounded by `smoothness`; magnitude clipping is a
    // radial projection and therefore 1-Lipschitz in the Euclidean norm.
    return std::sqrt(2.0) * config.smoothness;
}

namespace {

Eigen::VectorXd blend_kernel() {
    Eigen::VectorXd g(2 * kFieldBlendRadius + 1);
    for (int i = -kFieldBlendRadius; i <= kFieldBlendRadius; ++i) {
        g[i + kFieldBlendRadius] = std::exp(-(i * i) / (2.0 * kFieldBlendSigma * kFieldBlendSigma));
    }
    return g / g.sum();
}

// Separable blur with clamp-to-edge borders.
Image::RowMatrix smooth_clamped(const Image::RowMatrix& in, const Eigen::VectorXd& g) {
    const auto h = static_cast<int>(in.rows());
    const auto w = static_cast<int>(in.cols());
    const int r = kFieldBlendRadius;
    Image::RowMatrix tmp(h, w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int k = -r; k <= r; ++k) acc += g[k + r] * in(y, std::clamp(x + k, 0, w - 1));
            tmp(y, x) = acc;
        }
    }
    Image::RowMatrix out(h, w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int k = -r; k <= r; ++k) acc += g[k + r] * tmp(std::clamp(y + k, 0, h - 1), x);
            out(y, x) = acc;
        }
    }
    return out;
}

double bilinear_clamped(const Image& img, int c, double y, double x) {
    const int h = img.height();
    const int w = img.width();
    y = std::clamp(y, 0.0, static_cast<double>(h - 1));
    x = std::clamp(x, 0.0, static_cast<double>(w - 1));
    const int y0 = std::min(static_cast<int>(std::floor(y)), h - 1);
    const int x0 = std::min(static_cast<int>(std::floor(x)), w - 1);
    const int y1 = std::min(y0 + 1, h - 1);
    const int x1 = std::min(x0 + 1, w - 1);
    const double fy = y - y0;
    const double fx = x - x0;
    const double top = (1.0 - fx) * img(c, y0, x0) + fx * img(c, y0, x1);
    const double bottom = (1.0 - fx) * img(c, y1, x0) + fx * img(c, y1, x1);
    return (1.0 - fy) * top + fy * bottom;
}

struct Segment {
    double x0, y0, x1, y1;
};

double distance_to_segment(double px, double py, const Segment& s) {
    const double vx = s.x1 - s.x0;
    const double vy = s.y1 - s.y0;
    const double len2 = vx * vx + vy * vy;
    double t = len2 > 0.0 ? ((px - s.x0) * vx + (py - s.y0) * vy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    return std::hypot(px - (s.x0 + t * vx), py - (s.y0 + t * vy));
}

std::array<double, 3> random_color(Rng& rng) { return {rng.uniform(), rng.uniform(), rng.uniform()}; }

}  // namespace

MotionField synthesize_motion_field(Rng& rng, int height, int width, const DatasetConfig& config) {
    if (height < 32 || width < 32) throw DimensionError("motion field needs at least 32x32 pixels");
    const int regions = rng.uniform_int(1, config.max_segments);
    const double s = config.smoothness;

    struct Region {
        double cx, cy, ax, ay, jxx, jxy, jyx, jyy;
    };
    std::vector<Region> model(regions);
    for (auto& r : model) {
        r.cx = rng.uniform(0.0, width);
        r.cy = rng.uniform(0.0, height);
        const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
        const double magnitude = rng.uniform(0.0, config.max_magnitude);
        r.ax = magnitude * std::cos(angle);
        r.ay = magnitude * std::sin(angle);
        r.jxx = rng.uniform(-s, s);
        r.jxy = rng.uniform(-s, s);
        r.jyx = rng.uniform(-s, s);
        r.jyy = rng.uniform(-s, s);
    }

    MotionField field;
    field.max_magnitude = config.max_magnitude;
    field.labels.resize(height, width);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            int best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (int k = 0; k < regions; ++k) {
                const double d = std::hypot(x - model[k].cx, y - model[k].cy);
                if (d < best_d) {
                    best_d = d;
                    best = k;
                }
            }
            field.labels(y, x) = best;
        }
    }

    const Eigen::VectorXd g = blend_kernel();
    std::vector<Image::RowMatrix> weights(regions);
    for (int k = 0; k < regions; ++k) {
        weights[k] = smooth_clamped((field.labels.array() == k).cast<double>().matrix(), g);
    }

    field.dx.resize(height, width);
    field.dy.resize(height, width);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            double vx = 0.0;
            double vy = 0.0;
            double wsum = 0.0;
            for (int k = 0; k < regions; ++k) {
                const double wk = weights[k](y, x);
                if (wk == 0.0) continue;
                const Region& r = model[k];
                vx += wk * (r.ax + r.jxx * (x - r.cx) + r.jxy * (y - r.cy));
                vy += wk * (r.ay + r.jyx * (x - r.cx) + r.jyy * (y - r.cy));
                wsum += wk;
            }
            vx /= wsum;
            vy /= wsum;
            const double norm = std::hypot(vx, vy);
            if (norm > config.max_magnitude) {
                const double f = norm > 0.0 ? config.max_magnitude / norm : 0.0;
                vx *= f;
                vy *= f;
            }
            field.dx(y, x) = vx;
            field.dy(y, x) = vy;
        }
    }
    return field;
}

int default_blur_steps(double max_magnitude) {
    return std::max(3, static_cast<int>(std::ceil(2.0 * max_magnitude)) + 1);
}

Image apply_spatially_varying_blur(const Image& sharp, const MotionField& field, int steps, double noise_sigma,
                                   Rng& rng) {
    if (steps < 1) throw std::invalid_argument("blur steps must be >= 1");
    if (field.height() != sharp.height() || field.width() != sharp.width()) {
        throw DimensionError("motion field does not match image size");
    }
    Image out(sharp.channels(), sharp.height(), sharp.width());
    out.id = sharp.id;
    std::vector<double> ts(steps);
    for (int j = 0; j < steps; ++j) ts[j] = steps == 1 ? 0.0 : -0.5 + static_cast<double>(j) / (steps - 1);
    for (int y = 0; y < sharp.height(); ++y) {
        for (int x = 0; x < sharp.width(); ++x) {
            const double vx = field.dx(y, x);
            const double vy = field.dy(y, x);
            if (vx == 0.0 && vy == 0.0) {
                for (int c = 0; c < sharp.channels(); ++c) out(c, y, x) = sharp(c, y, x);
                continue;
            }
            for (int c = 0; c < sharp.channels(); ++c) {
                double acc = 0.0;
                for (double t : ts) acc += bilinear_clamped(sharp, c, y + vy * t, x + vx * t);
                out(c, y, x) = acc / steps;
            }
        }
    }
    if (noise_sigma > 0.0) {
        for (std::ptrdiff_t i = 0; i < out.data().size(); ++i) out.data()[i] += rng.normal(0.0, noise_sigma);
        out.clamp01();
    }
    return out;
}

Image synthesize_sharp_image(Rng& rng, int height, int width) {
    Image img(3, height, width);

    // Linear colour gradient.
    const auto c0 = random_color(rng);
    const auto c1 = random_color(rng);
    const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double ux = std::cos(theta);
    const double uy = std::sin(theta);
    const double extent = std::abs(ux) * width + std::abs(uy) * height;
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const double t = ((x - width / 2.0) * ux + (y - height / 2.0) * uy) / extent + 0.5;
            for (int c = 0; c < 3; ++c) img(c, y, x) = c0[c] + (c1[c] - c0[c]) * t;
        }
    }

    // Band-limited texture from a few oriented sinusoids.
    const int waves = rng.uniform_int(2, 5);
    for (int k = 0; k < waves; ++k) {
        const double amp = rng.uniform(0.02, 0.08);
        const double freq = rng.uniform(0.04, 0.3);
        const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
        const double ang = rng.uniform(0.0, std::numbers::pi);
        const auto tint = random_color(rng);
        const double fx = 2.0 * std::numbers::pi * freq * std::cos(ang);
        const double fy = 2.0 * std::numbers::pi * freq * std::sin(ang);
        for (int y = 0; y < height; ++y) {
            for (int x = 0; x < width; ++x) {
                const double v = amp * std::sin(fx * x + fy * y + phi);
                for (int c = 0; c < 3; ++c) img(c, y, x) += v * (0.5 + tint[c]);
            }
        }
    }

    // Filled rectangles and ellipses.
    const int shapes = rng.uniform_int(3, 7);
    for (int k = 0; k < shapes; ++k) {
        const bool ellipse = rng.uniform() < 0.5;
        const double cx = rng.uniform(0.0, width);
        const double cy = rng.uniform(0.0, height);
        const double rx = rng.uniform(3.0, width / 4.0);
        const double ry = rng.uniform(3.0, height / 4.0);
        const auto color = random_color(rng);
        for (int y = 0; y < height; ++y) {
            for (int x = 0; x < width; ++x) {
                const double nx = (x - cx) / rx;
                const double ny = (y - cy) / ry;
                const bool inside = ellipse ? nx * nx + ny * ny <= 1.0 : std::abs(nx) <= 1.0 && std::abs(ny) <= 1.0;
                if (inside) {
                    for (int c = 0; c < 3; ++c) img(c, y, x) = color[c];
                }
            }
        }
    }

    // Text-like rows of stroke glyphs.
    const int lines = rng.uniform_int(1, 3);
    for (int l = 0; l < lines; ++l) {
        const double cell = rng.uniform(5.0, 9.0);
        const double stroke = rng.uniform(0.6, 1.2);
        const double baseline = rng.uniform(cell, height - cell);
        double cursor = rng.uniform(0.0, width / 3.0);
        const auto ink = random_color(rng);
        std::vector<Segment> segments;
        const int glyphs = rng.uniform_int(3, 7);
        for (int gidx = 0; gidx < glyphs && cursor + cell < width; ++gidx) {
            const int strokes = rng.uniform_int(2, 3);
            for (int s = 0; s < strokes; ++s) {
                segments.push_back({cursor + rng.uniform(0.0, cell), baseline - rng.uniform(0.0, cell),
                                    cursor + rng.uniform(0.0, cell), baseline - rng.uniform(0.0, cell)});
            }
            cursor += cell * rng.uniform(1.1, 1.5);
        }
        for (int y = 0; y < height; ++y) {
            for (int x = 0; x < width; ++x) {
                for (const auto& seg : segments) {
                    if (distance_to_segment(x, y, seg) <= stroke) {
                        for (int c = 0; c < 3; ++c) img(c, y, x) = ink[c];
                        break;
                    }
                }
            }
        }
    }

    img.clamp01();
    return img;
}

ImagePair make_pair(const DatasetConfig& config, int index) {
    Rng scene_rng = Rng::derive(config.seed, static_cast<std::uint64_t>(index));
    ImagePair pair;
    pair.id = [index] {
        char buf[16];
        std::snprintf(buf, sizeof buf, "%05d", index);
        return std::string(buf);
    }();
    pair.sharp = synthesize_sharp_image(scene_rng, config.patch_size, config.patch_size);
    pair.sharp.id = pair.id;
    pair.field_seed = scene_rng.next_u64();
    pair.noise_sigma = scene_rng.uniform(0.0, config.max_noise_sigma);
    Rng field_rng(pair.field_seed);
    pair.field = synthesize_motion_field(field_rng, config.patch_size, config.patch_size, config);
    Rng noise_rng = Rng::derive(pair.field_seed, 1);
    pair.blurry = apply_spatially_varying_blur(pair.sharp, pair.field, default_blur_steps(config.max_magnitude),
                                               pair.noise_sigma, noise_rng);
    pair.blurry.id = pair.id;
    return pair;
}

std::vector<ImagePair> make_dataset(const DatasetConfig& config) {
    config.validate();
    std::vector<ImagePair> pairs;
    pairs.reserve(static_cast<std::size_t>(config.num_pairs));
    for (int i = 0; i < config.num_pairs; ++i) pairs.push_back(make_pair(config, i));
    return pairs;
}

ImagePair apply_augment(const ImagePair& pair, int size, const AugmentParams& params) {
    if (size > std::min(pair.sharp.height(), pair.sharp.width())) {
        throw DimensionError("crop size " + std::to_string(size) + " exceeds image size");
    }
    auto transform = [&](const Image& img) {
        Image out = img.crop(params.top, params.left, size, size);
        if (params.flip) out = out.flipped_horizontal();
        if (params.quarter_turns % 4 != 0) out = out.rotated90(params.quarter_turns);
        return out;
    };
    ImagePair out;
    out.sharp = transform(pair.sharp);
    out.blurry = transform(pair.blurry);
    out.noise_sigma = pair.noise_sigma;
    out.field_seed = pair.field_seed;
    out.id = pair.id;
    return out;
}

ImagePair crop_and_augment(const ImagePair& pair, int size, Rng& rng, bool augment) {
    if (size > std::min(pair.sharp.height(), pair.sharp.width())) {
        throw DimensionError("crop size " + std::to_string(size) + " exceeds image size");
    }
    AugmentParams params;
    params.top = rng.uniform_int(0, pair.sharp.height() - size);
    params.left = rng.uniform_int(0, pair.sharp.width() - size);
    if (augment) {
        params.flip = rng.uniform() < 0.5;
        params.quarter_turns = rng.uniform_int(0, 3);
    }
    return apply_augment(pair, size, params);
}

BatchIterator::BatchIterator(std::size_t dataset_size, int batch_size, std::uint64_t seed)
    : size_(dataset_size), batch_size_(batch_size), rng_(seed) {
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (dataset_size == 0) throw std::invalid_argument("cannot iterate over an empty dataset");
    if (dataset_size < static_cast<std::size_t>(batch_size)) {
        throw std::invalid_argument("dataset smaller than one batch");
    }
    reshuffle();
}

void BatchIterator::reshuffle() {
    order_.resize(size_);
    for (std::size_t i = 0; i < size_; ++i) order_[i] = i;
    for (std::size_t i = size_ - 1; i > 0; --i) {
        const auto j = static_cast<std::size_t>(rng_.uniform_int(0, static_cast<int>(i)));
        std::swap(order_[i], order_[j]);
    }
    cursor_ = 0;
}

std::vector<std::size_t> BatchIterator::next() {
    if (cursor_ + static_cast<std::size_t>(batch_size_) > size_) reshuffle();
    std::vector<std::size_t> batch(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                                   order_.begin() + static_cast<std::ptrdiff_t>(cursor_ + batch_size_));
    cursor_ += static_cast<std::size_t>(batch_size_);
    return batch;
}

std::string BatchIterator::state() const {
    std::string text = rng_.state() + " " + std::to_string(cursor_);
    for (auto i : order_) text += " " + std::to_string(i);
    return text;
}

void BatchIterator::set_state(const std::string& text) {
    // The RNG state occupies a known number of whitespace-separated tokens.
    std::istringstream is(text);
    Rng probe;
    const std::string reference = probe.state();
    const auto tokens = static_cast<std::size_t>(std::count(reference.begin(), reference.end(), ' ')) + 1;
    std::string rng_text;
    for (std::size_t i = 0; i < tokens; ++i) {
        std::string tok;
        is >> tok;
        rng_text += (i == 0 ? "" : " ") + tok;
    }
    rng_.set_state(rng_text);
    is >> cursor_;
    order_.assign(size_, 0);
    for (auto& i : order_) is >> i;
    if (!is) throw IntegrityError("malformed batch iterator state");
}

void save_dataset(const std::vector<ImagePair>& pairs, const DatasetConfig& config,
                  const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    nlohmann::json manifest;
    manifest["config"] = to_json(config);
    manifest["pairs"] = nlohmann::json::array();
    for (const auto& pair : pairs) {
        save_image(pair.sharp, dir / (pair.id + "_sharp.png"));
        save_image(pair.blurry, dir / (pair.id + "_blur.png"));
        manifest["pairs"].push_back(
            {{"id", pair.id}, {"noise_sigma", pair.noise_sigma}, {"field_seed", pair.field_seed}});
    }
    const auto path = dir / "manifest.json";
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp);
        if (!os) throw IoError("cannot write " + path.string());
        os << manifest.dump(2) << "\n";
    }
    std::filesystem::rename(tmp, path);
}

std::vector<ImagePair> load_dataset(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw IoError("not a directory: " + dir.string());
    std::map<std::string, double> sigmas;
    const auto manifest_path = dir / "manifest.json";
    if (std::filesystem::exists(manifest_path)) {
        std::ifstream is(manifest_path);
        const auto manifest = nlohmann::json::parse(is, nullptr, false);
        if (!manifest.is_discarded() && manifest.contains("pairs")) {
            for (const auto& p : manifest["pairs"]) sigmas[p.value("id", "")] = p.value("noise_sigma", 0.0);
        }
    }
    std::vector<std::string> ids;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        const std::string suffix = "_sharp.png";
        if (name.size() > suffix.size() && name.ends_with(suffix)) {
            const std::string id = name.substr(0, name.size() - suffix.size());
            if (std::filesystem::exists(dir / (id + "_blur.png"))) ids.push_back(id);
        }
    }
    std::sort(ids.begin(), ids.end());
    std::vector<ImagePair> pairs;
    for (const auto& id : ids) {
        ImagePair pair;
        pair.id = id;
        pair.sharp = load_image(dir / (id + "_sharp.png"));
        pair.blurry = load_image(dir / (id + "_blur.png"));
        pair.sharp.id = pair.blurry.id = id;
        if (!pair.sharp.same_shape(pair.blurry)) throw DimensionError("pair " + id + " has mismatched shapes");
        if (auto it = sigmas.find(id); it != sigmas.end()) pair.noise_sigma = it->second;
        pairs.push_back(std::move(pair));
    }
    return pairs;
}

}  // namespace drl
