#include "drl/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <vector>

#include "drl/errors.hpp"

namespace drl {

Image::Image(int channels, int height, int width, double fill)
    : channels_(channels), height_(height), width_(width) {
    if (channels <= 0 || height <= 0 || width <= 0) {
        throw DimensionError("image dimensions must be positive, got " + std::to_string(channels) + "x" +
                             std::to_string(height) + "x" + std::to_string(width));
    }
    data_ = Eigen::ArrayXd::Constant(static_cast<std::ptrdiff_t>(channels) * height * width, fill);
}

Image Image::flipped_horizontal() const {
    Image out(channels_, height_, width_);
    out.id = id;
    for (int c = 0; c < channels_; ++c) out.plane(c) = plane(c).rowwise().reverse();
    return out;
}

Image Image::rotated90(int quarter_turns) const {
    const int turns = ((quarter_turns % 4) + 4) % 4;
    if (turns == 0) return *this;
    const bool swap = turns % 2 == 1;
    Image out(channels_, swap ? width_ : height_, swap ? height_ : width_);
    out.id = id;
    for (int c = 0; c < channels_; ++c) {
        const auto src = plane(c);
        auto dst = out.plane(c);
        if (turns == 1) {
            dst = src.transpose().colwise().reverse();
        } else if (turns == 2) {
            dst = src.reverse();
        } else {
            dst = src.transpose().rowwise().reverse();
        }
    }
    return out;
}

Image Image::crop(int top, int left, int height, int width) const {
    if (top < 0 || left < 0 || height <= 0 || width <= 0 || top + height > height_ || left + width > width_) {
        throw DimensionError("crop window out of bounds");
    }
    Image out(channels_, height, width);
    out.id = id;
    for (int c = 0; c < channels_; ++c) out.plane(c) = plane(c).block(top, left, height, width);
    return out;
}

void require_network_input(const Image& image) {
    if (image.height() < 32 || image.width() < 32 || image.height() % 16 != 0 || image.width() % 16 != 0) {
        throw DimensionError("network input must be at least 32x32 with sides divisible by 16, got " +
                             std::to_string(image.height()) + "x" + std::to_string(image.width()));
    }
}

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f != nullptr) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void png_error_handler(png_structp png, png_const_charp message) {
    auto* text = static_cast<std::string*>(png_get_error_ptr(png));
    if (text != nullptr) *text = message;
    png_longjmp(png, 1);
}

void png_warning_handler(png_structp, png_const_charp) {}

}  // namespace

Image load_image(const std::filesystem::path& path) {
    FilePtr file(std::fopen(path.c_str(), "rb"));
    if (!file) throw IoError("cannot open " + path.string());
    unsigned char header[8];
    if (std::fread(header, 1, 8, file.get()) != 8 || png_sig_cmp(header, 0, 8) != 0) {
        throw IoError(path.string() + " is not a PNG file");
    }

    std::string error;
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &error, png_error_handler, png_warning_handler);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (png == nullptr || info == nullptr) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("libpng initialisation failed");
    }

    std::vector<unsigned char> buffer;
    std::vector<png_bytep> rows;
    png_uint_32 width = 0;
    png_uint_32 height = 0;
    int bit_depth = 0;
    int color_type = 0;
    int out_channels = 0;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("failed to decode " + path.string() + ": " + error);
    }
    png_init_io(png, file.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);
    png_get_IHDR(png, info, &width, &height, &bit_depth, &color_type, nullptr, nullptr, nullptr);
    if (bit_depth != 8 && bit_depth != 16) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError(path.string() + ": unsupported bit depth " + std::to_string(bit_depth));
    }
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    if (bit_depth == 16) png_set_swap(png);  // little-endian host order
    png_read_update_info(png, info);
    out_channels = png_get_channels(png, info);
    const std::size_t row_bytes = png_get_rowbytes(png, info);
    buffer.resize(row_bytes * height);
    rows.resize(height);
    for (png_uint_32 y = 0; y < height; ++y) rows[y] = buffer.data() + y * row_bytes;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    if (out_channels != 1 && out_channels != 3) throw IoError(path.string() + ": unsupported channel layout");
    Image image(3, static_cast<int>(height), static_cast<int>(width));
    const double scale = bit_depth == 16 ? 1.0 / 65535.0 : 1.0 / 255.0;
    for (int y = 0; y < static_cast<int>(height); ++y) {
        for (int x = 0; x < static_cast<int>(width); ++x) {
            for (int c = 0; c < 3; ++c) {
                const int src_c = out_channels == 1 ? 0 : c;
                const std::size_t idx = static_cast<std::size_t>(x) * out_channels + src_c;
                double v = 0.0;
                if (bit_depth == 16) {
                    const auto* p16 = reinterpret_cast<const std::uint16_t*>(rows[y]);
                    v = p16[idx] * scale;
                } else {
                    v = rows[y][idx] * scale;
                }
                image(c, y, x) = v;
            }
        }
    }
    image.id = path.stem().string();
    return image;
}

Image quantize(const Image& image, int bit_depth) {
    if (bit_depth != 8 && bit_depth != 16) throw IoError("unsupported bit depth " + std::to_string(bit_depth));
    const double max_value = bit_depth == 16 ? 65535.0 : 255.0;
    const double scale = 1.0 / max_value;
    Image out = image;
    for (auto& v : out.data()) v = static_cast<double>(std::lround(std::clamp(v, 0.0, 1.0) * max_value)) * scale;
    return out;
}

void save_image(const Image& image, const std::filesystem::path& path, int bit_depth) {
    if (bit_depth != 8 && bit_depth != 16) throw IoError("unsupported bit depth " + std::to_string(bit_depth));
    if (image.channels() != 3 && image.channels() != 1) throw DimensionError("save_image expects 1 or 3 channels");
    const int channels = image.channels();
    const int width = image.width();
    const int height = image.height();
    const double max_value = bit_depth == 16 ? 65535.0 : 255.0;
    const std::size_t bytes_per = bit_depth == 16 ? 2 : 1;
    const std::size_t row_bytes = static_cast<std::size_t>(width) * channels * bytes_per;
    std::vector<unsigned char> buffer(row_bytes * height);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            for (int c = 0; c < channels; ++c) {
                const double v = std::clamp(image(c, y, x), 0.0, 1.0);
                const auto q = static_cast<std::uint32_t>(std::lround(v * max_value));
                const std::size_t idx = (static_cast<std::size_t>(y) * width + x) * channels + c;
                if (bit_depth == 16) {
                    buffer[idx * 2] = static_cast<unsigned char>(q >> 8);
                    buffer[idx * 2 + 1] = static_cast<unsigned char>(q & 0xff);
                } else {
                    buffer[idx] = static_cast<unsigned char>(q);
                }
            }
        }
    }

    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        FilePtr file(std::fopen(tmp.c_str(), "wb"));
        if (!file) throw IoError("cannot write " + path.string());
        std::string error;
        png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &error, png_error_handler, png_warning_handler);
        png_infop info = png ? png_create_info_struct(png) : nullptr;
        if (png == nullptr || info == nullptr) {
            png_destroy_write_struct(&png, &info);
            throw IoError("libpng initialisation failed");
        }
        std::vector<png_bytep> rows(height);
        for (int y = 0; y < height; ++y) rows[y] = buffer.data() + y * row_bytes;
        if (setjmp(png_jmpbuf(png))) {
            png_destroy_write_struct(&png, &info);
            throw IoError("failed to encode " + path.string() + ": " + error);
        }
        png_init_io(png, file.get());
        png_set_IHDR(png, info, width, height, bit_depth, channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
                     PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
        png_write_info(png, info);
        png_write_image(png, rows.data());
        png_write_end(png, nullptr);
        png_destroy_write_struct(&png, &info);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot move " + tmp.string() + " into place: " + ec.message());
}

template <typename Scalar>
Tensor<Scalar> to_tensor(std::span<const Image> images) {
    if (images.empty()) throw DimensionError("to_tensor: no images");
    const Image& first = images.front();
    Tensor<Scalar> out({static_cast<int>(images.size()), first.channels(), first.height(), first.width()});
    const std::ptrdiff_t sample = out.shape().sample();
    for (std::size_t i = 0; i < images.size(); ++i) {
        if (!images[i].same_shape(first)) throw DimensionError("to_tensor: images differ in shape");
        out.data().segment(static_cast<std::ptrdiff_t>(i) * sample, sample) =
            images[i].data().matrix().template cast<Scalar>();
    }
    return out;
}

template <typename Scalar>
Image from_tensor(const Tensor<Scalar>& tensor, int index) {
    const Shape& s = tensor.shape();
    if (index < 0 || index >= s.n) throw DimensionError("from_tensor: sample index out of range");
    Image out(s.c, s.h, s.w);
    out.data() = tensor.data().segment(static_cast<std::ptrdiff_t>(index) * s.sample(), s.sample()).array().template cast<double>();
    return out;
}

template Tensor<float> to_tensor<float>(std::span<const Image>);
template Tensor<double> to_tensor<double>(std::span<const Image>);
template Image from_tensor<float>(const Tensor<float>&, int);
template Image from_tensor<double>(const Tensor<double>&, int);

Image pad_reflect_to_multiple(const Image& image, int multiple) {
    const int h = (image.height() + multiple - 1) / multiple * multiple;
    const int w = (image.width() + multiple - 1) / multiple * multiple;
    if (h == image.height() && w == image.width()) return image;
    auto reflect = [](int i, int n) {
        if (n == 1) return 0;
        const int period = 2 * (n - 1);
        i %= period;
        return i < n ? i : period - i;
    };
    Image out(image.channels(), h, w);
    out.id = image.id;
    for (int c = 0; c < image.channels(); ++c) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) out(c, y, x) = image(c, reflect(y, image.height()), reflect(x, image.width()));
        }
    }
    return out;
}

Image make_contact_sheet(const std::vector<std::vector<Image>>& rows) {
    if (rows.empty() || rows.front().empty()) throw DimensionError("contact sheet needs at least one image");
    const Image& cell = rows.front().front();
    std::size_t cols = 0;
    for (const auto& row : rows) cols = std::max(cols, row.size());
    Image sheet(cell.channels(), cell.height() * static_cast<int>(rows.size()), cell.width() * static_cast<int>(cols));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t k = 0; k < rows[r].size(); ++k) {
            const Image& img = rows[r][k];
            if (!img.same_shape(cell)) throw DimensionError("contact sheet cells differ in shape");
            for (int c = 0; c < img.channels(); ++c) {
                sheet.plane(c).block(static_cast<int>(r) * cell.height(), static_cast<int>(k) * cell.width(),
                                     cell.height(), cell.width()) = img.plane(c);
            }
        }
    }
    return sheet;
}

}  // namespace drl
