#pragma once

#include <Eigen/Core>

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "drl/tensor.hpp"

namespace drl {

/// Planar C x H x W raster with values nominally in [0, 1].
class Image {
public:
    using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    using PlaneMap = Eigen::Map<RowMatrix>;
    using ConstPlaneMap = Eigen::Map<const RowMatrix>;

    Image() = default;
    Image(int channels, int height, int width, double fill = 0.0);

    [[nodiscard]] int channels() const { return channels_; }
    [[nodiscard]] int height() const { return height_; }
    [[nodiscard]] int width() const { return width_; }
    [[nodiscard]] bool empty() const { return data_.size() == 0; }
    [[nodiscard]] bool same_shape(const Image& other) const {
        return channels_ == other.channels_ && height_ == other.height_ && width_ == other.width_;
    }

    double& operator()(int c, int y, int x) { return data_[(static_cast<std::ptrdiff_t>(c) * height_ + y) * width_ + x]; }
    double operator()(int c, int y, int x) const {
        return data_[(static_cast<std::ptrdiff_t>(c) * height_ + y) * width_ + x];
    }

    Eigen::ArrayXd& data() { return data_; }
    const Eigen::ArrayXd& data() const { return data_; }

    PlaneMap plane(int c) { return PlaneMap(data_.data() + static_cast<std::ptrdiff_t>(c) * height_ * width_, height_, width_); }
    ConstPlaneMap plane(int c) const {
        return ConstPlaneMap(data_.data() + static_cast<std::ptrdiff_t>(c) * height_ * width_, height_, width_);
    }

    Image& clamp01() {
        data_ = data_.max(0.0).min(1.0);
        return *this;
    }
    [[nodiscard]] bool all_finite() const { return data_.isFinite().all(); }

    /// Horizontal mirror.
    [[nodiscard]] Image flipped_horizontal() const;
    /// Rotation by quarter_turns * 90 degrees counter-clockwise.
    [[nodiscard]] Image rotated90(int quarter_turns) const;
    [[nodiscard]] Image crop(int top, int left, int height, int width) const;

    std::string id;

private:
    int channels_ = 0;
    int height_ = 0;
    int width_ = 0;
    Eigen::ArrayXd data_;
};

/// Throws DimensionError unless the image can be fed to the 5-scale networks
/// (H, W >= 32 and divisible by 16).
void require_network_input(const Image& image);

/// Reads an 8- or 16-bit PNG. Grayscale is replicated to 3 channels, alpha dropped.
Image load_image(const std::filesystem::path& path);

/// Writes an 8- or 16-bit RGB PNG (values clamped to [0, 1]). The file is
/// written to a temporary sibling and renamed into place.
void save_image(const Image& image, const std::filesystem::path& path, int bit_depth = 8);

/// The values save_image followed by load_image would produce.
Image quantize(const Image& image, int bit_depth = 8);

/// Packs images of equal shape into an NCHW tensor.
template <typename Scalar>
Tensor<Scalar> to_tensor(std::span<const Image> images);

template <typename Scalar>
Tensor<Scalar> to_tensor(const Image& image) {
    return to_tensor<Scalar>(std::span<const Image>(&image, 1));
}

/// Extracts sample `index` of an NCHW tensor.
template <typename Scalar>
Image from_tensor(const Tensor<Scalar>& tensor, int index = 0);

/// Reflect-pads to the next multiple of `multiple` at the bottom/right edge.
Image pad_reflect_to_multiple(const Image& image, int multiple);

/// Horizontally concatenates equally sized images into one row, and rows into a sheet.
Image make_contact_sheet(const std::vector<std::vector<Image>>& rows);

}  // namespace drl
