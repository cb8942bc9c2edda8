#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <stdexcept>
#include <string>

#include "drl/errors.hpp"

namespace drl {

/// Batch-major NCHW shape. Scalars are represented as {1, 1, 1, 1}.
struct Shape {
    int n = 0;
    int c = 0;
    int h = 0;
    int w = 0;

    [[nodiscard]] std::ptrdiff_t size() const {
        return static_cast<std::ptrdiff_t>(n) * c * h * w;
    }
    [[nodiscard]] std::ptrdiff_t plane() const { return static_cast<std::ptrdiff_t>(h) * w; }
    [[nodiscard]] std::ptrdiff_t sample() const { return static_cast<std::ptrdiff_t>(c) * h * w; }

    bool operator==(const Shape&) const = default;

    [[nodiscard]] std::string str() const {
        return "[" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
               std::to_string(w) + "]";
    }
};

/// Dense NCHW tensor backed by a contiguous Eigen vector. Value semantics.
template <typename Scalar>
class Tensor {
public:
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

    Tensor() = default;
    explicit Tensor(const Shape& shape) : shape_(shape), data_(Vector::Zero(shape.size())) {}
    Tensor(const Shape& shape, Scalar fill) : shape_(shape), data_(Vector::Constant(shape.size(), fill)) {}
    Tensor(const Shape& shape, Vector data) : shape_(shape), data_(std::move(data)) {
        if (data_.size() != shape_.size()) {
            throw DimensionError("tensor data size " + std::to_string(data_.size()) +
                                 " does not match shape " + shape_.str());
        }
    }

    static Tensor scalar(Scalar v) { return Tensor({1, 1, 1, 1}, v); }

    [[nodiscard]] const Shape& shape() const { return shape_; }
    [[nodiscard]] bool empty() const { return data_.size() == 0; }
    [[nodiscard]] std::ptrdiff_t size() const { return data_.size(); }

    Vector& data() { return data_; }
    const Vector& data() const { return data_; }
    auto array() { return data_.array(); }
    auto array() const { return data_.array(); }

    Scalar* ptr() { return data_.data(); }
    const Scalar* ptr() const { return data_.data(); }

    Scalar* plane(int n, int c) { return data_.data() + (static_cast<std::ptrdiff_t>(n) * shape_.c + c) * shape_.plane(); }
    const Scalar* plane(int n, int c) const {
        return data_.data() + (static_cast<std::ptrdiff_t>(n) * shape_.c + c) * shape_.plane();
    }

    Scalar& operator()(int n, int c, int y, int x) {
        return data_[((static_cast<std::ptrdiff_t>(n) * shape_.c + c) * shape_.h + y) * shape_.w + x];
    }
    Scalar operator()(int n, int c, int y, int x) const {
        return data_[((static_cast<std::ptrdiff_t>(n) * shape_.c + c) * shape_.h + y) * shape_.w + x];
    }

    [[nodiscard]] Scalar item() const {
        if (data_.size() != 1) throw DimensionError("item() on non-scalar tensor " + shape_.str());
        return data_[0];
    }

    void set_zero() { data_.setZero(); }

    template <typename Other>
    [[nodiscard]] Tensor<Other> cast() const {
        return Tensor<Other>(shape_, data_.template cast<Other>());
    }

private:
    Shape shape_{};
    Vector data_;
};

inline void require_same_shape(const Shape& a, const Shape& b, const char* what) {
    if (!(a == b)) {
        throw DimensionError(std::string(what) + ": shape mismatch " + a.str() + " vs " + b.str());
    }
}

}  // namespace drl
