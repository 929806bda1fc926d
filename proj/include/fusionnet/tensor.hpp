#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "fusionnet/errors.hpp"

namespace fusionnet {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& shape) {
    int64_t n = 1;
    for (int64_t e : shape) n *= e;
    return n;
}

inline std::string shape_to_string(const Shape& shape) {
    std::string s = "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

// Dense row-major tensor, innermost axis last. Extents may be zero (an empty
// tensor carries no data but keeps its shape); negative extents are rejected.
template <typename T>
class TensorT {
public:
    TensorT() = default;

    explicit TensorT(Shape shape) : shape_(std::move(shape)) {
        validate_shape();
        data_.assign(static_cast<size_t>(shape_numel(shape_)), T(0));
    }

    TensorT(Shape shape, T fill) : shape_(std::move(shape)) {
        validate_shape();
        data_.assign(static_cast<size_t>(shape_numel(shape_)), fill);
    }

    TensorT(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
        validate_shape();
        if (static_cast<int64_t>(data_.size()) != shape_numel(shape_))
            throw shape_error("tensor data length " + std::to_string(data_.size()) +
                              " does not match shape " + shape_to_string(shape_));
    }

    static TensorT zeros(Shape shape) { return TensorT(std::move(shape)); }
    static TensorT ones(Shape shape) { return TensorT(std::move(shape), T(1)); }
    static TensorT full(Shape shape, T v) { return TensorT(std::move(shape), v); }

    static TensorT scalar(T v) { return TensorT(Shape{1}, std::vector<T>{v}); }

    const Shape& shape() const { return shape_; }
    int64_t rank() const { return static_cast<int64_t>(shape_.size()); }
    int64_t extent(int64_t axis) const { return shape_[static_cast<size_t>(axis)]; }
    int64_t numel() const { return static_cast<int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }

    T& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    T operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    // [C,H,W] indexing.
    T& at(int64_t c, int64_t y, int64_t x) {
        return data_[static_cast<size_t>((c * shape_[1] + y) * shape_[2] + x)];
    }
    T at(int64_t c, int64_t y, int64_t x) const {
        return data_[static_cast<size_t>((c * shape_[1] + y) * shape_[2] + x)];
    }

    bool same_shape(const TensorT& other) const { return shape_ == other.shape_; }

    // Shape-only change; element count must be preserved.
    TensorT reshaped(Shape shape) const {
        if (shape_numel(shape) != numel())
            throw shape_error("reshape from " + shape_to_string(shape_) + " to " +
                              shape_to_string(shape) + " changes element count");
        TensorT out;
        out.shape_ = std::move(shape);
        out.data_ = data_;
        return out;
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    template <typename U>
    TensorT<U> cast() const {
        std::vector<U> out(data_.size());
        for (size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
        return TensorT<U>(shape_, std::move(out));
    }

    // Every value produced by an op must be finite; a NaN/Inf anywhere aborts
    // the surrounding step with a diagnostic instead of propagating.
    void check_finite(const char* context) const {
        for (size_t i = 0; i < data_.size(); ++i) {
            if (!std::isfinite(static_cast<double>(data_[i])))
                throw numeric_error(std::string("non-finite value in ") + context + " at flat index " +
                                    std::to_string(i));
        }
    }

    bool operator==(const TensorT& other) const {
        return shape_ == other.shape_ && data_ == other.data_;
    }

private:
    void validate_shape() const {
        for (int64_t e : shape_) {
            if (e < 0)
                throw shape_error("negative extent in shape " + shape_to_string(shape_));
        }
    }

    Shape shape_;
    std::vector<T> data_;
};

using Tensor = TensorT<float>;

template <typename T>
void require_same_shape(const TensorT<T>& a, const TensorT<T>& b, const char* op) {
    if (!a.same_shape(b))
        throw shape_error(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) +
                          " vs " + shape_to_string(b.shape()));
}

} // namespace fusionnet
