// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstring>
#include <functional>
#include <new>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "layerwise/errors.hpp"

namespace layerwise {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_to_string(const Shape& shape);

// Cache-line aligned storage. Vectorized reductions split their work by the
// address of the first element, so aligning every buffer makes results a
// function of the shapes alone, independent of heap layout.
template <typename T>
struct AlignedAllocator {
    using value_type = T;
    static constexpr std::align_val_t kAlignment{64};

    AlignedAllocator() = default;
    template <typename U>
    AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

    T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlignment)); }
    void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlignment); }

    template <typename U>
    bool operator==(const AlignedAllocator<U>&) const noexcept {
        return true;
    }
};

template <typename T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

// Contiguous row-major array of reals. Rank-0 is not used; every extent is
// positive.
template <typename Real>
class DenseArray {
public:
    using value_type = Real;

    DenseArray() = default;

    explicit DenseArray(Shape shape) : shape_(std::move(shape)) {
        validate_shape();
        data_.assign(shape_size(shape_), Real{0});
    }

    DenseArray(Shape shape, const std::vector<Real>& data) : shape_(std::move(shape)), data_(data.begin(), data.end()) {
        validate_shape();
        if (data_.size() != shape_size(shape_)) {
            throw DimensionError("data length " + std::to_string(data_.size()) + " does not match shape " +
                                 shape_to_string(shape_));
        }
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t extent(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    Real* data() noexcept { return data_.data(); }
    const Real* data() const noexcept { return data_.data(); }
    std::span<Real> values() noexcept { return data_; }
    std::span<const Real> values() const noexcept { return data_; }

    Real& operator[](std::size_t i) noexcept { return data_[i]; }
    const Real& operator[](std::size_t i) const noexcept { return data_[i]; }

    // Product of all extents but the last; the "rows" of a [.., D] array.
    std::size_t rows() const { return shape_.empty() ? 0 : size() / shape_.back(); }
    std::size_t cols() const { return shape_.empty() ? 0 : shape_.back(); }

    void fill(Real v) { std::fill(data_.begin(), data_.end(), v); }

    bool all_finite() const {
        // v * 0 is 0 for finite v and NaN otherwise; independent lanes let
        // the loop vectorize.
        constexpr std::size_t kLanes = 16;
        Real lanes[kLanes] = {};
        const std::size_t n = data_.size();
        const std::size_t whole = n - n % kLanes;
        for (std::size_t i = 0; i < whole; i += kLanes) {
            for (std::size_t l = 0; l < kLanes; ++l) lanes[l] += data_[i + l] * Real{0};
        }
        Real acc = 0;
        for (std::size_t l = 0; l < kLanes; ++l) acc += lanes[l];
        for (std::size_t i = whole; i < n; ++i) acc += data_[i] * Real{0};
        return acc == Real{0};
    }

    void require_finite(std::string_view what) const {
        if (!all_finite()) throw NumericError("non-finite value in " + std::string(what));
    }

    bool bit_identical(const DenseArray& other) const {
        return shape_ == other.shape_ &&
               std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(Real)) == 0;
    }

private:
    void validate_shape() const {
        if (shape_.empty()) throw DimensionError("array shape must have at least one axis");
        for (std::size_t e : shape_) {
            if (e == 0) throw DimensionError("zero extent in shape " + shape_to_string(shape_));
        }
    }

    Shape shape_;
    AlignedVector<Real> data_;
};

template <typename Real>
struct DualBuffer {
    DualBuffer() = default;
    explicit DualBuffer(Shape shape) : value(shape), grad(std::move(shape)) {}

    void zero_grad() { grad.fill(Real{0}); }

    DenseArray<Real> value;
    DenseArray<Real> grad;
};

inline std::string shape_to_string(const Shape& shape) {
    std::string out = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(shape[i]);
    }
    return out + "]";
}

}  // namespace layerwise
