#pragma once

#include "erpnet/errors.hpp"

#include <algorithm>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace erpnet {

using Dims = std::vector<std::size_t>;

inline std::size_t element_count(const Dims& dims) {
    return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string to_string(const Dims& dims) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < dims.size(); ++i) {
        if (i) os << ',';
        os << dims[i];
    }
    os << ')';
    return os.str();
}

// Dense row-major array (last dimension fastest). The extents are fixed at
// construction; reshaped() returns a new tensor with the same elements.
template <typename T>
class Tensor {
  public:
    using value_type = T;

    Tensor() = default;

    explicit Tensor(Dims dims, T fill = T{0})
        : dims_(std::move(dims)), data_(element_count(dims_), fill) {}

    Tensor(Dims dims, std::vector<T> data) : dims_(std::move(dims)), data_(std::move(data)) {
        if (element_count(dims_) != data_.size()) {
            throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                             " does not match dims " + erpnet::to_string(dims_));
        }
    }

    static Tensor zeros_like(const Tensor& other) { return Tensor(other.dims_); }

    const Dims& dims() const noexcept { return dims_; }
    std::size_t rank() const noexcept { return dims_.size(); }
    std::size_t dim(std::size_t axis) const {
        if (axis >= dims_.size()) {
            throw ShapeError("axis " + std::to_string(axis) + " out of range for tensor of rank " +
                             std::to_string(dims_.size()));
        }
        return dims_[axis];
    }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return dims_.empty(); }

    T* data() noexcept { return data_.data(); }
    const T* data() const noexcept { return data_.data(); }
    std::span<T> values() noexcept { return data_; }
    std::span<const T> values() const noexcept { return data_; }
    const std::vector<T>& storage() const noexcept { return data_; }

    T& operator[](std::size_t i) noexcept { return data_[i]; }
    const T& operator[](std::size_t i) const noexcept { return data_[i]; }

    T& at(std::size_t i, std::size_t j) noexcept { return data_[i * dims_[1] + j]; }
    const T& at(std::size_t i, std::size_t j) const noexcept { return data_[i * dims_[1] + j]; }

    T& at(std::size_t i, std::size_t j, std::size_t k) noexcept {
        return data_[(i * dims_[1] + j) * dims_[2] + k];
    }
    const T& at(std::size_t i, std::size_t j, std::size_t k) const noexcept {
        return data_[(i * dims_[1] + j) * dims_[2] + k];
    }

    T& at(std::size_t i, std::size_t j, std::size_t k, std::size_t l) noexcept {
        return data_[((i * dims_[1] + j) * dims_[2] + k) * dims_[3] + l];
    }
    const T& at(std::size_t i, std::size_t j, std::size_t k, std::size_t l) const noexcept {
        return data_[((i * dims_[1] + j) * dims_[2] + k) * dims_[3] + l];
    }

    Tensor reshaped(Dims dims) const {
        if (element_count(dims) != data_.size()) {
            throw ShapeError("cannot reshape " + erpnet::to_string(dims_) + " to " +
                             erpnet::to_string(dims));
        }
        return Tensor(std::move(dims), data_);
    }

    void fill(T value) noexcept { std::fill(data_.begin(), data_.end(), value); }

    template <typename U>
    Tensor<U> cast() const {
        std::vector<U> out(data_.size());
        std::transform(data_.begin(), data_.end(), out.begin(),
                       [](T v) { return static_cast<U>(v); });
        return Tensor<U>(dims_, std::move(out));
    }

    friend bool operator==(const Tensor& a, const Tensor& b) {
        return a.dims_ == b.dims_ && a.data_ == b.data_;
    }

  private:
    Dims dims_;
    std::vector<T> data_;
};

/// Throws ShapeError naming `what` and the first offending axis.
template <typename T>
void expect_rank(const Tensor<T>& t, std::size_t rank, const std::string& what) {
    if (t.rank() != rank) {
        throw ShapeError(what + ": expected rank " + std::to_string(rank) + ", got " +
                         to_string(t.dims()));
    }
}

inline void expect_axis(std::size_t got, std::size_t want, std::size_t axis,
                        const std::string& what) {
    if (got != want) {
        throw ShapeError(what + ": axis " + std::to_string(axis) + " has extent " +
                         std::to_string(got) + ", expected " + std::to_string(want));
    }
}

}  // namespace erpnet
