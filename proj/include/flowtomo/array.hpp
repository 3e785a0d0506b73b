#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "flowtomo/error.hpp"

namespace flowtomo {

using Shape3 = std::array<std::size_t, 3>;

inline std::string shape_string(const Shape3& s) {
    std::ostringstream os;
    os << s[0] << "x" << s[1] << "x" << s[2];
    return os.str();
}

/// Dense row-major 3D array; index (i, j, k) with k fastest.
template <class T>
class Grid3 {
public:
    using value_type = T;

    Grid3() = default;
    explicit Grid3(const Shape3& shape, T fill = T(0))
        : shape_(shape), data_(shape[0] * shape[1] * shape[2], fill) {}
    Grid3(std::size_t n0, std::size_t n1, std::size_t n2, T fill = T(0))
        : Grid3(Shape3{n0, n1, n2}, fill) {}

    const Shape3& shape() const noexcept { return shape_; }
    std::size_t dim(std::size_t axis) const noexcept { return shape_[axis]; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    T& operator()(std::size_t i, std::size_t j, std::size_t k) noexcept {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }
    const T& operator()(std::size_t i, std::size_t j, std::size_t k) const noexcept {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }
    T& operator[](std::size_t n) noexcept { return data_[n]; }
    const T& operator[](std::size_t n) const noexcept { return data_[n]; }

    T* data() noexcept { return data_.data(); }
    const T* data() const noexcept { return data_.data(); }
    std::span<T> values() noexcept { return data_; }
    std::span<const T> values() const noexcept { return data_; }

    /// Contiguous 2D plane at outer index i (shape dim(1) x dim(2)).
    std::span<T> plane(std::size_t i) noexcept {
        return {data_.data() + i * shape_[1] * shape_[2], shape_[1] * shape_[2]};
    }
    std::span<const T> plane(std::size_t i) const noexcept {
        return {data_.data() + i * shape_[1] * shape_[2], shape_[1] * shape_[2]};
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    template <class U>
    Grid3<U> cast() const {
        Grid3<U> out(shape_);
        std::transform(data_.begin(), data_.end(), out.data(),
                       [](T v) { return static_cast<U>(v); });
        return out;
    }

    friend bool operator==(const Grid3& a, const Grid3& b) {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }

private:
    Shape3 shape_{0, 0, 0};
    std::vector<T> data_;
};

/// Non-owning 2D image view (rows x cols, row-major, cols contiguous).
template <class T>
struct ImageView {
    T* data = nullptr;
    std::size_t rows = 0;
    std::size_t cols = 0;

    T& operator()(std::size_t r, std::size_t c) const noexcept { return data[r * cols + c]; }
    std::size_t size() const noexcept { return rows * cols; }
    operator ImageView<const T>() const { return {data, rows, cols}; }
};

template <class T>
ImageView<T> plane_view(Grid3<T>& g, std::size_t i) {
    return {g.plane(i).data(), g.dim(1), g.dim(2)};
}
template <class T>
ImageView<const T> plane_view(const Grid3<T>& g, std::size_t i) {
    return {g.plane(i).data(), g.dim(1), g.dim(2)};
}

inline void require_same_shape(const Shape3& a, const Shape3& b, const char* what) {
    if (a != b) {
        throw Error(ErrorCode::shape_mismatch, std::string(what) + ": shape " + shape_string(a) +
                                                   " does not match " + shape_string(b));
    }
}

// Element-wise kernels over spans. Reductions accumulate in double and run
// sequentially so results do not depend on scheduling.

template <class T>
double dot(std::span<const T> a, std::span<const T> b) {
    double acc = 0.0;
    for (std::size_t n = 0; n < a.size(); ++n) acc += double(a[n]) * double(b[n]);
    return acc;
}

template <class T>
double sum_squares(std::span<const T> a) {
    return dot(a, a);
}

/// y += alpha * x
template <class T>
void axpy(double alpha, std::span<const T> x, std::span<T> y) {
    const T a = static_cast<T>(alpha);
    for (std::size_t n = 0; n < x.size(); ++n) y[n] += a * x[n];
}

template <class T>
void scale(std::span<T> x, double alpha) {
    const T a = static_cast<T>(alpha);
    for (auto& v : x) v *= a;
}

template <class T>
bool all_finite(std::span<const T> x) {
    return std::all_of(x.begin(), x.end(), [](T v) { return std::isfinite(v); });
}

template <class T>
double max_abs(std::span<const T> x) {
    double m = 0.0;
    for (T v : x) m = std::max(m, std::abs(double(v)));
    return m;
}

template <class T>
double dot(const Grid3<T>& a, const Grid3<T>& b) {
    require_same_shape(a.shape(), b.shape(), "dot");
    return dot<T>(a.values(), b.values());
}
template <class T>
double sum_squares(const Grid3<T>& a) {
    return sum_squares<T>(a.values());
}
template <class T>
double norm(const Grid3<T>& a) {
    return std::sqrt(sum_squares(a));
}
template <class T>
void axpy(double alpha, const Grid3<T>& x, Grid3<T>& y) {
    require_same_shape(x.shape(), y.shape(), "axpy");
    axpy<T>(alpha, x.values(), y.values());
}
template <class T>
void scale(Grid3<T>& x, double alpha) {
    scale<T>(x.values(), alpha);
}
template <class T>
bool all_finite(const Grid3<T>& x) {
    return all_finite<T>(x.values());
}

/// a - b
template <class T>
Grid3<T> difference(const Grid3<T>& a, const Grid3<T>& b) {
    require_same_shape(a.shape(), b.shape(), "difference");
    Grid3<T> out = a;
    axpy(-1.0, b, out);
    return out;
}

} // namespace flowtomo
