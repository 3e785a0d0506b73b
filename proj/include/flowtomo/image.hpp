#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "flowtomo/array.hpp"

namespace flowtomo {

/// Owning 2D image in double precision, row-major.
struct Image {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> px;

    Image() = default;
    Image(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), px(r * c, fill) {}

    double& operator()(std::size_t r, std::size_t c) noexcept { return px[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return px[r * cols + c]; }
    std::size_t size() const noexcept { return px.size(); }

    /// Value at clamped integer coordinates.
    double at_clamped(long r, long c) const noexcept {
        r = std::clamp<long>(r, 0, long(rows) - 1);
        c = std::clamp<long>(c, 0, long(cols) - 1);
        return px[std::size_t(r) * cols + std::size_t(c)];
    }

    /// Bilinear sample at (row y, column x) with replicate-edge extension.
    double sample(double y, double x) const noexcept {
        y = std::clamp(y, 0.0, double(rows - 1));
        x = std::clamp(x, 0.0, double(cols - 1));
        const double yf = std::floor(y), xf = std::floor(x);
        const long y0 = long(yf), x0 = long(xf);
        const double fy = y - yf, fx = x - xf;
        const double a = at_clamped(y0, x0), b = at_clamped(y0, x0 + 1);
        const double c = at_clamped(y0 + 1, x0), d = at_clamped(y0 + 1, x0 + 1);
        return (1 - fy) * ((1 - fx) * a + fx * b) + fy * ((1 - fx) * c + fx * d);
    }
};

template <class T>
Image to_image(ImageView<const T> v) {
    Image out(v.rows, v.cols);
    for (std::size_t n = 0; n < v.size(); ++n) out.px[n] = double(v.data[n]);
    return out;
}

template <class T>
void copy_image(const Image& src, ImageView<T> dst) {
    for (std::size_t n = 0; n < src.size(); ++n) dst.data[n] = static_cast<T>(src.px[n]);
}

/// Normalized sampled Gaussian, radius defaults to ceil(3 sigma).
inline std::vector<double> gaussian_kernel(double sigma, long radius = -1) {
    if (radius < 0) radius = std::max<long>(1, long(std::ceil(3.0 * sigma)));
    std::vector<double> k(std::size_t(2 * radius + 1));
    double total = 0.0;
    for (long i = -radius; i <= radius; ++i) {
        const double v = sigma > 0 ? std::exp(-double(i * i) / (2 * sigma * sigma)) : (i == 0 ? 1.0 : 0.0);
        k[std::size_t(i + radius)] = v;
        total += v;
    }
    for (auto& v : k) v /= total;
    return k;
}

/// 1D convolution along one axis of a row-major buffer with replicate edges.
/// axis 0 runs along the slowest of (n0, n1, n2), axis 2 along the fastest.
inline void convolve_axis(std::vector<double>& buf, const Shape3& shape, int axis, const std::vector<double>& k) {
    const long r = long(k.size() / 2);
    const std::size_t stride = axis == 2 ? 1 : axis == 1 ? shape[2] : shape[1] * shape[2];
    const std::size_t len = shape[std::size_t(axis)];
    const std::size_t lines = buf.size() / len;
    std::vector<double> line(len);
    for (std::size_t l = 0; l < lines; ++l) {
        const std::size_t inner = l % stride, outer = l / stride;
        const std::size_t base = outer * stride * len + inner;
        for (std::size_t i = 0; i < len; ++i) line[i] = buf[base + i * stride];
        for (std::size_t i = 0; i < len; ++i) {
            double acc = 0.0;
            for (long t = -r; t <= r; ++t) {
                const long j = std::clamp<long>(long(i) + t, 0, long(len) - 1);
                acc += k[std::size_t(t + r)] * line[std::size_t(j)];
            }
            buf[base + i * stride] = acc;
        }
    }
}

inline Image gaussian_blur(const Image& src, double sigma) {
    if (sigma <= 0) return src;
    Image out = src;
    const auto k = gaussian_kernel(sigma);
    const Shape3 s{1, src.rows, src.cols};
    convolve_axis(out.px, s, 1, k);
    convolve_axis(out.px, s, 2, k);
    return out;
}

/// Bilinear resize with pixel-centre alignment.
inline Image resize_bilinear(const Image& src, std::size_t rows, std::size_t cols) {
    Image out(rows, cols);
    const double sy = double(src.rows) / double(rows), sx = double(src.cols) / double(cols);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c)
            out(r, c) = src.sample((double(r) + 0.5) * sy - 0.5, (double(c) + 0.5) * sx - 0.5);
    return out;
}

} // namespace flowtomo
