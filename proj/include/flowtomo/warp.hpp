#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "flowtomo/parallel.hpp"
#include "flowtomo/types.hpp"

namespace flowtomo {

/// Per-angle 2D displacement in pixels, each component stored (theta, z, s).
template <class T>
struct FlowStack {
    Grid3<T> fs;
    Grid3<T> fz;

    FlowStack() = default;
    explicit FlowStack(const Shape3& shape, T fill = T(0)) : fs(shape, fill), fz(shape, fill) {}

    const Shape3& shape() const noexcept { return fs.shape(); }
    std::size_t n_angles() const noexcept { return fs.dim(0); }

    double max_magnitude() const {
        double m = 0.0;
        for (std::size_t n = 0; n < fs.size(); ++n) m = std::max(m, std::hypot(double(fs[n]), double(fz[n])));
        return m;
    }

    template <class U>
    FlowStack<U> cast() const {
        FlowStack<U> out;
        out.fs = fs.template cast<U>();
        out.fz = fz.template cast<U>();
        return out;
    }
};

template <class T>
FlowStack<T> negated(const FlowStack<T>& f) {
    FlowStack<T> out = f;
    scale(out.fs, -1.0);
    scale(out.fz, -1.0);
    return out;
}

/// Rejects non-finite flows and, when max_displacement > 0, flows exceeding it.
template <class T>
void validate_flow(const FlowStack<T>& f, double max_displacement = 0.0) {
    require(all_finite(f.fs) && all_finite(f.fz), ErrorCode::numerical_abort, "flow contains NaN or Inf");
    if (max_displacement > 0.0) {
        const double m = f.max_magnitude();
        require(m <= max_displacement, ErrorCode::invalid_argument,
                "flow magnitude " + std::to_string(m) + " exceeds max_displacement " + std::to_string(max_displacement));
    }
}

namespace detail {

struct Bilinear {
    std::size_t idx[4];
    double w[4];
};

/// Bilinear footprint at (z, s) on a rows x cols image with clamped coordinates.
inline Bilinear bilinear_footprint(double z, double s, std::size_t rows, std::size_t cols) {
    z = std::clamp(z, 0.0, double(rows - 1));
    s = std::clamp(s, 0.0, double(cols - 1));
    const double zf = std::floor(z), sf = std::floor(s);
    const std::size_t z0 = std::size_t(zf), s0 = std::size_t(sf);
    const std::size_t z1 = std::min(z0 + 1, rows - 1), s1 = std::min(s0 + 1, cols - 1);
    const double fz = z - zf, fs = s - sf;
    return {{z0 * cols + s0, z0 * cols + s1, z1 * cols + s0, z1 * cols + s1},
            {(1 - fz) * (1 - fs), (1 - fz) * fs, fz * (1 - fs), fz * fs}};
}

template <class T>
void check_flow_shape(const ProjectionStack<T>& p, const FlowStack<T>& f, const char* what) {
    require_same_shape(p.shape(), f.fs.shape(), what);
    require_same_shape(p.shape(), f.fz.shape(), what);
}

} // namespace detail

/// (D_f p)(theta, z, s) = p(theta, z + f_z, s + f_s), bilinear, replicate edges.
template <class T>
ProjectionStack<T> apply_flow(const ProjectionStack<T>& p, const FlowStack<T>& f) {
    detail::check_flow_shape(p, f, "apply_flow");
    ProjectionStack<T> out(p.geometry);
    const std::size_t rows = p.height(), cols = p.width();
    parallel_for(p.n_angles(), [&](std::size_t a) {
        const T* src = p.data.plane(a).data();
        T* dst = out.data.plane(a).data();
        for (std::size_t z = 0; z < rows; ++z)
            for (std::size_t s = 0; s < cols; ++s) {
                const auto b = detail::bilinear_footprint(double(z) + double(f.fz(a, z, s)),
                                                          double(s) + double(f.fs(a, z, s)), rows, cols);
                const double v = b.w[0] * double(src[b.idx[0]]) + b.w[1] * double(src[b.idx[1]]) +
                                 b.w[2] * double(src[b.idx[2]]) + b.w[3] * double(src[b.idx[3]]);
                dst[z * cols + s] = static_cast<T>(v);
            }
    });
    return out;
}

/// Exact transpose of apply_flow for the same f (bilinear weights scattered back).
template <class T>
ProjectionStack<T> apply_flow_adjoint(const ProjectionStack<T>& p, const FlowStack<T>& f) {
    detail::check_flow_shape(p, f, "apply_flow_adjoint");
    ProjectionStack<T> out(p.geometry);
    const std::size_t rows = p.height(), cols = p.width();
    parallel_for(p.n_angles(), [&](std::size_t a) {
        const T* src = p.data.plane(a).data();
        std::vector<double> acc(rows * cols, 0.0);
        for (std::size_t z = 0; z < rows; ++z)
            for (std::size_t s = 0; s < cols; ++s) {
                const double v = double(src[z * cols + s]);
                if (v == 0.0) continue;
                const auto b = detail::bilinear_footprint(double(z) + double(f.fz(a, z, s)),
                                                          double(s) + double(f.fs(a, z, s)), rows, cols);
                for (int q = 0; q < 4; ++q) acc[b.idx[q]] += b.w[q] * v;
            }
        T* dst = out.data.plane(a).data();
        for (std::size_t n = 0; n < acc.size(); ++n) dst[n] = static_cast<T>(acc[n]);
    });
    return out;
}

/// Cheap approximation of the adjoint: warp by the negated flow.
template <class T>
ProjectionStack<T> apply_flow_adjoint_negated(const ProjectionStack<T>& p, const FlowStack<T>& f) {
    detail::check_flow_shape(p, f, "apply_flow_adjoint_negated");
    return apply_flow(p, negated(f));
}

/// 8-bit RGB raster, row-major, 3 bytes per pixel.
struct RgbImage {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> rgb;
};

inline void hsv_to_rgb(double h, double s, double v, std::uint8_t* out) {
    h = std::fmod(h, 360.0);
    if (h < 0) h += 360.0;
    const double c = v * s, x = c * (1 - std::abs(std::fmod(h / 60.0, 2.0) - 1)), m = v - c;
    double r = 0, g = 0, b = 0;
    switch (int(h / 60.0)) {
    case 0: r = c, g = x; break;
    case 1: r = x, g = c; break;
    case 2: g = c, b = x; break;
    case 3: g = x, b = c; break;
    case 4: r = x, b = c; break;
    default: r = c, b = x; break;
    }
    out[0] = std::uint8_t(std::lround(255 * (r + m)));
    out[1] = std::uint8_t(std::lround(255 * (g + m)));
    out[2] = std::uint8_t(std::lround(255 * (b + m)));
}

/// Colour wheel rendering of one angle's flow: hue is the direction
/// atan2(f_z, f_s), saturation the magnitude relative to the stack maximum.
/// Zero flow renders white.
template <class T>
RgbImage flow_color_image(const FlowStack<T>& f, std::size_t theta_index) {
    require(theta_index < f.n_angles(), ErrorCode::invalid_argument,
            "flow_color_image: angle index " + std::to_string(theta_index) + " out of range");
    const double fmax = f.max_magnitude();
    RgbImage img{f.shape()[2], f.shape()[1], {}};
    img.rgb.resize(img.width * img.height * 3);
    for (std::size_t z = 0; z < img.height; ++z)
        for (std::size_t s = 0; s < img.width; ++s) {
            const double vs = f.fs(theta_index, z, s), vz = f.fz(theta_index, z, s);
            const double mag = std::hypot(vs, vz);
            const double hue = std::atan2(vz, vs) * 180.0 / std::numbers::pi;
            hsv_to_rgb(hue, fmax > 0 ? mag / fmax : 0.0, 1.0, &img.rgb[(z * img.width + s) * 3]);
        }
    return img;
}

} // namespace flowtomo
