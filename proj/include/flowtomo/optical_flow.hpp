#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "flowtomo/image.hpp"
#include "flowtomo/parallel.hpp"
#include "flowtomo/warp.hpp"

namespace flowtomo {

struct FlowParams {
    std::size_t pyramid_levels = 4;
    double pyramid_scale = 0.5;
    std::size_t window_size = 15;
    std::size_t iterations_per_level = 3;
    std::size_t poly_n = 5;
    double poly_sigma = 1.1;
    bool dense = true;
};

inline void validate(const FlowParams& p) {
    require_arg(p.pyramid_levels >= 1, "pyramid_levels must be >= 1");
    require_arg(p.pyramid_scale > 0.0 && p.pyramid_scale < 1.0, "pyramid_scale must lie in (0, 1)");
    require_arg(p.poly_n % 2 == 1 && p.poly_n >= 3, "poly_n must be odd and >= 3");
    require_arg(p.window_size >= p.poly_n, "window_size must be >= poly_n");
    require_arg(p.iterations_per_level >= 1, "iterations_per_level must be >= 1");
    require_arg(p.poly_sigma > 0.0, "poly_sigma must be positive");
}

/// sizes[k] = max(min_window, level_image_min - k * decrement), k < total_iterations.
inline std::vector<std::size_t> window_schedule(std::size_t level_image_min, std::size_t total_iterations,
                                                std::size_t decrement, std::size_t min_window = 8) {
    require_arg(decrement >= 1, "window_schedule: decrement must be >= 1");
    require_arg(total_iterations >= 1, "window_schedule: total_iterations must be >= 1");
    std::vector<std::size_t> out(total_iterations);
    for (std::size_t k = 0; k < total_iterations; ++k) {
        const long v = long(level_image_min) - long(k * decrement);
        out[k] = std::size_t(std::max(long(min_window), v));
    }
    return out;
}

namespace farneback {

/// Per-pixel quadratic model f(p) ~ c + b.p + p'Ap, p = (x, y) = (column, row).
/// Stored as {b_x, b_y, A_xx, A_yy, A_xy} with A_xy the off-diagonal entry.
struct Poly {
    std::size_t rows = 0, cols = 0;
    std::vector<std::array<double, 5>> r;
};

/// Inverse of a small dense matrix by Gauss-Jordan with partial pivoting.
template <std::size_t K>
std::array<std::array<double, K>, K> invert(std::array<std::array<double, K>, K> m) {
    std::array<std::array<double, K>, K> inv{};
    for (std::size_t i = 0; i < K; ++i) inv[i][i] = 1.0;
    for (std::size_t c = 0; c < K; ++c) {
        std::size_t piv = c;
        for (std::size_t r = c + 1; r < K; ++r)
            if (std::abs(m[r][c]) > std::abs(m[piv][c])) piv = r;
        std::swap(m[c], m[piv]);
        std::swap(inv[c], inv[piv]);
        const double d = m[c][c];
        for (std::size_t j = 0; j < K; ++j) {
            m[c][j] /= d;
            inv[c][j] /= d;
        }
        for (std::size_t r = 0; r < K; ++r) {
            if (r == c) continue;
            const double f = m[r][c];
            if (f == 0.0) continue;
            for (std::size_t j = 0; j < K; ++j) {
                m[r][j] -= f * m[c][j];
                inv[r][j] -= f * inv[c][j];
            }
        }
    }
    return inv;
}

/// Polynomial expansion by Gaussian-weighted least squares over a
/// (2n+1)^2 neighbourhood, n = poly_n / 2, with replicate edges.
inline Poly poly_expand(const Image& img, std::size_t poly_n, double sigma) {
    const long n = long(poly_n / 2);
    std::vector<double> g(std::size_t(2 * n + 1));
    for (long i = -n; i <= n; ++i) g[std::size_t(i + n)] = std::exp(-double(i * i) / (2 * sigma * sigma));

    // basis: 1, x, y, x^2, y^2, xy
    auto basis = [](double x, double y) { return std::array<double, 6>{1, x, y, x * x, y * y, x * y}; };
    std::array<std::array<double, 6>, 6> gram{};
    for (long dy = -n; dy <= n; ++dy)
        for (long dx = -n; dx <= n; ++dx) {
            const double w = g[std::size_t(dy + n)] * g[std::size_t(dx + n)];
            const auto phi = basis(double(dx), double(dy));
            for (int i = 0; i < 6; ++i)
                for (int j = 0; j < 6; ++j) gram[i][j] += w * phi[i] * phi[j];
        }
    const auto ginv = invert(gram);

    const std::size_t rows = img.rows, cols = img.cols;
    // vertical pass: moments y^0, y^1, y^2
    std::vector<std::array<double, 3>> vert(rows * cols);
    for (std::size_t y = 0; y < rows; ++y)
        for (std::size_t x = 0; x < cols; ++x) {
            std::array<double, 3> m{};
            for (long dy = -n; dy <= n; ++dy) {
                const double v = g[std::size_t(dy + n)] * img.at_clamped(long(y) + dy, long(x));
                m[0] += v;
                m[1] += v * double(dy);
                m[2] += v * double(dy * dy);
            }
            vert[y * cols + x] = m;
        }

    Poly out{rows, cols, std::vector<std::array<double, 5>>(rows * cols)};
    for (std::size_t y = 0; y < rows; ++y)
        for (std::size_t x = 0; x < cols; ++x) {
            // rhs in basis order: <1>, <x>, <y>, <x^2>, <y^2>, <xy>
            std::array<double, 6> rhs{};
            for (long dx = -n; dx <= n; ++dx) {
                const long xc = std::clamp<long>(long(x) + dx, 0, long(cols) - 1);
                const auto& m = vert[y * cols + std::size_t(xc)];
                const double w = g[std::size_t(dx + n)], fx = double(dx);
                rhs[0] += w * m[0];
                rhs[1] += w * fx * m[0];
                rhs[2] += w * m[1];
                rhs[3] += w * fx * fx * m[0];
                rhs[4] += w * m[2];
                rhs[5] += w * fx * m[1];
            }
            std::array<double, 6> c{};
            for (int i = 0; i < 6; ++i)
                for (int j = 0; j < 6; ++j) c[i] += ginv[i][j] * rhs[j];
            out.r[y * cols + x] = {c[1], c[2], c[3], c[4], 0.5 * c[5]};
        }
    return out;
}

constexpr int border = 5;
constexpr double border_weight[border] = {0.14, 0.14, 0.4472, 0.8780, 0.9761};

/// Structure-tensor entries {G_xx, G_xy, G_yy, h_x, h_y} at every pixel for
/// the current flow estimate (fx, fy).
inline std::vector<std::array<double, 5>> update_matrices(const Poly& r0, const Poly& r1, const Image& fx,
                                                          const Image& fy) {
    const std::size_t rows = r0.rows, cols = r0.cols;
    std::vector<std::array<double, 5>> m(rows * cols);
    for (std::size_t y = 0; y < rows; ++y)
        for (std::size_t x = 0; x < cols; ++x) {
            const std::size_t i = y * cols + x;
            const double dx = fx.px[i], dy = fy.px[i];
            const double xs = double(x) + dx, ys = double(y) + dy;
            const auto& a0 = r0.r[i];
            double b1x, b1y, axx, ayy, axy;
            const double xf = std::floor(xs), yf = std::floor(ys);
            const long x1 = long(xf), y1 = long(yf);
            if (x1 >= 0 && y1 >= 0 && xs <= double(cols - 1) && ys <= double(rows - 1)) {
                const double ax = xs - xf, ay = ys - yf;
                const double w00 = (1 - ax) * (1 - ay), w01 = ax * (1 - ay), w10 = (1 - ax) * ay, w11 = ax * ay;
                const std::size_t j = std::size_t(y1) * cols + std::size_t(x1);
                const std::size_t dx1 = std::size_t(x1) + 1 < cols ? 1 : 0;
                const std::size_t dy1 = std::size_t(y1) + 1 < rows ? cols : 0;
                std::array<double, 5> a1{};
                for (int k = 0; k < 5; ++k)
                    a1[k] = w00 * r1.r[j][k] + w01 * r1.r[j + dx1][k] + w10 * r1.r[j + dy1][k] +
                            w11 * r1.r[j + dy1 + dx1][k];
                b1x = a1[0];
                b1y = a1[1];
                axx = 0.5 * (a0[2] + a1[2]);
                ayy = 0.5 * (a0[3] + a1[3]);
                axy = 0.5 * (a0[4] + a1[4]);
            } else {
                b1x = b1y = 0.0;
                axx = a0[2];
                ayy = a0[3];
                axy = a0[4];
            }
            // delta b = -(b1 - b0) / 2 + A d
            double hx = 0.5 * (a0[0] - b1x) + axx * dx + axy * dy;
            double hy = 0.5 * (a0[1] - b1y) + axy * dx + ayy * dy;
            double s = 1.0;
            if (x < std::size_t(border)) s *= border_weight[x];
            if (x >= cols - border && cols >= std::size_t(border)) s *= border_weight[cols - 1 - x];
            if (y < std::size_t(border)) s *= border_weight[y];
            if (y >= rows - border && rows >= std::size_t(border)) s *= border_weight[rows - 1 - y];
            if (s != 1.0) {
                hx *= s;
                hy *= s;
                axx *= s;
                ayy *= s;
                axy *= s;
            }
            m[i] = {axx * axx + axy * axy, axy * (axx + ayy), ayy * ayy + axy * axy, axx * hx + axy * hy,
                    axy * hx + ayy * hy};
        }
    return m;
}

/// Normalized box average over a (2m+1)^2 window, replicate edges.
inline std::vector<std::array<double, 5>> box_average(const std::vector<std::array<double, 5>>& m, std::size_t rows,
                                                      std::size_t cols, std::size_t window) {
    const long h = long(window / 2);
    const double inv = 1.0 / double((2 * h + 1) * (2 * h + 1));
    // prefix sums along a clamped, extended line
    auto pass = [&](const std::vector<std::array<double, 5>>& src, bool along_rows) {
        std::vector<std::array<double, 5>> dst(src.size());
        const std::size_t len = along_rows ? cols : rows, lines = along_rows ? rows : cols;
        std::vector<std::array<double, 5>> pre(len + 2 * std::size_t(h) + 2);
        for (std::size_t l = 0; l < lines; ++l) {
            auto at = [&](long t) -> const std::array<double, 5>& {
                t = std::clamp<long>(t, 0, long(len) - 1);
                return along_rows ? src[l * cols + std::size_t(t)] : src[std::size_t(t) * cols + l];
            };
            pre[0] = {};
            for (long t = -h; t < long(len) + h; ++t) {
                const auto& v = at(t);
                auto& p = pre[std::size_t(t + h + 1)];
                for (int k = 0; k < 5; ++k) p[k] = pre[std::size_t(t + h)][k] + v[k];
            }
            for (std::size_t t = 0; t < len; ++t) {
                std::array<double, 5> s{};
                for (int k = 0; k < 5; ++k) s[k] = pre[t + 2 * std::size_t(h) + 1][k] - pre[t][k];
                (along_rows ? dst[l * cols + t] : dst[t * cols + l]) = s;
            }
        }
        return dst;
    };
    auto out = pass(pass(m, true), false);
    for (auto& v : out)
        for (auto& x : v) x *= inv;
    return out;
}

inline void solve_flow(const std::vector<std::array<double, 5>>& m, Image& fx, Image& fy) {
    for (std::size_t i = 0; i < m.size(); ++i) {
        const auto& g = m[i];
        const double idet = 1.0 / (g[0] * g[2] - g[1] * g[1] + 1e-3);
        fx.px[i] = (g[2] * g[3] - g[1] * g[4]) * idet;
        fy.px[i] = (g[0] * g[4] - g[1] * g[3]) * idet;
    }
}

/// Rescales a pair of images jointly to [0, 255].
inline void normalize_pair(Image& a, Image& b) {
    double lo = a.px[0], hi = a.px[0];
    for (const Image* im : {&a, &b})
        for (double v : im->px) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    const double s = hi > lo ? 255.0 / (hi - lo) : 0.0;
    for (Image* im : {&a, &b})
        for (double& v : im->px) v = (v - lo) * s;
}

constexpr std::size_t min_level_size = 16;

/// Dense flow with reference(p) ~ moving(p + f); fx along columns, fy along rows.
/// A non-empty initial flow seeds the coarsest pyramid level.
inline void estimate(Image ref, Image mov, const FlowParams& params, Image& fx, Image& fy, bool use_initial) {
    normalize_pair(ref, mov);
    std::size_t levels = 1;
    {
        double s = 1.0;
        while (levels < params.pyramid_levels) {
            s *= params.pyramid_scale;
            if (double(ref.cols) * s < double(min_level_size) || double(ref.rows) * s < double(min_level_size)) break;
            ++levels;
        }
    }
    Image prev_x, prev_y;
    for (long k = long(levels) - 1; k >= 0; --k) {
        const double scale = std::pow(params.pyramid_scale, double(k));
        const std::size_t rows = k == 0 ? ref.rows : std::size_t(std::lround(double(ref.rows) * scale));
        const std::size_t cols = k == 0 ? ref.cols : std::size_t(std::lround(double(ref.cols) * scale));
        Image lx(rows, cols), ly(rows, cols);
        if (!prev_x.px.empty()) {
            lx = resize_bilinear(prev_x, rows, cols);
            ly = resize_bilinear(prev_y, rows, cols);
            for (auto& v : lx.px) v /= params.pyramid_scale;
            for (auto& v : ly.px) v /= params.pyramid_scale;
        } else if (use_initial) {
            const double sigma = (1.0 / scale - 1.0) * 0.5;
            lx = resize_bilinear(gaussian_blur(fx, sigma), rows, cols);
            ly = resize_bilinear(gaussian_blur(fy, sigma), rows, cols);
            for (auto& v : lx.px) v *= scale;
            for (auto& v : ly.px) v *= scale;
        }
        Poly r0, r1;
        if (k == 0) {
            r0 = poly_expand(ref, params.poly_n, params.poly_sigma);
            r1 = poly_expand(mov, params.poly_n, params.poly_sigma);
        } else {
            const double sigma = (1.0 / scale - 1.0) * 0.5;
            r0 = poly_expand(resize_bilinear(gaussian_blur(ref, sigma), rows, cols), params.poly_n, params.poly_sigma);
            r1 = poly_expand(resize_bilinear(gaussian_blur(mov, sigma), rows, cols), params.poly_n, params.poly_sigma);
        }
        auto m = update_matrices(r0, r1, lx, ly);
        for (std::size_t it = 0; it < params.iterations_per_level; ++it) {
            solve_flow(box_average(m, rows, cols, params.window_size), lx, ly);
            if (it + 1 < params.iterations_per_level) m = update_matrices(r0, r1, lx, ly);
        }
        prev_x = std::move(lx);
        prev_y = std::move(ly);
    }
    fx = std::move(prev_x);
    fy = std::move(prev_y);
}

} // namespace farneback

/// Per-angle Farneback flow f with moving(theta, z + f_z, s + f_s) ~
/// reference(theta, z, s), so apply_flow(moving, f) ~ reference.
template <class T>
FlowStack<T> estimate_flow(const ProjectionStack<T>& reference, const ProjectionStack<T>& moving,
                           const FlowParams& params, const FlowStack<T>* initial = nullptr) {
    validate(params);
    require_same_shape(reference.shape(), moving.shape(), "estimate_flow");
    if (initial) {
        require_same_shape(initial->shape(), reference.shape(), "estimate_flow: initial flow");
    }
    require_arg(reference.height() >= params.poly_n && reference.width() >= params.poly_n,
                "estimate_flow: image " + std::to_string(reference.height()) + "x" +
                    std::to_string(reference.width()) + " smaller than poly_n " + std::to_string(params.poly_n));
    FlowStack<T> out(reference.shape());
    parallel_for(reference.n_angles(), [&](std::size_t a) {
        Image fx(reference.height(), reference.width()), fy(reference.height(), reference.width());
        if (initial) {
            fx = to_image(plane_view(initial->fs, a));
            fy = to_image(plane_view(initial->fz, a));
        }
        farneback::estimate(to_image(reference.image(a)), to_image(moving.image(a)), params, fx, fy,
                            initial != nullptr);
        copy_image(fx, plane_view(out.fs, a));
        copy_image(fy, plane_view(out.fz, a));
    });
    return out;
}

/// Mean of each angle's flow over the central 80% box, broadcast per angle.
template <class T>
FlowStack<T> collapse_to_shift(const FlowStack<T>& f) {
    const std::size_t rows = f.shape()[1], cols = f.shape()[2];
    const std::size_t r0 = rows / 10, r1 = std::max(r0 + 1, rows - rows / 10);
    const std::size_t c0 = cols / 10, c1 = std::max(c0 + 1, cols - cols / 10);
    FlowStack<T> out(f.shape());
    for (std::size_t a = 0; a < f.n_angles(); ++a) {
        double ss = 0, sz = 0;
        for (std::size_t z = r0; z < r1; ++z)
            for (std::size_t s = c0; s < c1; ++s) {
                ss += double(f.fs(a, z, s));
                sz += double(f.fz(a, z, s));
            }
        const double cnt = double((r1 - r0) * (c1 - c0));
        std::fill_n(out.fs.plane(a).data(), rows * cols, static_cast<T>(ss / cnt));
        std::fill_n(out.fz.plane(a).data(), rows * cols, static_cast<T>(sz / cnt));
    }
    return out;
}

/// Non-dense flow: one common (s, z) shift per angle.
template <class T>
FlowStack<T> estimate_shift(const ProjectionStack<T>& reference, const ProjectionStack<T>& moving,
                            const FlowParams& params) {
    return collapse_to_shift(estimate_flow(reference, moving, params));
}

/// Dispatches on params.dense.
template <class T>
FlowStack<T> estimate_motion(const ProjectionStack<T>& reference, const ProjectionStack<T>& moving,
                             const FlowParams& params, const FlowStack<T>* initial = nullptr) {
    if (params.dense) return estimate_flow(reference, moving, params, initial);
    return collapse_to_shift(estimate_flow(reference, moving, params, initial));
}

} // namespace flowtomo
