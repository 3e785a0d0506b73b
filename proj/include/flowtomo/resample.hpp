#pragma once

#include <algorithm>
#include <cmath>

#include "flowtomo/parallel.hpp"
#include "flowtomo/types.hpp"
#include "flowtomo/warp.hpp"

namespace flowtomo {

namespace detail {

/// Linear interpolation stencil for fine index i on a grid coarser by `ratio`,
/// pixel centres aligned: x_c = (x_f + 0.5) / ratio - 0.5, clamped.
struct Stencil {
    std::size_t i0, i1;
    double w1;
};

inline Stencil coarse_stencil(std::size_t i, double ratio, std::size_t n_coarse) {
    const double x = std::clamp((double(i) + 0.5) / ratio - 0.5, 0.0, double(n_coarse - 1));
    const double xf = std::floor(x);
    const std::size_t i0 = std::size_t(xf);
    return {i0, std::min(i0 + 1, n_coarse - 1), x - xf};
}

} // namespace detail

/// Trilinear resampling of a coarse grid onto `fine` with centre-aligned
/// coordinates, multiplied by value_scale.
template <class T>
Grid3<T> upsample_grid(const Grid3<T>& coarse, const Shape3& fine, double ratio, double value_scale = 1.0,
                       bool resample_axis0 = true) {
    Grid3<T> out(fine);
    std::vector<detail::Stencil> s0(fine[0]), s1(fine[1]), s2(fine[2]);
    for (std::size_t i = 0; i < fine[0]; ++i)
        s0[i] = resample_axis0 ? detail::coarse_stencil(i, ratio, coarse.dim(0)) : detail::Stencil{i, i, 0.0};
    for (std::size_t i = 0; i < fine[1]; ++i) s1[i] = detail::coarse_stencil(i, ratio, coarse.dim(1));
    for (std::size_t i = 0; i < fine[2]; ++i) s2[i] = detail::coarse_stencil(i, ratio, coarse.dim(2));
    parallel_for(fine[0], [&](std::size_t a) {
        const auto& A = s0[a];
        for (std::size_t b = 0; b < fine[1]; ++b) {
            const auto& B = s1[b];
            for (std::size_t c = 0; c < fine[2]; ++c) {
                const auto& C = s2[c];
                auto lerp2 = [&](std::size_t ia) {
                    const double v0 = (1 - C.w1) * double(coarse(ia, B.i0, C.i0)) + C.w1 * double(coarse(ia, B.i0, C.i1));
                    const double v1 = (1 - C.w1) * double(coarse(ia, B.i1, C.i0)) + C.w1 * double(coarse(ia, B.i1, C.i1));
                    return (1 - B.w1) * v0 + B.w1 * v1;
                };
                const double v = (1 - A.w1) * lerp2(A.i0) + A.w1 * lerp2(A.i1);
                out(a, b, c) = static_cast<T>(v * value_scale);
            }
        }
    });
    return out;
}

/// Average over factor x factor x factor blocks (partial blocks at the far edge
/// average what they contain).
template <class T>
Grid3<T> bin_grid(const Grid3<T>& g, std::size_t factor, bool bin_axis0 = true) {
    if (factor == 1) return g;
    const std::size_t f0 = bin_axis0 ? factor : 1;
    const Shape3 s{(g.dim(0) + f0 - 1) / f0, (g.dim(1) + factor - 1) / factor, (g.dim(2) + factor - 1) / factor};
    Grid3<T> out(s);
    parallel_for(s[0], [&](std::size_t a) {
        for (std::size_t b = 0; b < s[1]; ++b)
            for (std::size_t c = 0; c < s[2]; ++c) {
                double acc = 0;
                std::size_t cnt = 0;
                for (std::size_t i = a * f0; i < std::min(g.dim(0), (a + 1) * f0); ++i)
                    for (std::size_t j = b * factor; j < std::min(g.dim(1), (b + 1) * factor); ++j)
                        for (std::size_t k = c * factor; k < std::min(g.dim(2), (c + 1) * factor); ++k) {
                            acc += double(g(i, j, k));
                            ++cnt;
                        }
                out(a, b, c) = static_cast<T>(acc / double(cnt));
            }
    });
    return out;
}

/// Projections for a grid coarser by `factor`: detector pixels averaged in
/// factor x factor blocks and divided by factor, since line integrals are
/// measured in units of the (larger) coarse voxel.
template <class T>
ProjectionStack<T> bin_projections(const ProjectionStack<T>& p, std::size_t factor) {
    if (factor == 1) return p;
    auto data = bin_grid(p.data, factor, false);
    scale(data, 1.0 / double(factor));
    return ProjectionStack<T>(std::move(data), binned(p.geometry, factor));
}

template <class T>
Volume<T> bin_volume(const Volume<T>& u, std::size_t factor) {
    return bin_grid(u, factor, true);
}

/// Inverse direction of bin_projections: bilinear in (z, s), values times ratio.
template <class T>
ProjectionStack<T> upsample_projections(const ProjectionStack<T>& p, const ScanGeometry& fine, double ratio) {
    const Shape3 s{fine.n_angles_total(), fine.detector_height, fine.detector_width};
    return ProjectionStack<T>(upsample_grid(p.data, s, ratio, ratio, false), fine);
}

template <class T>
VectorField3<T> upsample_field(const VectorField3<T>& v, const Shape3& fine, double ratio, double value_scale) {
    VectorField3<T> out;
    for (std::size_t c = 0; c < 3; ++c) out[c] = upsample_grid(v[c], fine, ratio, value_scale, true);
    return out;
}

/// Flow onto a finer detector grid: bilinear in (z, s), displacements times ratio.
template <class T>
FlowStack<T> upsample_flow(const FlowStack<T>& f, const Shape3& fine, double ratio) {
    FlowStack<T> out;
    out.fs = upsample_grid(f.fs, fine, ratio, ratio, false);
    out.fz = upsample_grid(f.fz, fine, ratio, ratio, false);
    return out;
}

} // namespace flowtomo
