#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "flowtomo/parallel.hpp"
#include "flowtomo/types.hpp"

namespace flowtomo {

namespace detail {

/// Bilinear footprint of one ray sample: four (column index, weight) pairs.
/// Invalid corners get weight 0 and index -1.
struct RaySample {
    long idx[4];
    double w[4];
};

/// Walks the samples of the ray (theta, sigma) through an n x n slice.
/// Samples sit at unit steps; positions are
///   x = c + sigma cos - t sin,  y = c + sigma sin + t cos,  t = j - c.
template <class Visit>
void walk_ray(std::size_t n, double cos_t, double sin_t, double sigma, Visit&& visit) {
    const double c = 0.5 * double(n - 1);
    const double nn = double(n);
    // x(j) = bx + ax * j, y(j) = by + ay * j
    const double ax = -sin_t, bx = c + sigma * cos_t + c * sin_t;
    const double ay = cos_t, by = c + sigma * sin_t - c * cos_t;

    double lo = -1e300, hi = 1e300;
    auto restrict_axis = [&](double a, double b) {
        if (std::abs(a) < 1e-12) {
            if (!(b > -1.0 && b < nn)) {
                lo = 1;
                hi = 0;
            }
            return;
        }
        double t0 = (-1.0 - b) / a, t1 = (nn - b) / a;
        if (t0 > t1) std::swap(t0, t1);
        lo = std::max(lo, t0);
        hi = std::min(hi, t1);
    };
    restrict_axis(ax, bx);
    restrict_axis(ay, by);
    if (!(lo <= hi)) return;

    const long jlo = static_cast<long>(std::ceil(lo));
    const long jhi = static_cast<long>(std::floor(hi));
    const long ni = static_cast<long>(n);
    RaySample rs;
    for (long j = jlo; j <= jhi; ++j) {
        const double x = bx + ax * double(j);
        const double y = by + ay * double(j);
        const double xf = std::floor(x), yf = std::floor(y);
        const long x0 = static_cast<long>(xf), y0 = static_cast<long>(yf);
        const double fx = x - xf, fy = y - yf;
        const double wx[2] = {1.0 - fx, fx};
        const double wy[2] = {1.0 - fy, fy};
        bool any = false;
        for (int q = 0; q < 4; ++q) {
            const long xi = x0 + (q & 1), yi = y0 + (q >> 1);
            const double w = wx[q & 1] * wy[q >> 1];
            if (xi >= 0 && xi < ni && yi >= 0 && yi < ni && w != 0.0) {
                rs.idx[q] = yi * ni + xi;
                rs.w[q] = w;
                any = true;
            } else {
                rs.idx[q] = -1;
                rs.w[q] = 0.0;
            }
        }
        if (any) visit(rs);
    }
}

/// (z, y, x) -> (y, x, z): makes z contiguous so every ray sample updates a
/// whole detector column at once.
template <class T>
std::vector<T> to_column_major_z(const Volume<T>& u) {
    const std::size_t nz = u.dim(0), ny = u.dim(1), nx = u.dim(2);
    std::vector<T> ut(u.size());
    for (std::size_t z = 0; z < nz; ++z)
        for (std::size_t y = 0; y < ny; ++y)
            for (std::size_t x = 0; x < nx; ++x) ut[(y * nx + x) * nz + z] = u(z, y, x);
    return ut;
}

template <class T>
void from_column_major_z(const std::vector<T>& ut, Volume<T>& u) {
    const std::size_t nz = u.dim(0), ny = u.dim(1), nx = u.dim(2);
    for (std::size_t z = 0; z < nz; ++z)
        for (std::size_t y = 0; y < ny; ++y)
            for (std::size_t x = 0; x < nx; ++x) u(z, y, x) = ut[(y * nx + x) * nz + z];
}

inline std::size_t z_block_count(std::size_t nz) {
    const std::size_t threads = static_cast<std::size_t>(std::max(1, max_threads()));
    return std::max<std::size_t>(1, std::min(threads, nz / 8));
}

/// Forward projection of a (y, x, z)-ordered volume for the given angles
/// into out (angle, z, s).
template <class T>
void forward_direct_columns(const std::vector<T>& ut, std::size_t n, std::size_t nz,
                            std::span<const double> angles, std::size_t ns, Grid3<T>& out) {
    const double cs = 0.5 * double(ns - 1);
    const std::size_t blocks = z_block_count(nz);
    parallel_for(blocks, [&](std::size_t b) {
        const std::size_t z0 = b * nz / blocks, z1 = (b + 1) * nz / blocks;
        const std::size_t len = z1 - z0;
        std::vector<T> acc(len), zeros(len, T(0));
        for (std::size_t a = 0; a < angles.size(); ++a) {
            const double ct = std::cos(angles[a]), st = std::sin(angles[a]);
            for (std::size_t s = 0; s < ns; ++s) {
                std::fill(acc.begin(), acc.end(), T(0));
                walk_ray(n, ct, st, double(s) - cs, [&](const RaySample& rs) {
                    const T* col[4];
                    T w[4];
                    for (int q = 0; q < 4; ++q) {
                        col[q] = rs.idx[q] < 0 ? zeros.data() : ut.data() + std::size_t(rs.idx[q]) * nz + z0;
                        w[q] = static_cast<T>(rs.w[q]);
                    }
                    T* __restrict dst = acc.data();
                    for (std::size_t z = 0; z < len; ++z)
                        dst[z] += w[0] * col[0][z] + w[1] * col[1][z] + w[2] * col[2][z] + w[3] * col[3][z];
                });
                for (std::size_t z = 0; z < len; ++z) out(a, z0 + z, s) = acc[z];
            }
        }
    });
}

/// Exact transpose of forward_direct_columns: scatters out (angle, z, s)
/// into a (y, x, z)-ordered volume.
template <class T>
void adjoint_direct_columns(const Grid3<T>& p, std::size_t n, std::size_t nz,
                            std::span<const double> angles, std::vector<T>& ut) {
    const std::size_t ns = p.dim(2);
    const double cs = 0.5 * double(ns - 1);
    std::fill(ut.begin(), ut.end(), T(0));
    const std::size_t blocks = z_block_count(nz);
    parallel_for(blocks, [&](std::size_t b) {
        const std::size_t z0 = b * nz / blocks, z1 = (b + 1) * nz / blocks;
        const std::size_t len = z1 - z0;
        std::vector<T> vals(len);
        for (std::size_t a = 0; a < angles.size(); ++a) {
            const double ct = std::cos(angles[a]), st = std::sin(angles[a]);
            for (std::size_t s = 0; s < ns; ++s) {
                bool nonzero = false;
                for (std::size_t z = 0; z < len; ++z) {
                    vals[z] = p(a, z0 + z, s);
                    nonzero |= vals[z] != T(0);
                }
                if (!nonzero) continue;
                walk_ray(n, ct, st, double(s) - cs, [&](const RaySample& rs) {
                    for (int q = 0; q < 4; ++q) {
                        if (rs.idx[q] < 0) continue;
                        const T w = static_cast<T>(rs.w[q]);
                        T* __restrict col = ut.data() + std::size_t(rs.idx[q]) * nz + z0;
                        const T* src = vals.data();
                        for (std::size_t z = 0; z < len; ++z) col[z] += w * src[z];
                    }
                });
            }
        }
    });
}

template <class T>
void check_volume_geometry(const Volume<T>& u, const ScanGeometry& g, const char* what) {
    require_same_shape(u.shape(), Shape3{g.detector_height, g.volume_n, g.volume_n}, what);
    require(g.detector_width == g.volume_n, ErrorCode::shape_mismatch,
            std::string(what) + ": detector width must equal volume size");
}

} // namespace detail

/// Line integrals along x cos(theta) + y sin(theta) = s, sampled at unit steps
/// with bilinear in-plane interpolation (zero outside the grid).
template <class T>
ProjectionStack<T> xray_forward_direct(const Volume<T>& u, const ScanGeometry& g) {
    detail::check_volume_geometry(u, g, "xray_forward_direct");
    ProjectionStack<T> out(g);
    const auto ut = detail::to_column_major_z(u);
    detail::forward_direct_columns(ut, g.volume_n, g.detector_height, std::span<const double>(g.angles),
                                   g.detector_width, out.data);
    return out;
}

/// Projection of u at a single angle: returns a (1, z, s) grid.
template <class T>
Grid3<T> xray_forward_direct_angle(const Volume<T>& u, double angle) {
    require(u.dim(1) == u.dim(2), ErrorCode::shape_mismatch, "xray_forward_direct_angle: non-square slice");
    Grid3<T> out(1, u.dim(0), u.dim(2));
    const auto ut = detail::to_column_major_z(u);
    const double a[1] = {angle};
    detail::forward_direct_columns(ut, u.dim(1), u.dim(0), std::span<const double>(a, 1), u.dim(2), out);
    return out;
}

template <class T>
Volume<T> xray_adjoint_direct(const ProjectionStack<T>& p) {
    const ScanGeometry& g = p.geometry;
    require_same_shape(p.shape(), Shape3{g.n_angles_total(), g.detector_height, g.detector_width},
                       "xray_adjoint_direct");
    require(g.detector_width == g.volume_n, ErrorCode::shape_mismatch,
            "xray_adjoint_direct: detector width must equal volume size");
    Volume<T> u = make_volume<T>(g);
    std::vector<T> ut(u.size());
    detail::adjoint_direct_columns(p.data, g.volume_n, g.detector_height, std::span<const double>(g.angles), ut);
    detail::from_column_major_z(ut, u);
    return u;
}

/// Forward differences with Neumann boundary (last difference is 0).
template <class T>
VectorField3<T> grad(const Volume<T>& u) {
    const std::size_t nz = u.dim(0), ny = u.dim(1), nx = u.dim(2);
    VectorField3<T> w(u.shape());
    for (std::size_t z = 0; z < nz; ++z)
        for (std::size_t y = 0; y < ny; ++y)
            for (std::size_t x = 0; x < nx; ++x) {
                const T v = u(z, y, x);
                w[0](z, y, x) = x + 1 < nx ? u(z, y, x + 1) - v : T(0);
                w[1](z, y, x) = y + 1 < ny ? u(z, y + 1, x) - v : T(0);
                w[2](z, y, x) = z + 1 < nz ? u(z + 1, y, x) - v : T(0);
            }
    return w;
}

/// Negative transpose of grad: <grad u, w> = -<u, div w>.
template <class T>
Volume<T> div(const VectorField3<T>& w) {
    const Shape3& s = w.shape();
    const std::size_t nz = s[0], ny = s[1], nx = s[2];
    Volume<T> out(s);
    for (std::size_t z = 0; z < nz; ++z)
        for (std::size_t y = 0; y < ny; ++y)
            for (std::size_t x = 0; x < nx; ++x) {
                T v = T(0);
                if (x + 1 < nx) v += w[0](z, y, x);
                if (x > 0) v -= w[0](z, y, x - 1);
                if (y + 1 < ny) v += w[1](z, y, x);
                if (y > 0) v -= w[1](z, y - 1, x);
                if (z + 1 < nz) v += w[2](z, y, x);
                if (z > 0) v -= w[2](z - 1, y, x);
                out(z, y, x) = v;
            }
    return out;
}

} // namespace flowtomo
