#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <utility>
#include <numbers>
#include <vector>

#include "flowtomo/fft.hpp"
#include "flowtomo/image.hpp"
#include "flowtomo/parallel.hpp"
#include "flowtomo/projector.hpp"

namespace flowtomo {

struct PhantomSpec {
    std::size_t n = 64;
    std::size_t n_tubes = 12;
    std::pair<double, double> radius_range{2.0, 6.0};
    std::pair<double, double> intensity_range{0.5, 1.0};
    std::uint64_t seed = 0;
};

struct DeformationSpec {
    double max_displacement = 5.0;
    double smoothness_sigma = 8.0;
    double rate = 3.0;
    std::uint64_t seed = 0;
};

struct NoiseSpec {
    std::optional<double> poisson_photons = 1e5;
    std::optional<double> background_amplitude = 0.1;
    /// Pixels; 0 selects N/4.
    double background_sigma = 0.0;
    std::uint64_t seed = 0;
};

inline void validate(const PhantomSpec& s) {
    require_arg(s.n >= 16, "phantom: n must be >= 16");
    require_arg(s.radius_range.first > 0 && s.radius_range.first <= s.radius_range.second &&
                    s.radius_range.second < double(s.n) / 4.0,
                "phantom: radius_range must lie in (0, n/4)");
    require_arg(s.intensity_range.first <= s.intensity_range.second, "phantom: intensity_range must be ordered");
}

inline void validate(const DeformationSpec& s) {
    require_arg(s.max_displacement >= 0 && std::isfinite(s.max_displacement), "deformation: max_displacement must be >= 0");
    require_arg(s.smoothness_sigma >= 0, "deformation: smoothness_sigma must be >= 0");
    require_arg(std::isfinite(s.rate), "deformation: rate must be finite");
}

inline void validate(const NoiseSpec& s) {
    require_arg(!s.poisson_photons || *s.poisson_photons >= 1.0, "noise: poisson_photons must be >= 1");
    require_arg(!s.background_amplitude || *s.background_amplitude >= 0.0, "noise: background_amplitude must be >= 0");
    require_arg(s.background_sigma >= 0.0, "noise: background_sigma must be >= 0");
}

/// Cylinder with hemispherical caps between points a and b, stored (x, y, z).
struct Capsule {
    std::array<double, 3> a, b;
    double radius;
    double intensity;

    double distance(double x, double y, double z) const {
        const double dx = b[0] - a[0], dy = b[1] - a[1], dz = b[2] - a[2];
        const double px = x - a[0], py = y - a[1], pz = z - a[2];
        const double len2 = dx * dx + dy * dy + dz * dz;
        const double t = len2 > 0 ? std::clamp((px * dx + py * dy + pz * dz) / len2, 0.0, 1.0) : 0.0;
        return std::sqrt(std::pow(px - t * dx, 2) + std::pow(py - t * dy, 2) + std::pow(pz - t * dz, 2));
    }
};

/// Tubes drawn from the phantom seed: endpoints uniform in the inscribed
/// sphere shrunk by the radius, so every capsule stays inside the volume.
inline std::vector<Capsule> tube_set(const PhantomSpec& spec) {
    validate(spec);
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::uniform_real_distribution<double> rad(spec.radius_range.first, spec.radius_range.second);
    std::uniform_real_distribution<double> inten(spec.intensity_range.first, spec.intensity_range.second);
    const double c = 0.5 * double(spec.n - 1);
    std::vector<Capsule> out;
    for (std::size_t t = 0; t < spec.n_tubes; ++t) {
        Capsule cap{};
        cap.radius = rad(rng);
        cap.intensity = inten(rng);
        const double reach = std::max(0.0, 0.5 * double(spec.n) - cap.radius - 1.0);
        for (auto* p : {&cap.a, &cap.b}) {
            std::array<double, 3> v;
            do {
                for (auto& e : v) e = unit(rng);
            } while (v[0] * v[0] + v[1] * v[1] + v[2] * v[2] > 1.0);
            for (std::size_t k = 0; k < 3; ++k) (*p)[k] = c + reach * v[k];
        }
        out.push_back(cap);
    }
    return out;
}

/// Voxel occupancy of capsules with 4x4x4 supersampling on boundary voxels.
template <class T = float>
Volume<T> rasterize_capsules(const std::vector<Capsule>& caps, std::size_t n) {
    Volume<T> u(n, n, n);
    constexpr int ss = 4;
    const double half_diag = 0.5 * std::sqrt(3.0);
    parallel_for(n, [&](std::size_t z) {
        for (const auto& cap : caps) {
            const double lo_z = std::min(cap.a[2], cap.b[2]) - cap.radius - 1, hi_z = std::max(cap.a[2], cap.b[2]) + cap.radius + 1;
            if (double(z) < lo_z || double(z) > hi_z) continue;
            const auto lo = [&](int k) { return std::size_t(std::clamp(std::floor(std::min(cap.a[k], cap.b[k]) - cap.radius - 1), 0.0, double(n - 1))); };
            const auto hi = [&](int k) { return std::size_t(std::clamp(std::ceil(std::max(cap.a[k], cap.b[k]) + cap.radius + 1), 0.0, double(n - 1))); };
            for (std::size_t y = lo(1); y <= hi(1); ++y)
                for (std::size_t x = lo(0); x <= hi(0); ++x) {
                    const double dist = cap.distance(double(x), double(y), double(z));
                    double occ;
                    if (dist <= cap.radius - half_diag) {
                        occ = 1.0;
                    } else if (dist >= cap.radius + half_diag) {
                        continue;
                    } else {
                        int inside = 0;
                        for (int i = 0; i < ss; ++i)
                            for (int j = 0; j < ss; ++j)
                                for (int k = 0; k < ss; ++k) {
                                    const double ox = (i + 0.5) / ss - 0.5, oy = (j + 0.5) / ss - 0.5, oz = (k + 0.5) / ss - 0.5;
                                    inside += cap.distance(double(x) + ox, double(y) + oy, double(z) + oz) <= cap.radius;
                                }
                        occ = double(inside) / (ss * ss * ss);
                    }
                    u(z, y, x) = static_cast<T>(double(u(z, y, x)) + cap.intensity * occ);
                }
        }
    });
    return u;
}

/// Deterministic union of random capsules with additive intensities, n^3 voxels.
template <class T = float>
Volume<T> make_tube_phantom(const PhantomSpec& spec) {
    return rasterize_capsules<T>(tube_set(spec), spec.n);
}

/// Periodically smoothed white-noise displacement field (comp 0 = x, 1 = y, 2 = z) scaled
/// so the largest per-voxel magnitude equals max_displacement.
template <class T = float>
VectorField3<T> make_deformation_field(const DeformationSpec& spec, std::size_t n, std::size_t nz = 0) {
    validate(spec);
    if (nz == 0) nz = n;
    const Shape3 shape{nz, n, n};
    VectorField3<T> out(shape);
    if (spec.max_displacement == 0.0) return out;
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> nd;
    const std::size_t count = shape[0] * shape[1] * shape[2];
    // Periodic Gaussian filtering keeps the field statistics uniform up to the faces.
    std::vector<double> gain(count);
    {
        const double c = -2.0 * std::numbers::pi * std::numbers::pi * spec.smoothness_sigma * spec.smoothness_sigma;
        auto freq = [](std::size_t k, std::size_t len) {
            const double kk = k <= len / 2 ? double(k) : double(k) - double(len);
            return kk / double(len);
        };
        std::size_t i = 0;
        for (std::size_t z = 0; z < shape[0]; ++z)
            for (std::size_t y = 0; y < shape[1]; ++y)
                for (std::size_t x = 0; x < shape[2]; ++x, ++i) {
                    const double kz = freq(z, shape[0]), ky = freq(y, shape[1]), kx = freq(x, shape[2]);
                    gain[i] = std::exp(c * (kx * kx + ky * ky + kz * kz));
                }
    }
    std::array<std::vector<double>, 3> comp;
    fft::Buffer buf(count);
    const std::vector<int> dims{int(shape[0]), int(shape[1]), int(shape[2])};
    fft::Plan fwd(buf, dims, FFTW_FORWARD), inv(buf, dims, FFTW_BACKWARD);
    for (auto& c : comp) {
        for (std::size_t i = 0; i < count; ++i) buf[i] = fft::cplx(nd(rng), 0.0);
        fwd.execute();
        for (std::size_t i = 0; i < count; ++i) buf[i] *= gain[i];
        inv.execute();
        c.resize(count);
        for (std::size_t i = 0; i < count; ++i) c[i] = buf[i].real();
    }
    double peak = 0.0;
    for (std::size_t i = 0; i < comp[0].size(); ++i)
        peak = std::max(peak, std::sqrt(comp[0][i] * comp[0][i] + comp[1][i] * comp[1][i] + comp[2][i] * comp[2][i]));
    const double f = peak > 0 ? spec.max_displacement / peak : 0.0;
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < comp[c].size(); ++i) out[c][i] = static_cast<T>(comp[c][i] * f);
    return out;
}

/// Deformation amount at normalized time t: (1 - exp(-rate t)) / (1 - exp(-rate)).
inline double deformation_amount(double t, double rate = 3.0) {
    if (std::abs(rate) < 1e-12) return t;
    return std::expm1(-rate * t) / std::expm1(-rate);
}

namespace detail {

template <class T>
double trilinear_clamped(const Volume<T>& u, double z, double y, double x) {
    const std::size_t nz = u.dim(0), ny = u.dim(1), nx = u.dim(2);
    z = std::clamp(z, 0.0, double(nz - 1));
    y = std::clamp(y, 0.0, double(ny - 1));
    x = std::clamp(x, 0.0, double(nx - 1));
    const double fz = std::floor(z), fy = std::floor(y), fx = std::floor(x);
    const std::size_t z0 = std::size_t(fz), y0 = std::size_t(fy), x0 = std::size_t(fx);
    const std::size_t z1 = std::min(z0 + 1, nz - 1), y1 = std::min(y0 + 1, ny - 1), x1 = std::min(x0 + 1, nx - 1);
    const double wz = z - fz, wy = y - fy, wx = x - fx;
    auto row = [&](std::size_t zz, std::size_t yy) {
        return (1 - wx) * double(u(zz, yy, x0)) + wx * double(u(zz, yy, x1));
    };
    const double p0 = (1 - wy) * row(z0, y0) + wy * row(z0, y1);
    const double p1 = (1 - wy) * row(z1, y0) + wy * row(z1, y1);
    return (1 - wz) * p0 + wz * p1;
}

template <class T, class Fn>
void deform_into(const Volume<T>& u, const VectorField3<T>& field, double amount, Volume<T>& out, Fn&& loop) {
    const std::size_t nz = u.dim(0), ny = u.dim(1), nx = u.dim(2);
    loop(nz, [&](std::size_t z) {
        for (std::size_t y = 0; y < ny; ++y)
            for (std::size_t x = 0; x < nx; ++x) {
                const double dx = amount * double(field[0](z, y, x));
                const double dy = amount * double(field[1](z, y, x));
                const double dz = amount * double(field[2](z, y, x));
                out(z, y, x) = static_cast<T>(trilinear_clamped(u, double(z) + dz, double(y) + dy, double(x) + dx));
            }
    });
}

} // namespace detail

/// Backward warp: out(p) = u(p + amount * field(p)), trilinear with replicate edges.
template <class T>
Volume<T> deform_volume(const Volume<T>& u, const VectorField3<T>& field, double amount) {
    require_same_shape(field.shape(), u.shape(), "deform_volume");
    require_arg(std::isfinite(amount), "deform_volume: amount must be finite");
    if (amount == 0.0) return u;
    Volume<T> out(u.shape());
    detail::deform_into(u, field, amount, out, [](std::size_t n, auto&& fn) { parallel_for(n, fn); });
    return out;
}

/// Applies Poisson counting noise and low-frequency background in place.
/// Each angle draws from its own generator seeded with seed ^ index.
template <class T>
void add_noise(ProjectionStack<T>& p, const NoiseSpec& noise) {
    validate(noise);
    const double p_scale = max_abs<T>(p.data.values());
    if (p_scale == 0.0) return;
    const double sigma = noise.background_sigma > 0 ? noise.background_sigma : double(p.width()) / 4.0;
    const auto kernel = gaussian_kernel(sigma);
    const Shape3 plane{1, p.height(), p.width()};
    parallel_for(p.n_angles(), [&](std::size_t a) {
        std::mt19937_64 rng(noise.seed ^ std::uint64_t(a));
        auto img = p.data.plane(a);
        if (noise.poisson_photons) {
            const double photons = *noise.poisson_photons;
            for (auto& v : img) {
                const double mean = photons * std::exp(-double(v) / p_scale);
                std::poisson_distribution<long long> pd(mean);
                const double counts = std::max<double>(double(pd(rng)), 0.5);
                v = static_cast<T>(-std::log(counts / photons) * p_scale);
            }
        }
        if (noise.background_amplitude && *noise.background_amplitude > 0) {
            std::normal_distribution<double> nd;
            std::vector<double> g(img.size());
            for (auto& v : g) v = nd(rng);
            convolve_axis(g, plane, 1, kernel);
            convolve_axis(g, plane, 2, kernel);
            double m = 0;
            for (double v : g) m = std::max(m, std::abs(v));
            const double k = m > 0 ? *noise.background_amplitude * p_scale / m : 0.0;
            for (std::size_t i = 0; i < img.size(); ++i) img[i] = static_cast<T>(double(img[i]) + k * g[i]);
        }
    });
}

/// Projections of a deforming object: acquisition i sees u0 warped by
/// deformation_amount(t_i) * field and projected at its own angle.
template <class T>
ProjectionStack<T> simulate_scan(const Volume<T>& u0, const VectorField3<T>& field, const ScanGeometry& g,
                                 double deformation_rate = 3.0, const std::optional<NoiseSpec>& noise = std::nullopt) {
    validate(g);
    detail::check_volume_geometry(u0, g, "simulate_scan");
    require_same_shape(field.shape(), u0.shape(), "simulate_scan field");
    bool moving = false;
    for (const auto& c : field.comp) moving = moving || max_abs<T>(c.values()) > 0.0;

    ProjectionStack<T> p(g);
    if (!moving) {
        p = xray_forward_direct(u0, g);
    } else {
        const auto serial = [](std::size_t n, auto&& fn) {
            for (std::size_t i = 0; i < n; ++i) fn(i);
        };
        parallel_for(g.n_angles_total(), [&](std::size_t a) {
            const double amount = deformation_amount(g.time_stamps[a], deformation_rate);
            Volume<T> ua(u0.shape());
            if (amount == 0.0)
                ua = u0;
            else
                detail::deform_into(u0, field, amount, ua, serial);
            const auto proj = xray_forward_direct_angle(ua, g.angles[a]);
            std::copy(proj.values().begin(), proj.values().end(), p.data.plane(a).begin());
        });
    }
    if (noise) add_noise(p, *noise);
    return p;
}

} // namespace flowtomo
