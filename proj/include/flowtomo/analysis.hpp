#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <ostream>
#include <vector>

#include "flowtomo/admm.hpp"
#include "flowtomo/fft.hpp"
#include "flowtomo/png.hpp"

namespace flowtomo {

struct FscCurve {
    std::vector<double> shell_radii; // cycles/voxel
    std::vector<double> correlation;
    std::vector<double> half_bit_threshold;
    std::vector<std::size_t> shell_counts;
    std::optional<double> crossing_frequency;
};

/// Half-bit information threshold for a shell of n Fourier voxels.
inline double half_bit_threshold(double n) {
    const double r = std::sqrt(std::max(n, 1.0));
    return (0.2071 + 1.9102 / r) / (1.2071 + 0.9102 / r);
}

namespace detail {

template <class T>
fft::Buffer spectrum3(const Volume<T>& u) {
    fft::Buffer buf(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) buf[i] = fft::cplx(double(u[i]), 0.0);
    fft::Plan plan(buf, {int(u.dim(0)), int(u.dim(1)), int(u.dim(2))}, FFTW_FORWARD);
    plan.execute();
    return buf;
}

inline double signed_frequency(std::size_t k, std::size_t n) {
    const long kk = long(k) <= long(n) / 2 ? long(k) : long(k) - long(n);
    return double(kk) / double(n);
}

} // namespace detail

/// Fourier shell correlation between a and b. Shells are `shell_width`
/// cycles/voxel wide (0 selects one frequency bin, 1 / max dimension) and run
/// up to Nyquist; the crossing is the first shell past the origin where the
/// correlation drops below the half-bit curve.
template <class T>
FscCurve fsc(const Volume<T>& a, const Volume<T>& b, double shell_width = 0.0) {
    require_same_shape(a.shape(), b.shape(), "fsc");
    require_arg(shell_width >= 0.0, "fsc: shell_width must be positive");
    const Shape3& s = a.shape();
    if (shell_width == 0.0) shell_width = 1.0 / double(std::max({s[0], s[1], s[2]}));
    const std::size_t n_shells = std::size_t(std::floor(0.5 / shell_width + 0.5)) + 1;

    const auto fa = detail::spectrum3(a);
    const auto fb = detail::spectrum3(b);
    std::vector<fft::cplx> cross(n_shells);
    std::vector<double> pa(n_shells), pb(n_shells);
    std::vector<std::size_t> counts(n_shells);
    std::size_t i = 0;
    for (std::size_t z = 0; z < s[0]; ++z) {
        const double kz = detail::signed_frequency(z, s[0]);
        for (std::size_t y = 0; y < s[1]; ++y) {
            const double ky = detail::signed_frequency(y, s[1]);
            for (std::size_t x = 0; x < s[2]; ++x, ++i) {
                const double kx = detail::signed_frequency(x, s[2]);
                const std::size_t shell = std::size_t(std::floor(std::sqrt(kx * kx + ky * ky + kz * kz) / shell_width + 0.5));
                if (shell >= n_shells) continue;
                cross[shell] += fa[i] * std::conj(fb[i]);
                pa[shell] += std::norm(fa[i]);
                pb[shell] += std::norm(fb[i]);
                ++counts[shell];
            }
        }
    }
    FscCurve c;
    for (std::size_t r = 0; r < n_shells; ++r) {
        if (counts[r] == 0) continue;
        const double den = std::sqrt(pa[r] * pb[r]);
        c.shell_radii.push_back(double(r) * shell_width);
        c.correlation.push_back(den > 0 ? std::abs(cross[r]) / den : 0.0);
        c.half_bit_threshold.push_back(half_bit_threshold(double(counts[r])));
        c.shell_counts.push_back(counts[r]);
    }
    for (std::size_t r = 1; r < c.correlation.size(); ++r)
        if (c.correlation[r] < c.half_bit_threshold[r]) {
            c.crossing_frequency = c.shell_radii[r];
            break;
        }
    return c;
}

inline void write_fsc_csv(std::ostream& os, const FscCurve& c) {
    os << "frequency,correlation,half_bit,shell_count\n";
    for (std::size_t i = 0; i < c.shell_radii.size(); ++i)
        os << c.shell_radii[i] << ',' << c.correlation[i] << ',' << c.half_bit_threshold[i] << ',' << c.shell_counts[i]
           << '\n';
}

/// Correlation (blue) and half-bit threshold (red) against frequency,
/// y axis spanning [-0.1, 1.05].
inline Raster plot_fsc(const FscCurve& c, std::size_t width = 640, std::size_t height = 400) {
    Raster r(width, height, 3, 255);
    const long m = 30;
    const long w = long(width) - 2 * m, h = long(height) - 2 * m;
    const double fmax = c.shell_radii.empty() ? 0.5 : std::max(c.shell_radii.back(), 1e-12);
    auto px = [&](double f) { return m + long(std::lround(f / fmax * double(w))); };
    auto py = [&](double v) { return m + long(std::lround((1.05 - std::clamp(v, -0.1, 1.05)) / 1.15 * double(h))); };
    draw_line(r, m, m + h, m + w, m + h, {0, 0, 0});
    draw_line(r, m, m, m, m + h, {0, 0, 0});
    draw_line(r, m, py(0.0), m + w, py(0.0), {200, 200, 200});
    for (std::size_t i = 1; i < c.shell_radii.size(); ++i) {
        draw_line(r, px(c.shell_radii[i - 1]), py(c.half_bit_threshold[i - 1]), px(c.shell_radii[i]),
                  py(c.half_bit_threshold[i]), {220, 30, 30});
        draw_line(r, px(c.shell_radii[i - 1]), py(c.correlation[i - 1]), px(c.shell_radii[i]), py(c.correlation[i]),
                  {30, 60, 220});
    }
    return r;
}

struct ErrorReport {
    double rel_l2 = 0;
    double rmse = 0;
    /// 20 log10(max |reference| / rmse); +infinity when u equals the reference.
    double psnr = 0;
    double max_abs = 0;
};

template <class T>
ErrorReport error_report(const Volume<T>& u, const Volume<T>& reference) {
    require_same_shape(u.shape(), reference.shape(), "error_report");
    const double ref_norm = norm(reference);
    require_arg(ref_norm > 0.0, "error_report: reference has zero norm");
    double sq = 0, mx = 0, peak = 0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        const double e = double(u[i]) - double(reference[i]);
        sq += e * e;
        mx = std::max(mx, std::abs(e));
        peak = std::max(peak, std::abs(double(reference[i])));
    }
    ErrorReport r;
    r.rel_l2 = std::sqrt(sq) / ref_norm;
    r.rmse = std::sqrt(sq / double(u.size()));
    r.psnr = r.rmse > 0 ? 20.0 * std::log10(peak / r.rmse) : std::numeric_limits<double>::infinity();
    r.max_abs = mx;
    return r;
}

struct ResidualReport {
    std::vector<double> misfit;        // ||d - psi1|| per angle
    std::vector<double> warped_misfit; // ||d - D_f psi1|| per angle
    std::vector<double> gain;          // misfit / warped_misfit per angle
    double total_misfit = 0;
    double total_warped_misfit = 0;
    double alignment_gain = 0;
    double consensus = 0; // ||Xu - psi1||
};

namespace detail {

inline double ratio_or_inf(double num, double den) {
    if (den > 0) return num / den;
    return num > 0 ? std::numeric_limits<double>::infinity() : 1.0;
}

} // namespace detail

template <class T>
ResidualReport residual_report(const XrayOperator& op, const ProjectionStack<T>& d, const AdmmState<T>& s) {
    check_state(s, d);
    require_same_shape(s.u.shape(), Shape3{d.geometry.detector_height, d.geometry.volume_n, d.geometry.volume_n},
                       "residual_report volume");
    const auto warped = apply_flow(s.psi1, s.flow);
    ResidualReport r;
    double a = 0, b = 0;
    for (std::size_t k = 0; k < d.n_angles(); ++k) {
        const auto dk = d.data.plane(k), pk = s.psi1.data.plane(k), wk = warped.data.plane(k);
        double m = 0, w = 0;
        for (std::size_t i = 0; i < dk.size(); ++i) {
            m += std::pow(double(dk[i]) - double(pk[i]), 2);
            w += std::pow(double(dk[i]) - double(wk[i]), 2);
        }
        a += m;
        b += w;
        r.misfit.push_back(std::sqrt(m));
        r.warped_misfit.push_back(std::sqrt(w));
        r.gain.push_back(detail::ratio_or_inf(std::sqrt(m), std::sqrt(w)));
    }
    r.total_misfit = std::sqrt(a);
    r.total_warped_misfit = std::sqrt(b);
    r.alignment_gain = detail::ratio_or_inf(r.total_misfit, r.total_warped_misfit);
    r.consensus = norm(difference(op.forward(s.u), s.psi1));
    return r;
}

template <class T>
ResidualReport residual_report(const ProjectionStack<T>& d, const AdmmState<T>& s) {
    return residual_report(XrayOperator(d.geometry, ProjectorKind::direct), d, s);
}

} // namespace flowtomo
