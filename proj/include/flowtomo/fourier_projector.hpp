#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "flowtomo/fft.hpp"
#include "flowtomo/types.hpp"

namespace flowtomo {

/// Kaiser-Bessel gridding kernel on an oversampled grid.
struct KaiserBessel {
    double width = 6.0;        // support [-width/2, width/2] in grid samples
    double oversampling = 2.0; // grid size / image size
    double beta = 0.0;
    double i0_beta = 1.0;

    KaiserBessel() : KaiserBessel(6.0, 2.0) {}
    KaiserBessel(double w, double os) : width(w), oversampling(os) {
        const double r = w / os * (os - 0.5);
        beta = std::numbers::pi * std::sqrt(r * r - 0.8);
        i0_beta = std::cyl_bessel_i(0.0, beta);
    }

    /// Kernel value at offset t (grid samples); peak 1.
    double operator()(double t) const {
        const double u = 2.0 * t / width;
        if (std::abs(u) > 1.0) return 0.0;
        return std::cyl_bessel_i(0.0, beta * std::sqrt(1.0 - u * u)) / i0_beta;
    }

    /// Continuous Fourier transform of the kernel at frequency w
    /// (cycles per grid sample).
    double transform(double w) const {
        const double a = std::numbers::pi * width * w;
        const double q = beta * beta - a * a;
        double v;
        if (q > 0) {
            const double r = std::sqrt(q);
            v = std::sinh(r) / r;
        } else if (q < 0) {
            const double r = std::sqrt(-q);
            v = std::sin(r) / r;
        } else {
            v = 1.0;
        }
        return width * v / i0_beta;
    }
};

/// Fourier-slice projector: each z-slice is deapodised, zero-padded to a
/// 2x oversampled grid and transformed; polar lines are gathered with a
/// Kaiser-Bessel kernel (6 taps per axis) and inverse-transformed along s
/// on a line of length 2 N_s. The adjoint applies the transposed steps, so
/// the pair is adjoint to round-off.
class FourierProjector {
public:
    explicit FourierProjector(const ScanGeometry& g)
        : geometry_(g), n_(g.volume_n), ns_(g.detector_width), nz_(g.detector_height),
          m_(2 * g.volume_n), l_(2 * g.detector_width), grid_(m_ * m_), line_(l_) {
        require_arg(n_ >= 1 && ns_ == n_, "FourierProjector: detector width must equal volume size");
        grid_fwd_ = fft::Plan(grid_, {int(m_), int(m_)}, FFTW_FORWARD);
        grid_bwd_ = fft::Plan(grid_, {int(m_), int(m_)}, FFTW_BACKWARD);
        line_fwd_ = fft::Plan(line_, {int(l_)}, FFTW_FORWARD);
        line_bwd_ = fft::Plan(line_, {int(l_)}, FFTW_BACKWARD);
        precompute();
    }

    const ScanGeometry& geometry() const noexcept { return geometry_; }

    template <class T>
    ProjectionStack<T> forward(const Volume<T>& u) {
        require_same_shape(u.shape(), Shape3{nz_, n_, n_}, "xray_forward_fourier");
        ProjectionStack<T> out(geometry_);
        const std::size_t na = geometry_.n_angles_total();
        for (std::size_t z = 0; z < nz_; ++z) {
            grid_.clear();
            for (std::size_t y = 0; y < n_; ++y)
                for (std::size_t x = 0; x < n_; ++x)
                    grid_[wrap_index(y) * m_ + wrap_index(x)] = double(u(z, y, x)) * deapod_[y] * deapod_[x];
            grid_fwd_.execute();
            for (std::size_t a = 0; a < na; ++a) {
                for (std::size_t k = 0; k < l_; ++k) {
                    const Point& pt = points_[a * l_ + k];
                    fft::cplx acc(0.0, 0.0);
                    for (int ty = 0; ty < taps; ++ty) {
                        const fft::cplx* row = grid_.data() + pt.iy[ty] * m_;
                        fft::cplx racc(0.0, 0.0);
                        for (int tx = 0; tx < taps; ++tx) racc += row[pt.ix[tx]] * pt.wx[tx];
                        acc += racc * pt.wy[ty];
                    }
                    line_[pt.line_index] = acc * pt.phase;
                }
                line_bwd_.execute();
                const double inv_l = 1.0 / double(l_);
                for (std::size_t s = 0; s < ns_; ++s) out.data(a, z, s) = static_cast<T>(line_[s].real() * inv_l);
            }
        }
        return out;
    }

    template <class T>
    Volume<T> adjoint(const ProjectionStack<T>& p) {
        require_same_shape(p.shape(), Shape3{geometry_.n_angles_total(), nz_, ns_}, "xray_adjoint_fourier");
        Volume<T> u(nz_, n_, n_);
        const std::size_t na = geometry_.n_angles_total();
        const double inv_l = 1.0 / double(l_);
        for (std::size_t z = 0; z < nz_; ++z) {
            grid_.clear();
            for (std::size_t a = 0; a < na; ++a) {
                line_.clear();
                for (std::size_t s = 0; s < ns_; ++s) line_[s] = double(p.data(a, z, s)) * inv_l;
                line_fwd_.execute();
                for (std::size_t k = 0; k < l_; ++k) {
                    const Point& pt = points_[a * l_ + k];
                    const fft::cplx q = line_[pt.line_index] * std::conj(pt.phase);
                    for (int ty = 0; ty < taps; ++ty) {
                        fft::cplx* row = grid_.data() + pt.iy[ty] * m_;
                        const fft::cplx qy = q * pt.wy[ty];
                        for (int tx = 0; tx < taps; ++tx) row[pt.ix[tx]] += qy * pt.wx[tx];
                    }
                }
            }
            grid_bwd_.execute();
            for (std::size_t y = 0; y < n_; ++y)
                for (std::size_t x = 0; x < n_; ++x)
                    u(z, y, x) = static_cast<T>(grid_[wrap_index(y) * m_ + wrap_index(x)].real() * deapod_[y] *
                                                deapod_[x]);
        }
        return u;
    }

private:
    static constexpr int taps = 6;

    struct Point {
        std::size_t line_index;
        std::size_t ix[taps];
        std::size_t iy[taps];
        double wx[taps];
        double wy[taps];
        fft::cplx phase;
    };

    // Image index n sits at grid position (n - origin) mod M.
    std::size_t wrap_index(std::size_t n) const {
        const long m = long(n) - long(origin_);
        return std::size_t((m % long(m_) + long(m_)) % long(m_));
    }

    void precompute() {
        const KaiserBessel kb(double(taps), double(m_) / double(n_));
        const double c = 0.5 * double(n_ - 1);
        origin_ = std::size_t(std::floor(c));
        const double shift = c - double(origin_);
        const double cs = 0.5 * double(ns_ - 1);

        deapod_.resize(n_);
        for (std::size_t n = 0; n < n_; ++n) {
            const double mm = double(n) - double(origin_);
            deapod_[n] = 1.0 / kb.transform(mm / double(m_));
        }

        const std::size_t na = geometry_.n_angles_total();
        points_.resize(na * l_);
        const double two_pi = 2.0 * std::numbers::pi;
        for (std::size_t a = 0; a < na; ++a) {
            const double ct = std::cos(geometry_.angles[a]), st = std::sin(geometry_.angles[a]);
            for (std::size_t kk = 0; kk < l_; ++kk) {
                const long k = long(kk) - long(l_ / 2);
                Point& pt = points_[a * l_ + kk];
                pt.line_index = std::size_t((k + long(l_)) % long(l_));
                // polar point in grid units: M * xi, xi = (k / L) (cos, sin)
                const double scale = double(m_) / double(l_);
                const double gx = scale * double(k) * ct, gy = scale * double(k) * st;
                const long fx = long(std::floor(gx)), fy = long(std::floor(gy));
                for (int t = 0; t < taps; ++t) {
                    const long jx = fx - (taps / 2 - 1) + t, jy = fy - (taps / 2 - 1) + t;
                    pt.wx[t] = kb(gx - double(jx));
                    pt.wy[t] = kb(gy - double(jy));
                    pt.ix[t] = std::size_t(((jx % long(m_)) + long(m_)) % long(m_));
                    pt.iy[t] = std::size_t(((jy % long(m_)) + long(m_)) % long(m_));
                }
                const double xi_sum = (gx + gy) / double(m_);
                const double ph = two_pi * (shift * xi_sum - double(k) * cs / double(l_));
                pt.phase = fft::cplx(std::cos(ph), std::sin(ph));
            }
        }
    }

    ScanGeometry geometry_;
    std::size_t n_, ns_, nz_, m_, l_;
    std::size_t origin_ = 0;
    std::vector<double> deapod_;
    std::vector<Point> points_;
    fft::Buffer grid_;
    fft::Buffer line_;
    fft::Plan grid_fwd_, grid_bwd_, line_fwd_, line_bwd_;
};

template <class T>
ProjectionStack<T> xray_forward_fourier(const Volume<T>& u, const ScanGeometry& g) {
    FourierProjector proj(g);
    return proj.forward(u);
}

template <class T>
Volume<T> xray_adjoint_fourier(const ProjectionStack<T>& p) {
    FourierProjector proj(p.geometry);
    return proj.adjoint(p);
}

} // namespace flowtomo
