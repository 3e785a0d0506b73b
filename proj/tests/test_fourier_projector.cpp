#include <cmath>
#include <complex>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "flowtomo/fourier_projector.hpp"
#include "flowtomo/projector.hpp"

using namespace flowtomo;
constexpr double pi = std::numbers::pi;

namespace {

Volume<double> gaussian_blob(std::size_t nz, std::size_t n, double cx, double cy, double sigma) {
    Volume<double> u(nz, n, n);
    for (std::size_t z = 0; z < nz; ++z)
        for (std::size_t y = 0; y < n; ++y)
            for (std::size_t x = 0; x < n; ++x) {
                const double dx = double(x) - cx, dy = double(y) - cy;
                u(z, y, x) = (1.0 + 0.2 * double(z)) * std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
            }
    return u;
}

double rel_l2(const Grid3<double>& a, const Grid3<double>& b) {
    return norm(difference(a, b)) / norm(b);
}

// Exact band-limited projection: Fourier slice samples by direct summation
// followed by an explicit inverse DFT on a line of length 2 N_s.
ProjectionStack<double> exact_slice_projection(const Volume<double>& u, const ScanGeometry& g) {
    const std::size_t n = g.volume_n, ns = g.detector_width, l = 2 * ns;
    const double c = 0.5 * double(n - 1), cs = 0.5 * double(ns - 1);
    ProjectionStack<double> out(g);
    for (std::size_t z = 0; z < u.dim(0); ++z)
        for (std::size_t a = 0; a < g.n_angles_total(); ++a) {
            const double ct = std::cos(g.angles[a]), st = std::sin(g.angles[a]);
            std::vector<std::complex<double>> line(l);
            for (std::size_t kk = 0; kk < l; ++kk) {
                const double w = (double(kk) - double(l / 2)) / double(l);
                std::complex<double> acc = 0;
                for (std::size_t y = 0; y < n; ++y)
                    for (std::size_t x = 0; x < n; ++x) {
                        const double tau = (double(x) - c) * ct + (double(y) - c) * st;
                        acc += u(z, y, x) * std::polar(1.0, -2 * pi * w * tau);
                    }
                line[kk] = acc;
            }
            for (std::size_t s = 0; s < ns; ++s) {
                std::complex<double> acc = 0;
                for (std::size_t kk = 0; kk < l; ++kk) {
                    const double w = (double(kk) - double(l / 2)) / double(l);
                    acc += line[kk] * std::polar(1.0, 2 * pi * w * (double(s) - cs));
                }
                out.data(a, z, s) = acc.real() / double(l);
            }
        }
    return out;
}

} // namespace

TEST(KaiserBessel, TransformMatchesQuadrature) {
    const KaiserBessel kb(6.0, 2.0);
    for (double w : {0.0, 0.1, 0.2, 0.25}) {
        double acc = 0;
        const int steps = 20000;
        const double h = 6.0 / steps;
        for (int i = 0; i < steps; ++i) {
            const double t = -3.0 + (i + 0.5) * h;
            acc += kb(t) * std::cos(2 * pi * w * t) * h;
        }
        EXPECT_NEAR(kb.transform(w) / acc, 1.0, 1e-6) << w;
    }
}

TEST(FourierProjector, ZeroVolume) {
    const auto g = with_grid(make_sequential(6, pi), 8, 2);
    const auto p = xray_forward_fourier(Volume<double>(2, 8, 8), g);
    EXPECT_EQ(max_abs<double>(p.data.values()), 0.0);
    const auto u = xray_adjoint_fourier(ProjectionStack<double>(g));
    EXPECT_EQ(max_abs<double>(u.values()), 0.0);
}

TEST(FourierProjector, MatchesExactSliceSummation) {
    for (std::size_t n : {9u, 12u}) {
        const auto g = with_grid(make_interlaced(5, 2, pi), n, 1);
        std::mt19937_64 rng(n);
        std::normal_distribution<double> nd;
        Volume<double> u(1, n, n);
        for (auto& v : u.values()) v = nd(rng);
        const auto fast = xray_forward_fourier(u, g);
        const auto exact = exact_slice_projection(u, g);
        EXPECT_LT(rel_l2(fast.data, exact.data), 1e-4) << "n=" << n;
    }
}

TEST(FourierProjector, AgreesWithDirectOnSmoothBlob) {
    const std::size_t n = 64;
    const auto g = with_grid(make_sequential(96, pi), n, 2);
    const auto u = gaussian_blob(2, n, 36.0, 27.5, 4.0);
    const auto pf = xray_forward_fourier(u, g);
    const auto pd = xray_forward_direct(u, g);
    EXPECT_LT(rel_l2(pf.data, pd.data), 1e-2);
}

TEST(FourierProjector, CenterImpulseIsSingleBin) {
    const std::size_t n = 17;
    const auto g = with_grid(make_sequential(24, 2 * pi), n, 1);
    Volume<double> u(1, n, n);
    u(0, 8, 8) = 1.0;
    const auto p = xray_forward_fourier(u, g);
    for (std::size_t a = 0; a < g.n_angles_total(); ++a)
        for (std::size_t s = 0; s < n; ++s) EXPECT_NEAR(p.data(a, 0, s), s == 8 ? 1.0 : 0.0, 1e-2);
}

TEST(FourierProjector, AdjointInnerProduct) {
    std::mt19937_64 rng(9);
    std::normal_distribution<double> nd;
    for (std::size_t n : {8u, 16u, 32u}) {
        const auto g = with_grid(make_interlaced(7, 2, pi), n, 2);
        Volume<double> u(2, n, n);
        for (auto& v : u.values()) v = nd(rng);
        ProjectionStack<double> p(g);
        for (auto& v : p.data.values()) v = nd(rng);
        FourierProjector proj(g);
        const auto xu = proj.forward(u);
        const auto xtp = proj.adjoint(p);
        EXPECT_LT(std::abs(dot(xu, p) - dot(u, xtp)) / (norm(xu) * norm(p)), 1e-3);
    }
}

TEST(FourierProjector, BackprojectionOfOnesMatchesDirect) {
    const std::size_t n = 64;
    const auto g = with_grid(make_sequential(96, pi), n, 1);
    ProjectionStack<double> ones(g, 1.0);
    const auto bf = xray_adjoint_fourier(ones);
    const auto bd = xray_adjoint_direct(ones);
    // compare inside the inscribed circle, where every ray hits the detector
    double num = 0, den = 0;
    const double c = 0.5 * double(n - 1);
    for (std::size_t y = 0; y < n; ++y)
        for (std::size_t x = 0; x < n; ++x) {
            const double r = std::hypot(double(x) - c, double(y) - c);
            if (r > 0.45 * double(n)) continue;
            num += std::pow(bf(0, y, x) - bd(0, y, x), 2);
            den += std::pow(bd(0, y, x), 2);
        }
    EXPECT_LT(std::sqrt(num / den), 1e-2);
}

TEST(FourierProjector, FloatPathTracksDouble) {
    const std::size_t n = 24;
    const auto g = with_grid(make_sequential(16, pi), n, 2);
    const auto u = gaussian_blob(2, n, 11.0, 13.0, 3.0);
    FourierProjector proj(g);
    const auto pd = proj.forward(u);
    const auto pf = proj.forward(u.cast<float>());
    EXPECT_LT(rel_l2(pf.data.cast<double>(), pd.data), 1e-5);
}
