#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "flowtomo/projector.hpp"

using namespace flowtomo;
constexpr double pi = std::numbers::pi;

namespace {

Volume<double> random_volume(std::size_t nz, std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    Volume<double> u(nz, n, n);
    for (auto& v : u.values()) v = nd(rng);
    return u;
}

ProjectionStack<double> random_stack(const ScanGeometry& g, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    ProjectionStack<double> p(g);
    for (auto& v : p.data.values()) v = nd(rng);
    return p;
}

// Bilinear interpolant of one slice, zero outside the grid.
double bilinear(const Volume<double>& u, std::size_t z, double x, double y) {
    const long n = long(u.dim(1));
    const double xf = std::floor(x), yf = std::floor(y);
    double acc = 0;
    for (int q = 0; q < 4; ++q) {
        const long xi = long(xf) + (q & 1), yi = long(yf) + (q >> 1);
        if (xi < 0 || yi < 0 || xi >= n || yi >= n) continue;
        const double w = (1 - std::abs(x - double(xi))) * (1 - std::abs(y - double(yi)));
        acc += w * u(z, std::size_t(yi), std::size_t(xi));
    }
    return acc;
}

// Fine-step ray marching of the continuous bilinear interpolant.
double ray_march(const Volume<double>& u, std::size_t z, double theta, double sigma, double step = 0.01) {
    const double n = double(u.dim(1));
    const double c = 0.5 * (n - 1);
    const double ct = std::cos(theta), st = std::sin(theta);
    double acc = 0;
    for (double t = -n; t <= n; t += step) {
        acc += bilinear(u, z, c + sigma * ct - t * st, c + sigma * st + t * ct);
    }
    return acc * step;
}

double rel_adjoint_gap(const Volume<double>& u, const ProjectionStack<double>& p) {
    const auto xu = xray_forward_direct(u, p.geometry);
    const auto xtp = xray_adjoint_direct(p);
    return std::abs(dot(xu, p) - dot(u, xtp)) / (norm(xu) * norm(p));
}

} // namespace

TEST(DirectProjector, ZeroVolumeGivesZeroProjections) {
    const auto g = with_grid(make_sequential(7, pi), 9, 3);
    const auto p = xray_forward_direct(Volume<double>(3, 9, 9), g);
    EXPECT_EQ(max_abs<double>(p.data.values()), 0.0);
}

TEST(DirectProjector, CenterImpulse) {
    const std::size_t n = 17;
    const auto g = with_grid(make_sequential(36, 2 * pi), n, 1);
    Volume<double> u(1, n, n);
    u(0, 8, 8) = 1.0;
    const auto p = xray_forward_direct(u, g);
    for (std::size_t a = 0; a < g.n_angles_total(); ++a) {
        double mass = 0, moment = 0;
        for (std::size_t s = 0; s < n; ++s) {
            mass += p.data(a, 0, s);
            moment += p.data(a, 0, s) * (double(s) - 8.0);
        }
        // the projection is centred on the middle bin, which carries the peak
        EXPECT_NEAR(moment, 0.0, 1e-12);
        // unit-step sampling of the bilinear footprint over-counts at oblique
        // angles (worst at 45 degrees, 4/3)
        EXPECT_GE(mass, 1.0 - 1e-12);
        EXPECT_LE(mass, 4.0 / 3.0 + 1e-3);
        for (std::size_t s = 0; s < n; ++s) EXPECT_NEAR(p.data(a, 0, s), p.data(a, 0, n - 1 - s), 1e-12);
        for (std::size_t s = 0; s < n; ++s) EXPECT_LE(p.data(a, 0, s), p.data(a, 0, 8) + 1e-15);
    }
    // axis-aligned angles hit voxel centres: a single bin of value 1
    for (std::size_t a : {0u, 9u, 18u, 27u}) {
        for (std::size_t s = 0; s < n; ++s) EXPECT_NEAR(p.data(a, 0, s), s == 8 ? 1.0 : 0.0, 1e-12);
    }
}

TEST(DirectProjector, OffAxisCubeMatchesRayMarching) {
    const std::size_t n = 32;
    ScanGeometry g = with_grid(make_sequential(1, pi), n, 2);
    Volume<double> u(2, n, n);
    for (std::size_t z = 0; z < 2; ++z)
        for (std::size_t y = 4; y < 12; ++y)
            for (std::size_t x = 18; x < 26; ++x) u(z, y, x) = 1.0;
    const auto p = xray_forward_direct(u, g);
    // flat top of height 8 (ray through x = 19..24 sees all eight voxels)
    for (std::size_t s = 19; s < 25; ++s) EXPECT_NEAR(p.data(0, 0, s), 8.0, 1e-12);
    const double c = 0.5 * double(n - 1);
    double num = 0, den = 0;
    for (std::size_t s = 0; s < n; ++s) {
        const double ref = ray_march(u, 0, 0.0, double(s) - c);
        num += (p.data(0, 0, s) - ref) * (p.data(0, 0, s) - ref);
        den += ref * ref;
    }
    EXPECT_LT(std::sqrt(num / den), 0.01);
}

TEST(DirectProjector, SmoothBlobMatchesRayMarchingAtObliqueAngles) {
    const std::size_t n = 32;
    const std::vector<double> thetas{0.3, 0.9, 2.2};
    ScanGeometry g = make_sequential(1, pi);
    g.angles = thetas;
    g.time_stamps = {0, 0.5, 1};
    g.n_per_rotation = 3;
    g = with_grid(g, n, 1);
    Volume<double> u(1, n, n);
    for (std::size_t y = 0; y < n; ++y)
        for (std::size_t x = 0; x < n; ++x) {
            const double dx = double(x) - 19.0, dy = double(y) - 13.0;
            u(0, y, x) = std::exp(-(dx * dx + dy * dy) / (2 * 3.0 * 3.0));
        }
    const auto p = xray_forward_direct(u, g);
    const double c = 0.5 * double(n - 1);
    for (std::size_t a = 0; a < thetas.size(); ++a) {
        double num = 0, den = 0;
        for (std::size_t s = 0; s < n; ++s) {
            const double ref = ray_march(u, 0, thetas[a], double(s) - c);
            num += (p.data(a, 0, s) - ref) * (p.data(a, 0, s) - ref);
            den += ref * ref;
        }
        EXPECT_LT(std::sqrt(num / den), 0.01) << "angle " << thetas[a];
    }
}

TEST(DirectProjector, AdjointInnerProduct) {
    std::uint64_t seed = 1;
    for (std::size_t n : {8u, 16u, 32u}) {
        for (std::size_t na : {5u, 8u}) {
            const auto g = with_grid(make_interlaced(na, 2, pi), n, 3);
            const auto u = random_volume(3, n, seed++);
            const auto p = random_stack(g, seed++);
            EXPECT_LT(rel_adjoint_gap(u, p), 1e-6) << "n=" << n;
        }
    }
}

TEST(DirectProjector, AdjointOfSingleBinIsExplicitWeightLine) {
    const std::size_t n = 12;
    const auto g = with_grid(make_sequential(5, pi), n, 1);
    ProjectionStack<double> p(g);
    const std::size_t a = 2, s = 4;
    p.data(a, 0, s) = 1.0;
    const auto bp = xray_adjoint_direct(p);
    // explicit enumeration: column (a, s) of the system matrix via unit voxels
    const double c = 0.5 * double(n - 1);
    const double th = g.angles[a];
    for (std::size_t y = 0; y < n; ++y)
        for (std::size_t x = 0; x < n; ++x) {
            Volume<double> e(1, n, n);
            e(0, y, x) = 1.0;
            const double w = xray_forward_direct(e, g).data(a, 0, s);
            EXPECT_NEAR(bp(0, y, x), w, 1e-14);
            if (w != 0.0) {
                // every touched voxel lies within one bilinear cell of the ray
                const double dist = (double(x) - c) * std::cos(th) + (double(y) - c) * std::sin(th) -
                                    (double(s) - c);
                EXPECT_LT(std::abs(dist), std::sqrt(2.0));
            }
        }
    EXPECT_GT(max_abs<double>(bp.values()), 0.0);
}

TEST(DirectProjector, ZeroStackAdjointIsZero) {
    const auto g = with_grid(make_sequential(4, pi), 6, 2);
    const auto u = xray_adjoint_direct(ProjectionStack<double>(g));
    EXPECT_EQ(max_abs<double>(u.values()), 0.0);
}

TEST(DirectProjector, Linearity) {
    const auto g = with_grid(make_interlaced(6, 2, pi), 10, 2);
    const auto u = random_volume(2, 10, 5), v = random_volume(2, 10, 6);
    Volume<double> w = u;
    scale(w, 2.5);
    axpy(-0.75, v, w);
    auto lhs = xray_forward_direct(w, g);
    auto rhs = xray_forward_direct(u, g);
    scale(rhs, 2.5);
    axpy(-0.75, xray_forward_direct(v, g), rhs);
    EXPECT_LT(norm(difference(lhs, rhs)) / norm(rhs), 1e-13);
}

TEST(DirectProjector, ShapeMismatchRejected) {
    const auto g = with_grid(make_sequential(4, pi), 8, 2);
    try {
        xray_forward_direct(Volume<double>(2, 8, 7), g);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::shape_mismatch);
    }
}

TEST(DirectProjector, OpposedAnglesAreMirrorImages) {
    const auto g = with_grid(make_sequential(8, 2 * pi), 11, 2);
    const auto p = xray_forward_direct(random_volume(2, 11, 3), g);
    for (std::size_t a = 0; a < 4; ++a)
        for (std::size_t z = 0; z < 2; ++z)
            for (std::size_t s = 0; s < 11; ++s) EXPECT_NEAR(p.data(a, z, s), p.data(a + 4, z, 10 - s), 1e-10);
}

TEST(Gradient, ConstantVolumeHasZeroGradient) {
    const auto w = grad(Volume<double>(4, 5, 6, 3.0));
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(max_abs<double>(w[c].values()), 0.0);
}

TEST(Gradient, RampInX) {
    Volume<double> u(3, 4, 5);
    for (std::size_t z = 0; z < 3; ++z)
        for (std::size_t y = 0; y < 4; ++y)
            for (std::size_t x = 0; x < 5; ++x) u(z, y, x) = double(x);
    const auto w = grad(u);
    for (std::size_t z = 0; z < 3; ++z)
        for (std::size_t y = 0; y < 4; ++y)
            for (std::size_t x = 0; x < 5; ++x) {
                EXPECT_EQ(w[0](z, y, x), x < 4 ? 1.0 : 0.0);
                EXPECT_EQ(w[1](z, y, x), 0.0);
                EXPECT_EQ(w[2](z, y, x), 0.0);
            }
}

TEST(Gradient, MatchesHandEnumeration) {
    const auto u = random_volume(4, 4, 11);
    const auto w = grad(u);
    for (std::size_t z = 0; z < 4; ++z)
        for (std::size_t y = 0; y < 4; ++y)
            for (std::size_t x = 0; x < 4; ++x) {
                EXPECT_EQ(w[0](z, y, x), x == 3 ? 0.0 : u(z, y, x + 1) - u(z, y, x));
                EXPECT_EQ(w[1](z, y, x), y == 3 ? 0.0 : u(z, y + 1, x) - u(z, y, x));
                EXPECT_EQ(w[2](z, y, x), z == 3 ? 0.0 : u(z + 1, y, x) - u(z, y, x));
            }
}

TEST(Divergence, IsNegativeAdjointOfGradient) {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> nd;
    for (int trial = 0; trial < 5; ++trial) {
        const auto u = random_volume(6, 6, 100 + trial);
        VectorField3<double> w(u.shape());
        for (auto& c : w.comp)
            for (auto& v : c.values()) v = nd(rng);
        const double lhs = dot(grad(u), w);
        const double rhs = -dot(u, div(w));
        EXPECT_LT(std::abs(lhs - rhs) / (norm(grad(u)) * norm(w)), 1e-12);
    }
}

TEST(Divergence, ZeroAndConstantFields) {
    const Shape3 s{4, 5, 6};
    EXPECT_EQ(max_abs<double>(div(VectorField3<double>(s)).values()), 0.0);
    VectorField3<double> w(s);
    w[0].fill(1.0);
    const auto d = div(w);
    for (std::size_t z = 0; z < 4; ++z)
        for (std::size_t y = 0; y < 5; ++y)
            for (std::size_t x = 0; x < 6; ++x) {
                const double expect = x == 0 ? 1.0 : (x == 5 ? -1.0 : 0.0);
                EXPECT_EQ(d(z, y, x), expect);
            }
}
