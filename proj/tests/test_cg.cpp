#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "flowtomo/cg.hpp"
#include "flowtomo/projector.hpp"

using namespace flowtomo;

namespace {

// Dense quadratic 1/2 x'Ax - b'x over Grid3 vectors of shape (1, 1, n).
struct DenseQuadratic {
    Eigen::MatrixXd a;
    Eigen::VectorXd b;

    Grid3<double> wrap(const Eigen::VectorXd& v) const {
        Grid3<double> g(1, 1, std::size_t(v.size()));
        for (long i = 0; i < v.size(); ++i) g[std::size_t(i)] = v[i];
        return g;
    }
    Eigen::VectorXd unwrap(const Grid3<double>& g) const {
        Eigen::VectorXd v(long(g.size()));
        for (long i = 0; i < v.size(); ++i) v[i] = g[std::size_t(i)];
        return v;
    }
    Grid3<double> gradient(const Grid3<double>& x) const { return wrap(a * unwrap(x) - b); }
    Grid3<double> apply(const Grid3<double>& x) const { return wrap(a * unwrap(x)); }
    double value(const Grid3<double>& x) const {
        const auto v = unwrap(x);
        return 0.5 * v.dot(a * v) - b.dot(v);
    }
};

// 1/2 ||X u - d||^2 through the direct projector.
struct LeastSquares {
    const ScanGeometry& g;
    const ProjectionStack<double>& d;
    // tracks the iterate through on_step to record the objective per step
    Volume<double> track{};
    std::vector<double> values{};

    void on_step(double gamma, const Volume<double>& eta, const Volume<double>&) {
        axpy(gamma, eta, track);
        values.push_back(value(track));
    }

    Volume<double> gradient(const Volume<double>& u) const {
        auto r = xray_forward_direct(u, g);
        axpy(-1.0, d, r);
        return xray_adjoint_direct(r);
    }
    Volume<double> apply(const Volume<double>& eta) const { return xray_adjoint_direct(xray_forward_direct(eta, g)); }
    double value(const Volume<double>& u) const { return 0.5 * sum_squares(difference(xray_forward_direct(u, g), d)); }
};

// Dense system matrix of the direct projector, column by column.
Eigen::MatrixXd dense_matrix(const ScanGeometry& g) {
    const std::size_t nvox = g.detector_height * g.volume_n * g.volume_n;
    const std::size_t nrows = g.n_angles_total() * g.detector_height * g.detector_width;
    Eigen::MatrixXd m(static_cast<long>(nrows), static_cast<long>(nvox));
    for (std::size_t j = 0; j < nvox; ++j) {
        Volume<double> e = make_volume<double>(g);
        e[j] = 1.0;
        const auto p = xray_forward_direct(e, g);
        for (std::size_t i = 0; i < nrows; ++i) m(long(i), long(j)) = p.data[i];
    }
    return m;
}

} // namespace

TEST(CgDaiYuan, StationaryStartUnchanged) {
    DenseQuadratic q{Eigen::MatrixXd::Identity(3, 3) * 2.0, Eigen::VectorXd::Zero(3)};
    const auto x0 = q.wrap(Eigen::VectorXd::Zero(3));
    CgStats st;
    const auto x = cg_dai_yuan(q, x0, 5, &st);
    EXPECT_EQ(x, x0);
    EXPECT_EQ(st.steps, 0u);
}

TEST(CgDaiYuan, TwoByTwoInTwoSteps) {
    Eigen::MatrixXd a(2, 2);
    a << 4, 1, 1, 3;
    Eigen::VectorXd b(2);
    b << 1, 2;
    DenseQuadratic q{a, b};
    const auto x = cg_dai_yuan(q, q.wrap(Eigen::VectorXd::Zero(2)), 2);
    const Eigen::VectorXd exact = a.ldlt().solve(b);
    EXPECT_LT((q.unwrap(x) - exact).norm() / exact.norm(), 1e-12);
}

TEST(CgDaiYuan, RandomSpdMonotoneAndConverges) {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> nd;
    const long n = 12;
    Eigen::MatrixXd m(n, n);
    for (long i = 0; i < n; ++i)
        for (long j = 0; j < n; ++j) m(i, j) = nd(rng);
    Eigen::VectorXd b(n);
    for (long i = 0; i < n; ++i) b[i] = nd(rng);
    DenseQuadratic q{m.transpose() * m + Eigen::MatrixXd::Identity(n, n), b};
    auto x = q.wrap(Eigen::VectorXd::Zero(n));
    double prev = q.value(x);
    for (int k = 0; k < 20; ++k) {
        x = cg_dai_yuan(q, x, 1);
        const double v = q.value(x);
        EXPECT_LE(v, prev + 1e-12);
        prev = v;
    }
    const Eigen::VectorXd exact = q.a.ldlt().solve(b);
    const auto xs = cg_dai_yuan(q, q.wrap(Eigen::VectorXd::Zero(n)), 40);
    EXPECT_LT((q.unwrap(xs) - exact).norm() / exact.norm(), 1e-10);
}

TEST(CgDaiYuan, SemidefiniteDirectionRestarts) {
    // A is singular; b lies in its range so the minimizer exists
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(3, 3);
    a(0, 0) = 2;
    a(1, 1) = 1;
    Eigen::VectorXd b(3);
    b << 2, 1, 0;
    DenseQuadratic q{a, b};
    const auto x = cg_dai_yuan(q, q.wrap(Eigen::VectorXd::Zero(3)), 10);
    EXPECT_NEAR(x[0], 1.0, 1e-12);
    EXPECT_NEAR(x[1], 1.0, 1e-12);
    EXPECT_EQ(x[2], 0.0);
}

TEST(CgDaiYuan, TomographyDenseOracle) {
    const auto g = with_grid(make_interlaced(5, 2, std::numbers::pi), 4, 2);
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> ud(0, 1);
    Volume<double> truth = make_volume<double>(g);
    for (auto& v : truth.values()) v = ud(rng);
    const auto d = xray_forward_direct(truth, g);

    const Eigen::MatrixXd m = dense_matrix(g);
    Eigen::VectorXd dv(long(d.data.size()));
    for (long i = 0; i < dv.size(); ++i) dv[i] = d.data[std::size_t(i)];
    const Eigen::VectorXd ls = m.completeOrthogonalDecomposition().solve(dv);

    LeastSquares prob{g, d, make_volume<double>(g)};
    const auto u50 = cg_dai_yuan(prob, make_volume<double>(g), 50);
    ASSERT_FALSE(prob.values.empty());
    const double v0 = prob.value(make_volume<double>(g));
    double prev = v0;
    for (double v : prob.values) {
        EXPECT_LE(v, prev + 1e-14 * v0);
        prev = v;
    }
    double num = 0, den = 0;
    for (std::size_t i = 0; i < u50.size(); ++i) {
        num += std::pow(u50[i] - ls[long(i)], 2);
        den += ls[long(i)] * ls[long(i)];
    }
    EXPECT_LT(std::sqrt(num / den), 1e-6);
}
