#pragma once

#include <cmath>
#include <cstddef>
#include <limits>

namespace flowtomo {

/// Quadratic objective F(x) = 1/2 x'Ax - b'x + c seen through its gradient
/// and the action of A. Vector types need dot, axpy and scale overloads.
template <class P, class V>
concept QuadraticProblem = requires(P& p, const V& x) {
    { p.gradient(x) } -> std::convertible_to<V>;
    { p.apply(x) } -> std::convertible_to<V>;
};

struct CgStats {
    std::size_t steps = 0;
    std::size_t restarts = 0;
};

/// Nonlinear CG with the Dai-Yuan direction update and exact line search.
/// Optional hook p.on_step(gamma, eta, A eta) runs after every accepted step,
/// letting callers keep derived quantities (such as projections) in sync.
template <class V, class P>
    requires QuadraticProblem<P, V>
V cg_dai_yuan(P& problem, V x, std::size_t n_iter, CgStats* stats = nullptr) {
    constexpr double eps = std::numeric_limits<double>::epsilon();
    V g = problem.gradient(x);
    V eta = g;
    scale(eta, -1.0);
    CgStats local;
    for (std::size_t m = 0; m < n_iter; ++m) {
        const double gg = dot(g, g);
        if (gg == 0.0) break;
        V a_eta = problem.apply(eta);
        double curvature = dot(eta, a_eta);
        double slope = dot(g, eta);
        if (!(curvature > eps * dot(eta, eta)) || !(slope < 0.0)) {
            // restart along steepest descent
            eta = g;
            scale(eta, -1.0);
            a_eta = problem.apply(eta);
            curvature = dot(eta, a_eta);
            slope = -gg;
            ++local.restarts;
            if (!(curvature > eps * gg)) break;
        }
        const double gamma = -slope / curvature;
        axpy(gamma, eta, x);
        if constexpr (requires { problem.on_step(gamma, eta, a_eta); }) problem.on_step(gamma, eta, a_eta);
        ++local.steps;

        V g_next = g;
        axpy(gamma, a_eta, g_next);
        const double denom = dot(g_next, eta) - slope;
        const double gn = dot(g_next, g_next);
        if (std::abs(denom) > eps * std::sqrt(gn * dot(eta, eta))) {
            scale(eta, gn / denom);
            axpy(-1.0, g_next, eta);
        } else {
            eta = g_next;
            scale(eta, -1.0);
            ++local.restarts;
        }
        g = std::move(g_next);
    }
    if (stats) *stats = local;
    return x;
}

} // namespace flowtomo
