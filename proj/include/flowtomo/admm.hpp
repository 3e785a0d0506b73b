#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "flowtomo/cg.hpp"
#include "flowtomo/optical_flow.hpp"
#include "flowtomo/resample.hpp"
#include "flowtomo/warp.hpp"
#include "flowtomo/xray.hpp"

namespace flowtomo {

enum class AdjointWarp { exact, negated_flow };

inline AdjointWarp parse_adjoint_warp(const std::string& s) {
    if (s == "exact") return AdjointWarp::exact;
    if (s == "negated-flow") return AdjointWarp::negated_flow;
    throw Error(ErrorCode::invalid_argument, "unknown adjoint warp '" + s + "' (expected exact|negated-flow)");
}

/// One row of the per-iteration log.
struct IterationRecord {
    std::size_t iteration = 0;
    std::size_t level = 0;
    std::size_t binning = 1;
    double lagrangian = 0;
    double fidelity = 0;
    double tv = 0;
    double rho1 = 0;
    double rho2 = 0;
    double mean_flow = 0;
    std::size_t window = 0;
};

inline void write_log_header(std::ostream& os) {
    os << "iteration,level,binning,lagrangian,fidelity,tv,rho1,rho2,mean_flow,window\n";
}

inline void write_log_row(std::ostream& os, const IterationRecord& r) {
    os << r.iteration << ',' << r.level << ',' << r.binning << ',' << r.lagrangian << ',' << r.fidelity << ','
       << r.tv << ',' << r.rho1 << ',' << r.rho2 << ',' << r.mean_flow << ',' << r.window << '\n';
}

struct SolverConfig {
    std::size_t n_admm = 64;
    std::size_t n_inner_cg = 4;
    double alpha = 0.0;
    bool use_flow = true;
    bool dense_flow = true;
    /// Binning factors coarse to fine, e.g. {4, 2, 1}; empty selects them automatically.
    std::vector<std::size_t> binning{};
    std::size_t window_decrement = 2;
    ProjectorKind projector = ProjectorKind::direct;
    AdjointWarp adjoint_warp = AdjointWarp::exact;
    bool soft_threshold_factor2 = false;
    FlowParams flow{};
    double rho1_init = 0.5;
    double rho2_init = 0.5;
    std::function<void(const IterationRecord&)> on_iteration{};
};

inline void validate(const SolverConfig& c) {
    require_arg(c.n_admm >= 1, "n_admm must be >= 1");
    require_arg(c.n_inner_cg >= 1, "n_inner_cg must be >= 1");
    require_arg(c.alpha >= 0.0 && std::isfinite(c.alpha), "alpha must be finite and >= 0");
    require_arg(c.window_decrement >= 1, "window_decrement must be >= 1");
    require_arg(c.rho1_init > 0 && c.rho2_init > 0, "initial penalties must be positive");
    for (std::size_t b : c.binning) require_arg(b >= 1, "binning factors must be >= 1");
    for (std::size_t i = 1; i < c.binning.size(); ++i)
        require_arg(c.binning[i] < c.binning[i - 1] && c.binning[i - 1] % c.binning[i] == 0,
                    "binning factors must decrease and divide each other");
    validate(c.flow);
}

/// max(1, ceil(log2(n / 128))) levels with factors 2^(L-1), ..., 2, 1.
inline std::vector<std::size_t> auto_binning(std::size_t n) {
    const double r = double(n) / 128.0;
    const std::size_t levels = std::max<std::size_t>(1, r > 1 ? std::size_t(std::ceil(std::log2(r) - 1e-12)) : 0);
    std::vector<std::size_t> out;
    for (std::size_t l = 0; l < levels; ++l) out.push_back(std::size_t(1) << (levels - 1 - l));
    return out;
}

/// Outer iterations per level with weights 2^(L-1-l) (4:2:1 for three levels);
/// rounding remainder goes to the finest level.
inline std::vector<std::size_t> split_iterations(std::size_t total, std::size_t levels) {
    std::vector<std::size_t> out(levels);
    double wsum = 0;
    for (std::size_t l = 0; l < levels; ++l) wsum += std::ldexp(1.0, int(levels - 1 - l));
    std::size_t used = 0;
    for (std::size_t l = 0; l + 1 < levels; ++l) {
        out[l] = std::size_t(std::floor(double(total) * std::ldexp(1.0, int(levels - 1 - l)) / wsum));
        used += out[l];
    }
    out[levels - 1] = total - used;
    return out;
}

template <class T>
struct AdmmState {
    Volume<T> u;
    ProjectionStack<T> psi1;
    VectorField3<T> psi2;
    ProjectionStack<T> lambda1;
    VectorField3<T> lambda2;
    FlowStack<T> flow;
    double rho1 = 0.5;
    double rho2 = 0.5;
    std::size_t iteration = 0;
    std::vector<double> lagrangian_history;
    ProjectionStack<T> prev_Xu;
    VectorField3<T> prev_grad_u;
    bool has_prev = false;
    /// X u and grad u for the current u, kept in sync by the solvers.
    ProjectionStack<T> Xu;
    VectorField3<T> grad_u;

    AdmmState() = default;
    explicit AdmmState(const ScanGeometry& g, double r1 = 0.5, double r2 = 0.5)
        : u(make_volume<T>(g)), psi1(g), psi2(u.shape()), lambda1(g), lambda2(u.shape()),
          flow(Shape3{g.n_angles_total(), g.detector_height, g.detector_width}), rho1(r1), rho2(r2), Xu(g),
          grad_u(u.shape()) {}

    const ScanGeometry& geometry() const { return psi1.geometry; }
};

template <class T>
void check_state(const AdmmState<T>& s, const ProjectionStack<T>& d) {
    require_same_shape(s.psi1.shape(), d.shape(), "AdmmState.psi1");
    require_same_shape(s.lambda1.shape(), d.shape(), "AdmmState.lambda1");
    require_same_shape(s.flow.shape(), d.shape(), "AdmmState.flow");
    require_same_shape(s.psi2.shape(), s.u.shape(), "AdmmState.psi2");
    require_same_shape(s.lambda2.shape(), s.u.shape(), "AdmmState.lambda2");
}

/// Individual terms of the augmented Lagrangian.
struct LagrangianTerms {
    double fidelity = 0;   // 1/2 ||D_f psi1 - d||^2
    double dual1 = 0;      // lambda1'(Xu - psi1)
    double penalty1 = 0;   // rho1/2 ||Xu - psi1||^2
    double tv = 0;         // alpha ||psi2||_1
    double dual2 = 0;      // lambda2'(grad u - psi2)
    double penalty2 = 0;   // rho2/2 ||grad u - psi2||^2

    double total(bool with_tv = true) const {
        return fidelity + dual1 + penalty1 + (with_tv ? tv + dual2 + penalty2 : 0.0);
    }
};

template <class T>
LagrangianTerms lagrangian_terms(const AdmmState<T>& s, const ProjectionStack<T>& xu, const VectorField3<T>& gu,
                                 const ProjectionStack<T>& d, double alpha) {
    check_state(s, d);
    LagrangianTerms t;
    t.fidelity = 0.5 * sum_squares(difference(apply_flow(s.psi1, s.flow), d));
    const auto r1 = difference(xu, s.psi1);
    t.dual1 = dot(s.lambda1, r1);
    t.penalty1 = 0.5 * s.rho1 * sum_squares(r1);
    t.tv = alpha * l1_magnitude(s.psi2);
    const auto r2 = difference(gu, s.psi2);
    t.dual2 = dot(s.lambda2, r2);
    t.penalty2 = 0.5 * s.rho2 * sum_squares(r2);
    return t;
}

/// Augmented Lagrangian evaluated from scratch (X u and grad u recomputed).
template <class T>
double lagrangian_value(const XrayOperator& op, const AdmmState<T>& s, const ProjectionStack<T>& d, double alpha) {
    return lagrangian_terms(s, op.forward(s.u), grad(s.u), d, alpha).total();
}

template <class T>
double lagrangian_value(const AdmmState<T>& s, const ProjectionStack<T>& d, double alpha) {
    return lagrangian_value(XrayOperator(d.geometry, ProjectorKind::direct), s, d, alpha);
}

/// Tomography sub-problem objective
/// F(u) = rho1/2 ||Xu - psi1 + lambda1/rho1||^2 + rho2/2 ||grad u - psi2 + lambda2/rho2||^2.
template <class T>
double tomo_objective(const XrayOperator& op, const Volume<T>& u, const AdmmState<T>& s, bool with_tv = true) {
    auto r1 = op.forward(u);
    axpy(-1.0, s.psi1, r1);
    axpy(1.0 / s.rho1, s.lambda1, r1);
    double v = 0.5 * s.rho1 * sum_squares(r1);
    if (with_tv) {
        auto r2 = grad(u);
        axpy(-1.0, s.psi2, r2);
        axpy(1.0 / s.rho2, s.lambda2, r2);
        v += 0.5 * s.rho2 * sum_squares(r2);
    }
    return v;
}

namespace detail {

template <class T>
Volume<T> tomo_gradient_from(const XrayOperator& op, const ProjectionStack<T>& xu, const VectorField3<T>& gu,
                             const AdmmState<T>& s, bool with_tv) {
    require_arg(s.rho1 > 0 && s.rho2 > 0, "tomography gradient: penalties must be positive");
    auto r1 = xu;
    axpy(-1.0, s.psi1, r1);
    axpy(1.0 / s.rho1, s.lambda1, r1);
    Volume<T> g = op.adjoint(r1);
    scale(g, s.rho1);
    if (with_tv) {
        auto r2 = gu;
        axpy(-1.0, s.psi2, r2);
        axpy(1.0 / s.rho2, s.lambda2, r2);
        axpy(-s.rho2, div(r2), g);
    }
    return g;
}

/// CG view of the tomography sub-problem; keeps s.Xu in sync with the iterate.
template <class T>
struct TomoProblem {
    const XrayOperator& op;
    AdmmState<T>& s;
    bool with_tv;
    ProjectionStack<T> x_eta{};

    Volume<T> gradient(const Volume<T>& u) { return tomo_gradient_from(op, s.Xu, grad(u), s, with_tv); }

    Volume<T> apply(const Volume<T>& eta) {
        x_eta = op.forward(eta);
        Volume<T> out = op.adjoint(x_eta);
        scale(out, s.rho1);
        if (with_tv) axpy(-s.rho2, div(grad(eta)), out);
        return out;
    }

    void on_step(double gamma, const Volume<T>&, const Volume<T>&) { axpy(gamma, x_eta, s.Xu); }
};

/// CG view of the psi1 sub-problem
/// 1/2 ||D_f psi1 - d||^2 + rho1/2 ||Xu - psi1 + lambda1/rho1||^2.
template <class T>
struct Psi1Problem {
    const AdmmState<T>& s;
    const ProjectionStack<T>& d;
    bool warp;
    AdjointWarp adjoint;

    ProjectionStack<T> warp_adjoint(const ProjectionStack<T>& p) const {
        return adjoint == AdjointWarp::exact ? apply_flow_adjoint(p, s.flow) : apply_flow_adjoint_negated(p, s.flow);
    }

    ProjectionStack<T> gradient(const ProjectionStack<T>& psi) const {
        ProjectionStack<T> out;
        if (warp) {
            auto r = apply_flow(psi, s.flow);
            axpy(-1.0, d, r);
            out = warp_adjoint(r);
        } else {
            out = difference(psi, d);
        }
        // - rho1 (Xu - psi + lambda1/rho1)
        axpy(-s.rho1, s.Xu, out);
        axpy(s.rho1, psi, out);
        axpy(-1.0, s.lambda1, out);
        return out;
    }

    ProjectionStack<T> apply(const ProjectionStack<T>& eta) const {
        ProjectionStack<T> out = warp ? warp_adjoint(apply_flow(eta, s.flow)) : eta;
        axpy(s.rho1, eta, out);
        return out;
    }
};

inline void require_finite(bool ok, std::size_t iteration, const char* variable) {
    require(ok, ErrorCode::numerical_abort,
            "iteration " + std::to_string(iteration) + ": non-finite values in " + variable);
}

} // namespace detail

/// Gradient of the tomography sub-problem at u:
/// rho1 X'(Xu - psi1 + lambda1/rho1) - rho2 div(grad u - psi2 + lambda2/rho2).
template <class T>
Volume<T> tomo_subproblem_gradient(const XrayOperator& op, const Volume<T>& u, const AdmmState<T>& s,
                                   bool with_tv = true) {
    require_arg(s.rho1 > 0 && s.rho2 > 0, "tomo_subproblem_gradient: penalties must be positive");
    return detail::tomo_gradient_from(op, op.forward(u), grad(u), s, with_tv);
}

/// n_inner Dai-Yuan CG steps on the tomography sub-problem from the current u.
/// Updates s.u, s.Xu and s.grad_u.
template <class T>
void solve_tomo(const XrayOperator& op, AdmmState<T>& s, std::size_t n_inner, bool with_tv = true) {
    require_arg(n_inner >= 1, "solve_tomo: n_inner must be >= 1");
    require_arg(s.rho1 > 0 && s.rho2 > 0, "solve_tomo: penalties must be positive");
    detail::TomoProblem<T> prob{op, s, with_tv};
    s.u = cg_dai_yuan(prob, s.u, n_inner);
    s.grad_u = grad(s.u);
}

/// n_inner CG steps on the psi1 sub-problem with the current flow.
template <class T>
void solve_psi1(AdmmState<T>& s, const ProjectionStack<T>& d, std::size_t n_inner, bool use_flow,
                AdjointWarp adjoint = AdjointWarp::exact) {
    detail::Psi1Problem<T> prob{s, d, use_flow, adjoint};
    s.psi1 = cg_dai_yuan(prob, s.psi1, n_inner);
}

/// Deformation sub-problem: flow from d toward psi1 (warm-started from the
/// current flow), then psi1 by CG. Flow estimation is skipped while psi1 is
/// identically zero, where every flow fits equally well.
template <class T>
void solve_deformation(AdmmState<T>& s, const ProjectionStack<T>& d, const FlowParams& params, std::size_t n_inner,
                       bool use_flow = true, AdjointWarp adjoint = AdjointWarp::exact) {
    require_arg(n_inner >= 1, "solve_deformation: n_inner must be >= 1");
    check_state(s, d);
    if (use_flow && max_abs<T>(s.psi1.data.values()) > 0.0) {
        s.flow = estimate_motion(d, s.psi1, params, &s.flow);
        validate_flow(s.flow);
    }
    solve_psi1(s, d, n_inner, use_flow, adjoint);
}

/// Isotropic soft thresholding: v / |v| * max(0, |v| - threshold) per voxel.
template <class T>
VectorField3<T> prox_tv(const VectorField3<T>& z, double threshold) {
    require_arg(threshold >= 0.0, "prox_tv: threshold must be >= 0");
    VectorField3<T> out(z.shape());
    const std::size_t n = z[0].size();
    for (std::size_t i = 0; i < n; ++i) {
        const double a = z[0][i], b = z[1][i], c = z[2][i];
        const double mag = std::sqrt(a * a + b * b + c * c);
        if (mag <= threshold || mag == 0.0) continue;
        const double f = (mag - threshold) / mag;
        out[0][i] = static_cast<T>(a * f);
        out[1][i] = static_cast<T>(b * f);
        out[2][i] = static_cast<T>(c * f);
    }
    return out;
}

/// psi2 update from grad u and lambda2: threshold alpha / rho2, or the
/// factor-2 variant (2 lambda2 / rho2, 2 alpha / rho2).
template <class T>
VectorField3<T> update_psi2(const AdmmState<T>& s, double alpha, bool factor2 = false) {
    const double k = factor2 ? 2.0 : 1.0;
    VectorField3<T> z = s.grad_u;
    axpy(k / s.rho2, s.lambda2, z);
    return prox_tv(z, k * alpha / s.rho2);
}

/// lambda1 += rho1 (Xu - psi1); lambda2 += rho2 (grad u - psi2).
template <class T>
void dual_update(AdmmState<T>& s, bool with_tv = true) {
    axpy(s.rho1, s.Xu, s.lambda1);
    axpy(-s.rho1, s.psi1, s.lambda1);
    if (with_tv) {
        axpy(s.rho2, s.grad_u, s.lambda2);
        axpy(-s.rho2, s.psi2, s.lambda2);
    }
}

/// Residual balancing: doubles rho when the primal term exceeds 10x the dual
/// proxy, halves it in the opposite case.
inline double penalty_rule(double rho, double primal_sq, double dual_sq) {
    if (primal_sq > 10.0 * dual_sq) return 2.0 * rho;
    if (dual_sq > 10.0 * primal_sq) return 0.5 * rho;
    return rho;
}

/// Applies penalty_rule with primal ||psi - Xu||^2 and dual proxy
/// ||rho (Xu^k - Xu^{k-1})||^2 (same for grad and psi2), then stores the
/// current Xu and grad u for the next call. Skipped on the first call.
template <class T>
void penalty_update(AdmmState<T>& s, bool with_tv = true) {
    if (s.has_prev) {
        const double p1 = sum_squares(difference(s.psi1, s.Xu));
        const double d1 = s.rho1 * s.rho1 * sum_squares(difference(s.Xu, s.prev_Xu));
        const double new_rho1 = penalty_rule(s.rho1, p1, d1);
        if (with_tv) {
            const double p2 = sum_squares(difference(s.psi2, s.grad_u));
            const double d2 = s.rho2 * s.rho2 * sum_squares(difference(s.grad_u, s.prev_grad_u));
            s.rho2 = penalty_rule(s.rho2, p2, d2);
        }
        s.rho1 = new_rho1;
    }
    s.prev_Xu = s.Xu;
    s.prev_grad_u = s.grad_u;
    s.has_prev = true;
}

template <class T>
struct ReconstructionResult {
    Volume<T> u;
    FlowStack<T> flow;
    AdmmState<T> state;
    std::vector<IterationRecord> log;
};

namespace detail {

template <class T>
double mean_flow_magnitude(const FlowStack<T>& f) {
    if (f.fs.size() == 0) return 0.0;
    double acc = 0;
    for (std::size_t n = 0; n < f.fs.size(); ++n) acc += std::hypot(double(f.fs[n]), double(f.fz[n]));
    return acc / double(f.fs.size());
}

/// Carries a state from a coarser level onto the geometry `g` (ratio = coarse/fine binning).
template <class T>
AdmmState<T> upsample_state(const AdmmState<T>& c, const ScanGeometry& g, double ratio) {
    AdmmState<T> s(g, c.rho1, c.rho2);
    s.u = upsample_grid(c.u, s.u.shape(), ratio, 1.0, true);
    s.psi1 = upsample_projections(c.psi1, g, ratio);
    s.lambda1 = upsample_projections(c.lambda1, g, ratio);
    s.psi2 = upsample_field(c.psi2, s.u.shape(), ratio, 1.0 / ratio);
    s.lambda2 = upsample_field(c.lambda2, s.u.shape(), ratio, 1.0);
    s.flow = upsample_flow(c.flow, s.flow.shape(), ratio);
    s.iteration = c.iteration;
    s.lagrangian_history = c.lagrangian_history;
    return s;
}

/// 1/2 ||Xu - d||^2 for the plain least-squares baseline; tracks Xu.
template <class T>
struct LeastSquaresProblem {
    const XrayOperator& op;
    const ProjectionStack<T>& d;
    ProjectionStack<T>& xu;
    std::function<void()> after_step;
    ProjectionStack<T> x_eta{};

    Volume<T> gradient(const Volume<T>&) { return op.adjoint(difference(xu, d)); }
    Volume<T> apply(const Volume<T>& eta) {
        x_eta = op.forward(eta);
        return op.adjoint(x_eta);
    }
    void on_step(double gamma, const Volume<T>&, const Volume<T>&) {
        axpy(gamma, x_eta, xu);
        if (after_step) after_step();
    }
};

} // namespace detail

/// Joint reconstruction. Multi-resolution over the binning levels; within a
/// level, each outer iteration runs u -> (f, psi1) -> psi2 -> duals -> penalties.
/// With use_flow off and alpha = 0 it runs plain CG on 1/2 ||Xu - d||^2 for
/// n_admm iterations instead. The psi2/lambda2 path is inactive when alpha = 0.
template <class T>
ReconstructionResult<T> reconstruct(const ProjectionStack<T>& d, const SolverConfig& cfg) {
    validate(cfg);
    validate(d.geometry);
    require_same_shape(d.shape(), Shape3{d.geometry.n_angles_total(), d.geometry.detector_height,
                                         d.geometry.detector_width},
                       "reconstruct");
    require(all_finite(d), ErrorCode::numerical_abort, "reconstruct: data contain NaN or Inf");

    const std::vector<std::size_t> factors =
        cfg.binning.empty() ? auto_binning(std::min(d.height(), d.width())) : cfg.binning;
    const auto per_level = split_iterations(cfg.n_admm, factors.size());
    const bool with_tv = cfg.alpha > 0.0;
    const bool baseline = !cfg.use_flow && !with_tv;

    ReconstructionResult<T> res;
    AdmmState<T> s;
    std::size_t prev_factor = 0;
    for (std::size_t level = 0; level < factors.size(); ++level) {
        const std::size_t b = factors[level];
        const ProjectionStack<T> dl = bin_projections(d, b);
        const ScanGeometry& gl = dl.geometry;
        const XrayOperator op(gl, cfg.projector);
        if (level == 0) {
            s = AdmmState<T>(gl, cfg.rho1_init, cfg.rho2_init);
            s.lagrangian_history.push_back(0.5 * sum_squares(dl));
        } else {
            s = detail::upsample_state(s, gl, double(prev_factor) / double(b));
            s.Xu = op.forward(s.u);
            s.grad_u = grad(s.u);
        }
        prev_factor = b;
        const std::size_t iters = per_level[level];
        if (iters == 0) continue;

        if (baseline) {
            detail::LeastSquaresProblem<T> prob{op, dl, s.Xu, {}};
            prob.after_step = [&] {
                ++s.iteration;
                IterationRecord r;
                r.iteration = s.iteration;
                r.level = level;
                r.binning = b;
                r.fidelity = 0.5 * sum_squares(difference(s.Xu, dl));
                r.lagrangian = r.fidelity;
                r.rho1 = s.rho1;
                r.rho2 = s.rho2;
                s.lagrangian_history.push_back(r.lagrangian);
                res.log.push_back(r);
                if (cfg.on_iteration) cfg.on_iteration(r);
            };
            s.u = cg_dai_yuan(prob, s.u, iters);
            detail::require_finite(all_finite(s.u), s.iteration, "u");
            s.grad_u = grad(s.u);
            s.psi1 = s.Xu;
            continue;
        }

        const auto windows = window_schedule(std::min(gl.detector_height, gl.detector_width), iters,
                                             cfg.window_decrement);
        s.has_prev = false;
        for (std::size_t k = 0; k < iters; ++k) {
            ++s.iteration;
            solve_tomo(op, s, cfg.n_inner_cg, with_tv);
            detail::require_finite(all_finite(s.u), s.iteration, "u");

            FlowParams fp = cfg.flow;
            fp.window_size = std::max(windows[k], fp.poly_n);
            fp.dense = cfg.dense_flow;
            solve_deformation(s, dl, fp, cfg.n_inner_cg, cfg.use_flow, cfg.adjoint_warp);
            detail::require_finite(all_finite(s.flow.fs) && all_finite(s.flow.fz), s.iteration, "flow");
            detail::require_finite(all_finite(s.psi1), s.iteration, "psi1");

            if (with_tv) {
                s.psi2 = update_psi2(s, cfg.alpha, cfg.soft_threshold_factor2);
                detail::require_finite(all_finite(s.psi2), s.iteration, "psi2");
            }
            dual_update(s, with_tv);
            detail::require_finite(all_finite(s.lambda1), s.iteration, "lambda1");
            detail::require_finite(all_finite(s.lambda2), s.iteration, "lambda2");

            const auto terms = lagrangian_terms(s, s.Xu, s.grad_u, dl, cfg.alpha);
            IterationRecord r;
            r.iteration = s.iteration;
            r.level = level;
            r.binning = b;
            r.lagrangian = terms.total(with_tv);
            r.fidelity = terms.fidelity;
            r.tv = l1_magnitude(s.grad_u);
            r.rho1 = s.rho1;
            r.rho2 = s.rho2;
            r.mean_flow = detail::mean_flow_magnitude(s.flow);
            r.window = fp.window_size;
            detail::require_finite(std::isfinite(r.lagrangian), s.iteration, "lagrangian");
            s.lagrangian_history.push_back(r.lagrangian);
            res.log.push_back(r);
            if (cfg.on_iteration) cfg.on_iteration(r);

            penalty_update(s, with_tv);
        }
    }
    res.u = s.u;
    res.flow = s.flow;
    res.state = std::move(s);
    return res;
}

struct LcurvePoint {
    double alpha = 0;
    double fidelity = 0;
    double tv = 0;
};

/// Data fidelity 1/2 ||D_f X u - d||^2 of a reconstruction.
template <class T>
double warped_fidelity(const XrayOperator& op, const Volume<T>& u, const FlowStack<T>& f, const ProjectionStack<T>& d) {
    return 0.5 * sum_squares(difference(apply_flow(op.forward(u), f), d));
}

/// One reconstruction per alpha; points (alpha, 1/2 ||D_f X u - d||^2, ||grad u||_1).
template <class T>
std::vector<LcurvePoint> lcurve(const ProjectionStack<T>& d, const SolverConfig& cfg, const std::vector<double>& alphas) {
    require_arg(!alphas.empty(), "lcurve: no alpha values");
    for (std::size_t i = 0; i < alphas.size(); ++i) {
        require_arg(alphas[i] >= 0.0, "lcurve: alpha values must be >= 0");
        require_arg(i == 0 || alphas[i] > alphas[i - 1], "lcurve: alpha values must be increasing");
    }
    const XrayOperator op(d.geometry, cfg.projector);
    std::vector<LcurvePoint> out;
    for (double a : alphas) {
        SolverConfig c = cfg;
        c.alpha = a;
        const auto res = reconstruct(d, c);
        out.push_back({a, warped_fidelity(op, res.u, res.flow, d), l1_magnitude(grad(res.u))});
    }
    return out;
}

/// Index of the L-curve corner: maximum Menger curvature of the polyline
/// (log fidelity, log tv). Endpoints are never selected when three or more
/// points exist.
inline std::size_t lcurve_corner(const std::vector<LcurvePoint>& pts) {
    require_arg(!pts.empty(), "lcurve_corner: empty curve");
    if (pts.size() < 3) return 0;
    auto lg = [](double v) { return std::log(std::max(v, std::numeric_limits<double>::min())); };
    std::size_t best = 1;
    double best_k = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i + 1 < pts.size(); ++i) {
        const double x0 = lg(pts[i - 1].fidelity), y0 = lg(pts[i - 1].tv);
        const double x1 = lg(pts[i].fidelity), y1 = lg(pts[i].tv);
        const double x2 = lg(pts[i + 1].fidelity), y2 = lg(pts[i + 1].tv);
        const double area2 = (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0);
        const double a = std::hypot(x1 - x0, y1 - y0), b = std::hypot(x2 - x1, y2 - y1), c = std::hypot(x2 - x0, y2 - y0);
        const double k = a * b * c > 0 ? 2.0 * area2 / (a * b * c) : 0.0;
        // walking toward larger alpha the curve drops, then runs right: the
        // corner is a left (positive) turn
        if (k > best_k) {
            best_k = k;
            best = i;
        }
    }
    return best;
}

} // namespace flowtomo
