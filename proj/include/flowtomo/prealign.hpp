#pragma once

#include <numeric>

#include "flowtomo/admm.hpp"

namespace flowtomo {

template <class T>
ProjectionStack<T> select_angles(const ProjectionStack<T>& p, const std::vector<std::size_t>& indices) {
    const ScanGeometry g = subset(p.geometry, indices);
    ProjectionStack<T> out(g);
    for (std::size_t k = 0; k < indices.size(); ++k) {
        const auto src = p.data.plane(indices[k]);
        std::copy(src.begin(), src.end(), out.data.plane(k).begin());
    }
    return out;
}

inline std::vector<std::size_t> rotation_indices(const ScanGeometry& g, std::size_t rotation) {
    require_arg(rotation < g.n_rotations, "rotation_indices: rotation out of range");
    std::vector<std::size_t> idx(g.n_per_rotation);
    std::iota(idx.begin(), idx.end(), rotation * g.n_per_rotation);
    return idx;
}

/// Plain least-squares CG reconstruction (flow off, no TV).
template <class T>
Volume<T> cg_reconstruct(const ProjectionStack<T>& d, std::size_t iterations, ProjectorKind projector = ProjectorKind::direct) {
    SolverConfig cfg;
    cfg.use_flow = false;
    cfg.alpha = 0.0;
    cfg.n_admm = iterations;
    cfg.binning = {1};
    cfg.projector = projector;
    return reconstruct(d, cfg).u;
}

template <class T>
struct Prealigned {
    ProjectionStack<T> data;
    FlowStack<T> shifts;
};

/// Rigid per-projection alignment against the first rotation: a CG
/// reconstruction from rotation 0 is reprojected at every angle and each
/// measured projection is shifted onto its reprojection.
template <class T>
Prealigned<T> prealign(const ProjectionStack<T>& d, const FlowParams& params, std::size_t cg_iterations = 32,
                       ProjectorKind projector = ProjectorKind::direct) {
    validate(d.geometry);
    const auto d0 = select_angles(d, rotation_indices(d.geometry, 0));
    const auto u0 = cg_reconstruct(d0, cg_iterations, projector);
    const auto reference = XrayOperator(d.geometry, projector).forward(u0);
    FlowParams p = params;
    p.dense = false;
    Prealigned<T> out;
    out.shifts = estimate_shift(reference, d, p);
    out.data = apply_flow(d, out.shifts);
    return out;
}

} // namespace flowtomo
