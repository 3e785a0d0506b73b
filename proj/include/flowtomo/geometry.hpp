#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <vector>

#include "flowtomo/error.hpp"

namespace flowtomo {

/// Parallel-beam scan description shared by every operator.
///
/// Angles are stored in acquisition order. Voxel and pixel centres sit on
/// integer coordinates; the rotation axis passes through ((N-1)/2, (N-1)/2)
/// in the (x, y) plane and the detector centre is (N_s-1)/2.
struct ScanGeometry {
    std::size_t n_rotations = 1;
    std::size_t n_per_rotation = 0;
    double range_per_rotation = std::numbers::pi;
    std::vector<double> angles;
    std::vector<double> time_stamps;
    std::size_t detector_width = 0;  // N_s
    std::size_t detector_height = 0; // N_z
    std::size_t volume_n = 0;        // N (in-plane)

    std::size_t n_angles_total() const noexcept { return angles.size(); }

    /// Rotation index of acquisition index i.
    std::size_t rotation_of(std::size_t i) const noexcept { return i / n_per_rotation; }

    friend bool operator==(const ScanGeometry&, const ScanGeometry&) = default;
};

inline double wrap_two_pi(double a) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    a = std::fmod(a, two_pi);
    if (a < 0) a += two_pi;
    // fmod can return exactly two_pi after the correction on tiny negatives
    if (a >= two_pi) a = 0.0;
    return a;
}

/// Interlaced protocol: rotation r, index j within the rotation acquires
/// theta = j * delta + r * delta / R with delta = range / n_per_rotation.
inline ScanGeometry make_interlaced(std::size_t n_per_rotation, std::size_t n_rotations,
                                    double range_per_rotation) {
    require_arg(n_per_rotation >= 1, "make_interlaced: n_per_rotation must be >= 1");
    require_arg(n_rotations >= 1, "make_interlaced: n_rotations must be >= 1");
    require_arg(range_per_rotation > 0 && std::isfinite(range_per_rotation),
                "make_interlaced: range_per_rotation must be positive");

    ScanGeometry g;
    g.n_rotations = n_rotations;
    g.n_per_rotation = n_per_rotation;
    g.range_per_rotation = range_per_rotation;
    const std::size_t total = n_per_rotation * n_rotations;
    const double delta = range_per_rotation / double(n_per_rotation);
    g.angles.resize(total);
    g.time_stamps.resize(total);
    for (std::size_t r = 0; r < n_rotations; ++r) {
        for (std::size_t j = 0; j < n_per_rotation; ++j) {
            const std::size_t i = r * n_per_rotation + j;
            g.angles[i] = wrap_two_pi(double(j) * delta + double(r) * delta / double(n_rotations));
            g.time_stamps[i] = total == 1 ? 0.0 : double(i) / double(total - 1);
        }
    }
    return g;
}

inline ScanGeometry make_sequential(std::size_t n_angles, double range) {
    require_arg(n_angles >= 1, "make_sequential: n_angles must be >= 1");
    return make_interlaced(n_angles, 1, range);
}

/// Attaches grid sizes: cubic in-plane volume of side n, detector n x nz.
inline ScanGeometry with_grid(ScanGeometry g, std::size_t n, std::size_t nz) {
    require_arg(n >= 1 && nz >= 1, "with_grid: sizes must be >= 1");
    g.volume_n = n;
    g.detector_width = n;
    g.detector_height = nz;
    return g;
}

/// Checks the structural invariants; throws on violation.
inline void validate(const ScanGeometry& g) {
    require_arg(g.n_rotations >= 1 && g.n_per_rotation >= 1, "geometry: zero counts");
    require_arg(g.angles.size() == g.n_rotations * g.n_per_rotation,
                "geometry: angle count != n_rotations * n_per_rotation");
    require_arg(g.time_stamps.size() == g.angles.size(), "geometry: time stamp count mismatch");
    for (double a : g.angles) {
        require_arg(std::isfinite(a) && a >= 0 && a < 2.0 * std::numbers::pi,
                    "geometry: angle outside [0, 2pi)");
    }
    for (std::size_t i = 1; i < g.time_stamps.size(); ++i) {
        require_arg(g.time_stamps[i] > g.time_stamps[i - 1], "geometry: time stamps not increasing");
    }
    require_arg(g.detector_width == g.volume_n, "geometry: detector width must equal volume size");
}

/// Acquisition indices sorted by angle (stable for equal angles).
inline std::vector<std::size_t> angle_order(const ScanGeometry& g) {
    std::vector<std::size_t> order(g.angles.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return g.angles[a] < g.angles[b]; });
    return order;
}

/// Same angles and time stamps with every grid size divided by `factor`
/// (rounded up).
inline ScanGeometry binned(const ScanGeometry& g, std::size_t factor) {
    require_arg(factor >= 1, "binned: factor must be >= 1");
    ScanGeometry out = g;
    out.volume_n = (g.volume_n + factor - 1) / factor;
    out.detector_width = out.volume_n;
    out.detector_height = (g.detector_height + factor - 1) / factor;
    return out;
}

/// Geometry restricted to a subset of acquisition indices (e.g. half sets).
inline ScanGeometry subset(const ScanGeometry& g, const std::vector<std::size_t>& indices) {
    require_arg(!indices.empty(), "subset: empty index list");
    ScanGeometry out = g;
    out.n_rotations = 1;
    out.n_per_rotation = indices.size();
    out.angles.clear();
    out.time_stamps.clear();
    for (std::size_t i : indices) {
        require_arg(i < g.angles.size(), "subset: index out of range");
        out.angles.push_back(g.angles[i]);
        out.time_stamps.push_back(g.time_stamps[i]);
    }
    return out;
}

} // namespace flowtomo
