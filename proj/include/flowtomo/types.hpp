#pragma once

#include <array>
#include <cmath>

#include "flowtomo/array.hpp"
#include "flowtomo/geometry.hpp"

namespace flowtomo {

/// Reconstructed object, stored (z, y, x).
template <class T>
using Volume = Grid3<T>;

template <class T>
Volume<T> make_volume(const ScanGeometry& g, T fill = T(0)) {
    return Volume<T>(g.detector_height, g.volume_n, g.volume_n, fill);
}

/// Projection images in acquisition order, stored (theta, z, s).
template <class T>
struct ProjectionStack {
    Grid3<T> data;
    ScanGeometry geometry;

    ProjectionStack() = default;
    explicit ProjectionStack(const ScanGeometry& g, T fill = T(0))
        : data(g.n_angles_total(), g.detector_height, g.detector_width, fill), geometry(g) {}
    ProjectionStack(Grid3<T> d, const ScanGeometry& g) : data(std::move(d)), geometry(g) {
        require_same_shape(data.shape(),
                           Shape3{g.n_angles_total(), g.detector_height, g.detector_width},
                           "ProjectionStack");
    }

    std::size_t n_angles() const noexcept { return data.dim(0); }
    std::size_t height() const noexcept { return data.dim(1); }
    std::size_t width() const noexcept { return data.dim(2); }
    const Shape3& shape() const noexcept { return data.shape(); }

    ImageView<T> image(std::size_t a) { return plane_view(data, a); }
    ImageView<const T> image(std::size_t a) const { return plane_view(data, a); }
};

/// Three per-voxel components ordered (d/dx, d/dy, d/dz).
template <class T>
struct VectorField3 {
    std::array<Grid3<T>, 3> comp;

    VectorField3() = default;
    explicit VectorField3(const Shape3& s, T fill = T(0)) : comp{Grid3<T>(s, fill), Grid3<T>(s, fill), Grid3<T>(s, fill)} {}

    const Shape3& shape() const noexcept { return comp[0].shape(); }
    Grid3<T>& operator[](std::size_t c) noexcept { return comp[c]; }
    const Grid3<T>& operator[](std::size_t c) const noexcept { return comp[c]; }
};

// Vector-space operations used by the generic solvers.

template <class T>
double dot(const ProjectionStack<T>& a, const ProjectionStack<T>& b) {
    return dot(a.data, b.data);
}
template <class T>
double sum_squares(const ProjectionStack<T>& a) {
    return sum_squares(a.data);
}
template <class T>
double norm(const ProjectionStack<T>& a) {
    return std::sqrt(sum_squares(a));
}
template <class T>
void axpy(double alpha, const ProjectionStack<T>& x, ProjectionStack<T>& y) {
    axpy(alpha, x.data, y.data);
}
template <class T>
void scale(ProjectionStack<T>& x, double alpha) {
    scale(x.data, alpha);
}
template <class T>
bool all_finite(const ProjectionStack<T>& x) {
    return all_finite(x.data);
}
template <class T>
ProjectionStack<T> difference(const ProjectionStack<T>& a, const ProjectionStack<T>& b) {
    return {difference(a.data, b.data), a.geometry};
}

template <class T>
double dot(const VectorField3<T>& a, const VectorField3<T>& b) {
    return dot(a[0], b[0]) + dot(a[1], b[1]) + dot(a[2], b[2]);
}
template <class T>
double sum_squares(const VectorField3<T>& a) {
    return dot(a, a);
}
template <class T>
double norm(const VectorField3<T>& a) {
    return std::sqrt(sum_squares(a));
}
template <class T>
void axpy(double alpha, const VectorField3<T>& x, VectorField3<T>& y) {
    for (std::size_t c = 0; c < 3; ++c) axpy(alpha, x[c], y[c]);
}
template <class T>
void scale(VectorField3<T>& x, double alpha) {
    for (auto& c : x.comp) scale(c, alpha);
}
template <class T>
bool all_finite(const VectorField3<T>& x) {
    return all_finite(x[0]) && all_finite(x[1]) && all_finite(x[2]);
}
template <class T>
VectorField3<T> difference(const VectorField3<T>& a, const VectorField3<T>& b) {
    VectorField3<T> out = a;
    axpy(-1.0, b, out);
    return out;
}

/// Isotropic L1 norm: sum over voxels of the 3-vector magnitude.
template <class T>
double l1_magnitude(const VectorField3<T>& v) {
    double acc = 0.0;
    for (std::size_t n = 0; n < v[0].size(); ++n) {
        const double a = v[0][n], b = v[1][n], c = v[2][n];
        acc += std::sqrt(a * a + b * b + c * c);
    }
    return acc;
}

} // namespace flowtomo
