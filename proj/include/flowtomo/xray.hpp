#pragma once

#include <memory>
#include <string>

#include "flowtomo/fourier_projector.hpp"
#include "flowtomo/projector.hpp"

namespace flowtomo {

enum class ProjectorKind { direct, fourier };

inline ProjectorKind parse_projector_kind(const std::string& s) {
    if (s == "direct") return ProjectorKind::direct;
    if (s == "fourier") return ProjectorKind::fourier;
    throw Error(ErrorCode::invalid_argument, "unknown projector '" + s + "' (expected direct|fourier)");
}

inline const char* to_string(ProjectorKind k) { return k == ProjectorKind::direct ? "direct" : "fourier"; }

/// X-ray transform bound to one geometry; dispatches to the direct or
/// Fourier-based implementation.
class XrayOperator {
public:
    XrayOperator(const ScanGeometry& g, ProjectorKind kind) : geometry_(g), kind_(kind) {
        if (kind_ == ProjectorKind::fourier) fourier_ = std::make_unique<FourierProjector>(g);
    }

    const ScanGeometry& geometry() const noexcept { return geometry_; }
    ProjectorKind kind() const noexcept { return kind_; }

    template <class T>
    ProjectionStack<T> forward(const Volume<T>& u) const {
        if (fourier_) return fourier_->forward(u);
        return xray_forward_direct(u, geometry_);
    }

    template <class T>
    Volume<T> adjoint(const ProjectionStack<T>& p) const {
        if (fourier_) return fourier_->adjoint(p);
        return xray_adjoint_direct(p);
    }

private:
    ScanGeometry geometry_;
    ProjectorKind kind_;
    // FourierProjector owns scratch FFT buffers; forward/adjoint are logically const.
    std::unique_ptr<FourierProjector> fourier_;
};

} // namespace flowtomo
