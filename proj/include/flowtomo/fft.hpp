#pragma once

#include <complex>
#include <cstddef>
#include <memory>
#include <mutex>
#include <vector>

#include <fftw3.h>

#include "flowtomo/error.hpp"

namespace flowtomo::fft {

using cplx = std::complex<double>;

/// The FFTW planner is not thread-safe; every plan creation/destruction goes
/// through this lock.
inline std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

struct FftwFree {
    void operator()(void* p) const noexcept { fftw_free(p); }
};

/// fftw_malloc'ed complex buffer.
class Buffer {
public:
    Buffer() = default;
    explicit Buffer(std::size_t n)
        : n_(n), ptr_(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n))) {
        if (!ptr_) throw Error(ErrorCode::numerical_abort, "fftw_malloc failed");
        clear();
    }
    cplx* data() noexcept { return reinterpret_cast<cplx*>(ptr_.get()); }
    const cplx* data() const noexcept { return reinterpret_cast<const cplx*>(ptr_.get()); }
    fftw_complex* raw() noexcept { return ptr_.get(); }
    std::size_t size() const noexcept { return n_; }
    cplx& operator[](std::size_t i) noexcept { return data()[i]; }
    const cplx& operator[](std::size_t i) const noexcept { return data()[i]; }
    void clear() noexcept {
        for (std::size_t i = 0; i < n_; ++i) data()[i] = cplx(0.0, 0.0);
    }

private:
    std::size_t n_ = 0;
    std::unique_ptr<fftw_complex, FftwFree> ptr_;
};

/// In-place complex DFT plan over a fixed buffer. Sign -1 is the forward
/// transform; neither direction is normalised. FFTW_ESTIMATE keeps the plan
/// (and therefore the numerics) identical from run to run.
class Plan {
public:
    Plan() = default;
    Plan(Buffer& buf, std::vector<int> dims, int sign) {
        std::lock_guard lock(planner_mutex());
        plan_ = fftw_plan_dft(static_cast<int>(dims.size()), dims.data(), buf.raw(), buf.raw(), sign,
                              FFTW_ESTIMATE);
        if (!plan_) throw Error(ErrorCode::numerical_abort, "fftw plan creation failed");
    }
    Plan(const Plan&) = delete;
    Plan& operator=(const Plan&) = delete;
    Plan(Plan&& o) noexcept : plan_(o.plan_) { o.plan_ = nullptr; }
    Plan& operator=(Plan&& o) noexcept {
        std::swap(plan_, o.plan_);
        return *this;
    }
    ~Plan() {
        if (plan_) {
            std::lock_guard lock(planner_mutex());
            fftw_destroy_plan(plan_);
        }
    }

    void execute() const { fftw_execute(plan_); }

private:
    fftw_plan plan_ = nullptr;
};

} // namespace flowtomo::fft
