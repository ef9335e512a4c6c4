// Thin RAII layer over FFTW for complex 1-D transforms of arbitrary length.
//
// Plans are created with FFTW_ESTIMATE | FFTW_UNALIGNED so they can be executed
// on any std::vector<std::complex<double>> buffer through the new-array
// interface. Planning is serialized (the FFTW planner is not reentrant);
// execution is safe from any number of threads.

#pragma once

#include <fftw3.h>

#include <complex>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <stdexcept>

namespace qdas::fft {

namespace detail {

inline std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

inline fftw_complex* as_fftw(std::complex<double>* p) {
    return reinterpret_cast<fftw_complex*>(p);
}

} // namespace detail

class Plan {
public:
    explicit Plan(std::size_t n) : n_(n) {
        if (n == 0) throw std::invalid_argument("fft: zero-length transform");
        std::lock_guard lock(detail::planner_mutex());
        auto* scratch = fftw_alloc_complex(n);
        const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
        const int len = static_cast<int>(n);
        forward_ = fftw_plan_dft_1d(len, scratch, scratch, FFTW_FORWARD, flags);
        backward_ = fftw_plan_dft_1d(len, scratch, scratch, FFTW_BACKWARD, flags);
        fftw_free(scratch);
        if (!forward_ || !backward_) throw std::runtime_error("fft: planning failed");
    }

    Plan(const Plan&) = delete;
    Plan& operator=(const Plan&) = delete;

    ~Plan() {
        std::lock_guard lock(detail::planner_mutex());
        fftw_destroy_plan(forward_);
        fftw_destroy_plan(backward_);
    }

    std::size_t size() const { return n_; }

    /// In-place unnormalized forward transform, X[k] = sum x[j] e^{-2 pi i jk/n}.
    void forward(std::span<std::complex<double>> data) const {
        check(data.size());
        fftw_execute_dft(forward_, detail::as_fftw(data.data()), detail::as_fftw(data.data()));
    }

    /// In-place unnormalized inverse transform (no 1/n factor).
    void backward(std::span<std::complex<double>> data) const {
        check(data.size());
        fftw_execute_dft(backward_, detail::as_fftw(data.data()), detail::as_fftw(data.data()));
    }

private:
    void check(std::size_t len) const {
        if (len != n_) throw std::invalid_argument("fft: buffer length does not match plan");
    }

    std::size_t n_;
    fftw_plan forward_ = nullptr;
    fftw_plan backward_ = nullptr;
};

/// Shared, process-wide plan for length n.
inline std::shared_ptr<const Plan> plan_for(std::size_t n) {
    // the planner mutex must outlive the cache, whose plans lock it on destruction
    detail::planner_mutex();
    static std::mutex cache_mutex;
    static std::map<std::size_t, std::shared_ptr<const Plan>> cache;
    std::lock_guard lock(cache_mutex);
    auto it = cache.find(n);
    if (it != cache.end()) return it->second;
    auto plan = std::make_shared<const Plan>(n);
    cache.emplace(n, plan);
    return plan;
}

} // namespace qdas::fft
