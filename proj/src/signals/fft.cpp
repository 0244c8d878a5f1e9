#include "fft.hpp"

#include <fftw3.h>

#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>

namespace slicekit::signals::detail {

namespace {

// FFTW's planner is not thread-safe; plan creation is serialized here and
// execution goes through the new-array interface on fresh aligned buffers.
// FFTW_ESTIMATE keeps the chosen algorithm, and therefore every bit of the
// output, independent of timing measurements.
std::mutex planner_mutex;

struct RealPlan {
    fftw_plan plan = nullptr;
};

fftw_plan r2c_plan(std::size_t n) {
    static std::map<std::size_t, RealPlan> plans;
    std::lock_guard lock(planner_mutex);
    auto& slot = plans[n];
    if (slot.plan == nullptr) {
        double* in = fftw_alloc_real(n);
        fftw_complex* out = fftw_alloc_complex(n / 2 + 1);
        slot.plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), in, out, FFTW_ESTIMATE);
        fftw_free(in);
        fftw_free(out);
        if (slot.plan == nullptr) {
            throw std::runtime_error("FFTW could not create a plan");
        }
    }
    return slot.plan;
}

fftw_plan dct2_plan(std::size_t n) {
    static std::map<std::size_t, RealPlan> plans;
    std::lock_guard lock(planner_mutex);
    auto& slot = plans[n];
    if (slot.plan == nullptr) {
        double* in = fftw_alloc_real(n);
        double* out = fftw_alloc_real(n);
        slot.plan = fftw_plan_r2r_1d(static_cast<int>(n), in, out, FFTW_REDFT10, FFTW_ESTIMATE);
        fftw_free(in);
        fftw_free(out);
        if (slot.plan == nullptr) {
            throw std::runtime_error("FFTW could not create a plan");
        }
    }
    return slot.plan;
}

struct FreeDeleter {
    void operator()(void* p) const { fftw_free(p); }
};

}  // namespace

void power_spectrum_into(std::span<const double> samples, std::size_t fft_size, std::span<double> out) {
    const fftw_plan plan = r2c_plan(fft_size);
    std::unique_ptr<double, FreeDeleter> in(fftw_alloc_real(fft_size));
    std::unique_ptr<fftw_complex, FreeDeleter> spec(fftw_alloc_complex(fft_size / 2 + 1));
    double* x = in.get();
    std::size_t i = 0;
    for (; i < samples.size(); ++i) {
        x[i] = samples[i];
    }
    for (; i < fft_size; ++i) {
        x[i] = 0.0;
    }
    fftw_execute_dft_r2c(plan, x, spec.get());
    const fftw_complex* c = spec.get();
    for (std::size_t k = 0; k <= fft_size / 2; ++k) {
        out[k] = c[k][0] * c[k][0] + c[k][1] * c[k][1];
    }
}

void dct2_unnormalized(std::span<const double> in, std::span<double> out) {
    const std::size_t n = in.size();
    const fftw_plan plan = dct2_plan(n);
    std::unique_ptr<double, FreeDeleter> a(fftw_alloc_real(n));
    std::unique_ptr<double, FreeDeleter> b(fftw_alloc_real(n));
    std::copy(in.begin(), in.end(), a.get());
    fftw_execute_r2r(plan, a.get(), b.get());
    std::copy(b.get(), b.get() + n, out.begin());
}

}  // namespace slicekit::signals::detail
