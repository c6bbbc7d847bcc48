#include "fft.hpp"

#include <fftw3.h>

#include <memory>

namespace tdae::metrics::detail {

namespace {

struct PlanDeleter {
    void operator()(fftw_plan_s* p) const { fftw_destroy_plan(p); }
};

}  // namespace

void fft2(std::vector<Complex>& data, std::size_t rows, std::size_t cols, bool inverse) {
    auto* buf = reinterpret_cast<fftw_complex*>(data.data());
    std::unique_ptr<fftw_plan_s, PlanDeleter> plan(fftw_plan_dft_2d(static_cast<int>(rows), static_cast<int>(cols), buf,
                                                                    buf, inverse ? FFTW_BACKWARD : FFTW_FORWARD,
                                                                    FFTW_ESTIMATE));
    fftw_execute(plan.get());
    if (inverse) {
        const double scale = 1.0 / static_cast<double>(rows * cols);
        for (auto& v : data) v *= scale;
    }
}

}  // namespace tdae::metrics::detail
