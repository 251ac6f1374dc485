#include "phasemark/detail/fft.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>

namespace phasemark::fft {

namespace {

// FFTW plan creation is not thread-safe; execution with the new-array
// interface is. Plans are cached per (rows, cols, sign) and created
// against a scratch buffer with FFTW_ESTIMATE, which leaves the array
// untouched and keeps first-call latency low.
struct PlanCache {
    std::mutex mu;
    std::map<std::tuple<int, int, int>, fftw_plan> plans;

    fftw_plan get(int rows, int cols, int sign) {
        std::lock_guard<std::mutex> lock(mu);
        const auto key = std::make_tuple(rows, cols, sign);
        auto it = plans.find(key);
        if (it != plans.end()) return it->second;
        fftw_complex* scratch = fftw_alloc_complex(size_t(rows) * size_t(cols));
        fftw_plan p = fftw_plan_dft_2d(rows, cols, scratch, scratch, sign,
                                       FFTW_ESTIMATE | FFTW_UNALIGNED);
        fftw_free(scratch);
        plans.emplace(key, p);
        return p;
    }
};

PlanCache& cache() {
    static PlanCache c;
    return c;
}

void execute(ArrayXXcd& inout, int sign) {
    const int rows = int(inout.rows()), cols = int(inout.cols());
    fftw_plan plan = cache().get(rows, cols, sign);
    auto* ptr = reinterpret_cast<fftw_complex*>(inout.data());
    fftw_execute_dft(plan, ptr, ptr);
}

} // namespace

void forward2d(ArrayXXcd& inout) {
    execute(inout, FFTW_FORWARD);
}

void inverse2d(ArrayXXcd& inout) {
    execute(inout, FFTW_BACKWARD);
    inout /= double(inout.size());
}

} // namespace phasemark::fft
