#pragma once

#include <cstddef>
#include <exception>

namespace misfit::detail {

/// Runs body(i) for i in [0, n) across OpenMP threads. Each index writes only
/// its own slot; the first exception thrown by any index is rethrown here.
template <typename Body>
void parallel_for(std::size_t n, Body&& body) {
    std::exception_ptr error;
    const long count = static_cast<long>(n);
#pragma omp parallel for schedule(dynamic, 1)
    for (long i = 0; i < count; ++i) {
        try {
            body(static_cast<std::size_t>(i));
        } catch (...) {
#pragma omp critical(misfit_parallel_error)
            if (!error) error = std::current_exception();
        }
    }
    if (error) std::rethrow_exception(error);
}

}  // namespace misfit::detail
