#pragma once

#include <cstddef>
#include <exception>
#include <mutex>
#include <string_view>

namespace fedmon {

// kSerial is the reference path; kParallel runs per-unit kernels under
// OpenMP. Both produce bit-identical results because every iteration writes
// only its own unit and reductions happen afterwards in index order.
enum class Execution { kSerial, kParallel };

Execution parse_execution(std::string_view name);
std::string_view to_string(Execution exec);

// Calls fn(i) for i in [0, n). The first exception thrown by any iteration is
// rethrown on the calling thread once the loop finishes.
template <class Fn>
void for_each_index(Execution exec, std::size_t n, Fn&& fn) {
  if (exec == Execution::kSerial || n < 2) {
    for (std::size_t i = 0; i < n; ++i) {
      fn(i);
    }
    return;
  }
  std::exception_ptr error;
  std::mutex error_mutex;
  const auto count = static_cast<long long>(n);
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < count; ++i) {
    try {
      fn(static_cast<std::size_t>(i));
    } catch (...) {
      std::lock_guard<std::mutex> lock(error_mutex);
      if (!error) {
        error = std::current_exception();
      }
    }
  }
  if (error) {
    std::rethrow_exception(error);
  }
}

}  // namespace fedmon
