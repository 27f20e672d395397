#pragma once

#include <cstddef>
#include <functional>

namespace poisonlab {

/// Number of worker threads to use when the caller passes 0.
std::size_t default_jobs() noexcept;

/// Runs body(i) for i in [0, n) on up to `jobs` threads (0 = all cores).
/// Indices are handed out dynamically; the first exception thrown by any
/// body is rethrown after all workers stop.
void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& body);

}  // namespace poisonlab
