#pragma once

#include <cstddef>

namespace lanedetect {

/// Applies LANEDETECT_THREADS (if set and positive) to the GEMM backend.
/// Returns the thread count in effect.
std::size_t configure_threads();

/// Flushes subnormal floats to zero on the current thread for its lifetime
/// (SSE FTZ/DAZ on x86; a no-op elsewhere). Restores the previous mode.
class FlushDenormalsGuard {
 public:
  FlushDenormalsGuard();
  ~FlushDenormalsGuard();
  FlushDenormalsGuard(const FlushDenormalsGuard&) = delete;
  FlushDenormalsGuard& operator=(const FlushDenormalsGuard&) = delete;

 private:
  unsigned saved_ = 0;
};

}  // namespace lanedetect
