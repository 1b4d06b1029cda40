#include "lanedetect/runtime.hpp"

#include <cstdlib>
#include <string>

#include <Eigen/Core>

#if defined(__SSE__) || defined(_M_X64)
#include <xmmintrin.h>
#define LANEDETECT_HAVE_MXCSR 1
#endif

namespace lanedetect {

std::size_t configure_threads() {
  if (const char* env = std::getenv("LANEDETECT_THREADS")) {
    try {
      const long n = std::stol(env);
      if (n > 0) Eigen::setNbThreads(static_cast<int>(n));
    } catch (const std::exception&) {
      // ignored: malformed values leave the default
    }
  }
  return static_cast<std::size_t>(Eigen::nbThreads());
}

#ifdef LANEDETECT_HAVE_MXCSR
namespace {
constexpr unsigned kFtzDaz = 0x8040;  // FTZ (bit 15) | DAZ (bit 6)
}
FlushDenormalsGuard::FlushDenormalsGuard() : saved_(_mm_getcsr()) { _mm_setcsr(saved_ | kFtzDaz); }
FlushDenormalsGuard::~FlushDenormalsGuard() { _mm_setcsr(saved_); }
#else
FlushDenormalsGuard::FlushDenormalsGuard() = default;
FlushDenormalsGuard::~FlushDenormalsGuard() = default;
#endif

}  // namespace lanedetect
