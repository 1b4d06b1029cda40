#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace lanedetect {

struct GradcheckOptions {
  std::uint64_t seed = 0;
  double epsilon = 1e-5;
  std::size_t cases = 20;
  double tolerance = 1e-4;          // finite-difference suites
  double adjoint_tolerance = 1e-6;  // <Conv x, y> vs <x, ConvT y>
  double model_tolerance = 1e-4;    // end-to-end directional derivative
  std::size_t model_cases = 3;
  bool include_model = true;
};

struct SuiteResult {
  std::string name;
  std::size_t cases = 0;
  double worst_error = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

struct GradcheckReport {
  std::vector<SuiteResult> suites;

  bool passed() const;
  std::string format() const;
};

/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-3). The floor keeps
/// gradients that are zero up to round-off from producing spurious ratios.
double gradient_error(double analytic, double numeric);

/// Runs every layer, loss and adjoint suite in f64 on seeded random cases,
/// plus a directional-derivative check of a reduced model.
GradcheckReport run_gradcheck(const GradcheckOptions& options = {});

}  // namespace lanedetect
