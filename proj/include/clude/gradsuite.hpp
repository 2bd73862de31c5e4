#pragma once

// The finite-difference suite behind `clude gradcheck`: every differentiable
// op at random points plus the end-to-end micro pipeline.

#include <string>
#include <vector>

namespace clude {

struct SuiteResult {
  std::string name;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  std::string worst;

  bool passed() const { return max_rel_error <= tolerance; }
};

struct SuiteOptions {
  double step = 1e-5;
  double op_tolerance = 1e-6;
  double pipeline_tolerance = 1e-4;
  int points = 20;  ///< random points per op
  bool pipeline = true;  ///< 8x8 scene, K = 4, M = 8
  double corrupt = 0.0;  ///< added to every analytic gradient (fault injection)
};

std::vector<SuiteResult> run_gradient_suite(const SuiteOptions& opts = {});

}  // namespace clude
