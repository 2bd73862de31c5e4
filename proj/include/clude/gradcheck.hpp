#pragma once

// Central-difference verification of tape gradients.

#include "clude/graph.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>

namespace clude {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst;  ///< "<name>[index]" of the worst coordinate
  Index checked = 0;
};

/// Builds a scalar on a fresh graph from a single input variable.
using ScalarFn = std::function<Var(Graph&, const Var&)>;
/// Builds a scalar loss on a fresh graph (parameters bound inside).
using LossFn = std::function<Var(Graph&)>;

/// max_i |analytic_i - central_i| / max(1, |analytic_i|) over every coordinate of `point`.
double finite_diff_check(const ScalarFn& f, const NdArray& point, double step);

/// Same measure w.r.t. parameters. At most `max_coords` randomly chosen
/// coordinates per parameter are probed (all when 0). `corrupt` is added to
/// every analytic gradient (fault injection for the checker itself).
GradCheckReport check_parameter_gradients(const LossFn& f, std::span<Parameter* const> params, double step,
                                          Index max_coords = 0, std::uint64_t seed = 0, double corrupt = 0.0);

}  // namespace clude
