#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "rga/graph.hpp"

namespace rga {

struct GradCheckOptions {
  double step = 1e-5;
  double rel_tol = 1e-4;
  /// Absolute slack for near-zero gradients.
  double abs_tol = 1e-7;
  /// When nonzero, each parameter is checked on this many seeded random
  /// elements instead of all of them.
  std::size_t max_elements_per_param = 0;
  std::uint64_t seed = 0;
  /// Test hook: analytic gradients are multiplied by this before comparison.
  double corrupt_scale = 1.0;
};

struct ParamCheck {
  std::string name;
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
  std::size_t checked = 0;
  bool pass = true;
};

struct CheckReport {
  std::vector<ParamCheck> params;
  bool pass() const;
  double worst_rel_err() const;
};

/// Builds a fresh record from the parameters and returns a scalar loss.
using LossFn = std::function<Var(Graph<double>&, ParameterSet<double>&)>;

/// Compares analytic gradients of every trainable parameter with central
/// differences (f(x+h) - f(x-h)) / 2h. An element passes when its absolute
/// error is within abs_tol or its relative error |a-n| / max(|a|,|n|) is
/// within rel_tol. Throws std::runtime_error when two evaluations at the
/// same point differ.
CheckReport grad_check(const LossFn& fn, ParameterSet<double>& params, const GradCheckOptions& options = {});

/// "<param-name> max_rel_err=<value> PASS|FAIL" per parameter.
std::string format_report(const CheckReport& report);

}  // namespace rga
