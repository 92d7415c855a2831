#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "crossloc/nls_solver.hpp"

namespace crossloc {

/// Central-difference Jacobian of `factor` w.r.t. every block, perturbing
/// through the block retraction. The problem is restored afterwards.
std::vector<MatX> numeric_jacobians(Problem& problem, const Factor& factor, double delta = 1e-6);

/// max over blocks of |J_analytic - J_numeric|_F / max(|J_numeric|_F, floor).
double jacobian_error(Problem& problem, const Factor& factor, double delta = 1e-6,
                      double floor = 1e-6);

struct JacobianSuiteResult {
  std::string factor;
  int trials = 0;
  double max_error = 0.0;
  bool pass = false;
};

/// Random-configuration suites for every factor type.
std::vector<JacobianSuiteResult> run_jacobian_suites(std::uint64_t seed, int trials,
                                                     double tolerance = 1e-4);

}  // namespace crossloc
