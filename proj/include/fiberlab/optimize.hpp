#pragma once

#include <functional>
#include <vector>

namespace fiberlab {

struct OptimizeOptions
{
  int max_evaluations = 400;
  double fd_step = 1e-4;         // forward-difference step in parameter units
  double gradient_tol = 1e-9;
  double relative_tol = 1e-10;   // stop when an iteration improves f by less than this (relative)
};

struct OptimizeResult
{
  std::vector<double> x;
  double value = 0.0;
  double initial_value = 0.0;
  int evaluations = 0;
  bool converged = false;
};

/// Quasi-Newton (BFGS) minimization with finite-difference gradients and an
/// Armijo backtracking line search. Always returns the best point evaluated.
OptimizeResult minimize_bfgs(const std::function<double(const std::vector<double>&)>& f,
                             std::vector<double> x0, const OptimizeOptions& opts = {});

} // namespace fiberlab
