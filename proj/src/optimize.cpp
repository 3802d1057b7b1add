#include "fiberlab/optimize.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace fiberlab {

OptimizeResult minimize_bfgs(const std::function<double(const std::vector<double>&)>& f, std::vector<double> x0,
                             const OptimizeOptions& opts)
{
  const std::size_t n = x0.size();
  if (n == 0)
    throw std::invalid_argument("minimize_bfgs: empty parameter vector");

  OptimizeResult res;
  auto eval = [&](const std::vector<double>& x) {
    const double v = f(x);
    ++res.evaluations;
    if (std::isfinite(v) && v < res.value) {
      res.value = v;
      res.x = x;
    }
    return v;
  };

  res.value = std::numeric_limits<double>::infinity();
  std::vector<double> x = x0;
  double fx = eval(x);
  res.initial_value = fx;

  auto gradient = [&](const std::vector<double>& at, double f_at) {
    std::vector<double> g(n);
    std::vector<double> xp = at;
    for (std::size_t i = 0; i < n; ++i) {
      xp[i] = at[i] + opts.fd_step;
      g[i] = (eval(xp) - f_at) / opts.fd_step;
      xp[i] = at[i];
    }
    return g;
  };

  std::vector<double> hinv(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    hinv[i * n + i] = 1.0;
  std::vector<double> g = gradient(x, fx);

  while (res.evaluations + static_cast<int>(n) + 1 < opts.max_evaluations) {
    double gnorm = 0.0;
    for (double v : g)
      gnorm += v * v;
    if (std::sqrt(gnorm) < opts.gradient_tol) {
      res.converged = true;
      break;
    }
    std::vector<double> d(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        d[i] -= hinv[i * n + j] * g[j];
    double slope = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      slope += d[i] * g[i];
    if (slope >= 0.0) {
      // Reset to steepest descent.
      for (std::size_t i = 0; i < n; ++i) {
        d[i] = -g[i];
        for (std::size_t j = 0; j < n; ++j)
          hinv[i * n + j] = i == j ? 1.0 : 0.0;
      }
      slope = -gnorm;
    }

    double step = 1.0;
    std::vector<double> xn(n);
    double fn = fx;
    bool accepted = false;
    for (int ls = 0; ls < 30 && res.evaluations < opts.max_evaluations; ++ls) {
      for (std::size_t i = 0; i < n; ++i)
        xn[i] = x[i] + step * d[i];
      fn = eval(xn);
      if (std::isfinite(fn) && fn <= fx + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted)
      break;

    const double improvement = fx - fn;
    std::vector<double> gn = gradient(xn, fn);
    std::vector<double> s(n), yv(n);
    double sy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = xn[i] - x[i];
      yv[i] = gn[i] - g[i];
      sy += s[i] * yv[i];
    }
    if (sy > 1e-300) {
      std::vector<double> hy(n, 0.0);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
          hy[i] += hinv[i * n + j] * yv[j];
      double yhy = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        yhy += yv[i] * hy[i];
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
          hinv[i * n + j] += ((sy + yhy) * s[i] * s[j]) / (sy * sy) - (hy[i] * s[j] + s[i] * hy[j]) / sy;
    }
    x = xn;
    fx = fn;
    g = gn;
    if (improvement <= opts.relative_tol * std::abs(fx)) {
      res.converged = true;
      break;
    }
  }
  return res;
}

} // namespace fiberlab
