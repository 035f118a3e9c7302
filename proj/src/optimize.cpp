#include "evtmem/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace evtmem {

namespace {

using Eigen::VectorXd;

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double sanitized(double v) { return std::isnan(v) ? kNegInf : v; }

struct Run {
  VectorXd x;
  double f = kNegInf;
  bool converged = false;
  int iterations = 0;
};

// One Nelder-Mead descent (maximization) from a given simplex seed.
Run nelder_mead_once(const std::function<double(const VectorXd&)>& fn,
                     const VectorXd& x0, const VectorXd& steps,
                     const OptimizerSpec& spec, int& evals) {
  const int n = static_cast<int>(x0.size());
  auto eval = [&](const VectorXd& x) {
    ++evals;
    return sanitized(fn(x));
  };

  std::vector<VectorXd> xs(n + 1, x0);
  std::vector<double> fs(n + 1);
  for (int k = 0; k < n; ++k) xs[k + 1][k] += steps[k];
  for (int k = 0; k <= n; ++k) fs[k] = eval(xs[k]);

  std::vector<int> ord(n + 1);
  Run run;
  for (int it = 0; it < spec.max_iters; ++it) {
    run.iterations = it + 1;
    std::iota(ord.begin(), ord.end(), 0);
    std::stable_sort(ord.begin(), ord.end(),
                     [&](int a, int b) { return fs[a] > fs[b]; });
    const int best = ord[0], second_worst = ord[n - 1], worst = ord[n];

    double f_spread = fs[best] - fs[worst];
    if (!std::isfinite(f_spread)) f_spread = std::numeric_limits<double>::max();
    double x_spread = 0.0;
    for (int k = 0; k <= n; ++k)
      x_spread = std::max(x_spread,
                          (xs[k] - xs[best]).lpNorm<Eigen::Infinity>());
    if (std::isfinite(fs[best]) &&
        (f_spread <= spec.f_tol * (1.0 + std::abs(fs[best])) ||
         x_spread <= spec.x_tol *
                         (1.0 + xs[best].lpNorm<Eigen::Infinity>()))) {
      run.converged = true;
      break;
    }

    VectorXd centroid = VectorXd::Zero(n);
    for (int k = 0; k <= n; ++k)
      if (k != worst) centroid += xs[k];
    centroid /= n;

    const VectorXd xr = centroid + (centroid - xs[worst]);
    const double fr = eval(xr);
    if (fr > fs[best]) {
      const VectorXd xe = centroid + 2.0 * (centroid - xs[worst]);
      const double fe = eval(xe);
      if (fe > fr) {
        xs[worst] = xe;
        fs[worst] = fe;
      } else {
        xs[worst] = xr;
        fs[worst] = fr;
      }
    } else if (fr > fs[second_worst]) {
      xs[worst] = xr;
      fs[worst] = fr;
    } else {
      const bool outside = fr > fs[worst];
      const VectorXd xc =
          outside ? VectorXd(centroid + 0.5 * (xr - centroid))
                  : VectorXd(centroid - 0.5 * (centroid - xs[worst]));
      const double fc = eval(xc);
      if ((outside && fc >= fr) || (!outside && fc > fs[worst])) {
        xs[worst] = xc;
        fs[worst] = fc;
      } else {
        for (int k = 0; k <= n; ++k) {
          if (k == best) continue;
          xs[k] = xs[best] + 0.5 * (xs[k] - xs[best]);
          fs[k] = eval(xs[k]);
        }
      }
    }
  }

  int best = 0;
  for (int k = 1; k <= n; ++k)
    if (fs[k] > fs[best]) best = k;
  run.x = xs[best];
  run.f = fs[best];
  return run;
}

Run coordinate_search_once(const std::function<double(const VectorXd&)>& fn,
                           const VectorXd& x0, const VectorXd& steps,
                           const OptimizerSpec& spec, int& evals) {
  const int n = static_cast<int>(x0.size());
  auto eval = [&](const VectorXd& x) {
    ++evals;
    return sanitized(fn(x));
  };
  Run run;
  VectorXd x = x0, step = steps;
  double f = eval(x);
  for (int it = 0; it < spec.max_iters; ++it) {
    run.iterations = it + 1;
    bool improved = false;
    for (int k = 0; k < n; ++k) {
      for (double s : {step[k], -step[k]}) {
        VectorXd xt = x;
        xt[k] += s;
        const double ft = eval(xt);
        if (ft > f) {
          x = xt;
          f = ft;
          improved = true;
        }
      }
    }
    if (!improved) {
      if (step.lpNorm<Eigen::Infinity>() <=
          spec.x_tol * (1.0 + x.lpNorm<Eigen::Infinity>())) {
        run.converged = true;
        break;
      }
      step *= 0.5;
    }
  }
  run.x = x;
  run.f = f;
  return run;
}

}  // namespace

OptResult maximize(const std::function<double(const VectorXd&)>& fn,
                   const VectorXd& x0, const OptimizerSpec& spec) {
  if (x0.size() == 0) throw std::invalid_argument("maximize: empty start");
  if (!(spec.f_tol > 0.0) || !(spec.x_tol > 0.0))
    throw std::invalid_argument("maximize: tolerances must be positive");

  const int n = static_cast<int>(x0.size());
  int evals = 0;
  OptResult out;
  out.x = x0;
  out.f = kNegInf;

  VectorXd start = x0;
  VectorXd steps = VectorXd::Constant(n, spec.simplex_scale);
  double scale = spec.simplex_scale;
  for (int r = 0; r <= std::max(0, spec.restarts); ++r) {
    const Run run =
        spec.method == OptMethod::NelderMead
            ? nelder_mead_once(fn, start, steps, spec, evals)
            : coordinate_search_once(fn, start, steps, spec, evals);
    out.iterations += run.iterations;
    if (run.f > out.f) {
      out.f = run.f;
      out.x = run.x;
      out.converged = run.converged;
    } else if (run.f == out.f && run.converged) {
      out.converged = true;
    }
    // Oriented restart: shrink the steps and point them along the last
    // displacement so the new simplex leans into the descent direction.
    scale *= 0.2;
    for (int k = 0; k < n; ++k) {
      const double d = run.x[k] - start[k];
      steps[k] = (d < 0.0 ? -scale : scale);
    }
    start = out.x;
  }
  out.evaluations = evals;
  return out;
}

}  // namespace evtmem
