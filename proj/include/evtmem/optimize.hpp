#pragma once

#include <Eigen/Core>
#include <functional>

namespace evtmem {

enum class OptMethod { NelderMead, CoordinateSearch };

struct OptimizerSpec {
  OptMethod method = OptMethod::NelderMead;
  int max_iters = 2000;
  double f_tol = 1e-9;
  double x_tol = 1e-8;
  int restarts = 2;
  double simplex_scale = 0.1;  // initial step per coordinate
};

struct OptResult {
  Eigen::VectorXd x;
  double f = 0.0;
  bool converged = false;
  int iterations = 0;
  int evaluations = 0;
};

// Derivative-free maximization. Non-finite objective values are treated as
// -infinity (rejected points). Restarts rebuild the simplex at the incumbent
// with a shrunken, displacement-oriented step; the best value is kept, ties
// broken toward the earlier run.
OptResult maximize(const std::function<double(const Eigen::VectorXd&)>& f,
                   const Eigen::VectorXd& x0, const OptimizerSpec& spec);

}  // namespace evtmem
