#pragma once

#include <optional>
#include <vector>

#include "evtmem/core.hpp"
#include "evtmem/likelihood.hpp"
#include "evtmem/optimize.hpp"

namespace evtmem {

struct FitResult {
  MemParams params;
  double loglik = 0.0;
  bool converged = false;
  int iterations = 0;
  ThresholdPlan threshold_plan;
  QuadratureSpec quad;
  bool boundary_sigma = false;  // Sigma-hat hit the zero floor
};

// Maximizes the approximate marginal log-likelihood over the unconstrained
// (beta_A, beta_B, Cholesky-log Sigma) vector. Data-driven initialization
// unless an explicit start is provided. Eigenvalues of Sigma-hat at or below
// 1e-8 are treated as the boundary: Sigma is snapped to exactly zero, beta is
// refit under the degenerate likelihood, and boundary_sigma is set.
FitResult fit_mem(const ClusteredDataset& data, const ThresholdPlan& plan,
                  const QuadratureSpec& quad, const OptimizerSpec& opt,
                  const std::optional<MemParams>& init = std::nullopt);

// fit_mem on the dataset with the common-slope block dropped (model M2).
FitResult fit_m2(const ClusteredDataset& data, const ThresholdPlan& plan,
                 const QuadratureSpec& quad, const OptimizerSpec& opt);

// Fully parametric model (M3): cluster-specific beta_jA plus common beta_B,
// maximizing the plug-in exceedance likelihood by Newton iterations.
// Clusters flagged (fewer exceedances than p_A) are excluded from the fit and
// carry no coefficients.
struct FixedFitResult {
  std::vector<VectorXd> beta_jA;  // per cluster; empty vector when flagged
  VectorXd beta_B;
  double loglik = 0.0;
  bool converged = false;
  int iterations = 0;
  std::vector<bool> flagged;
};

FixedFitResult fit_fixed(const ClusteredDataset& data,
                         const ThresholdPlan& plan);

// Cluster-wise Hill estimator (model M4): mean of log(y/omega) over strict
// exceedances.
double hill_fit(const std::vector<double>& y, double omega);
double hill_fit(const ClusteredDataset& data, std::size_t j, double omega);

// Pooled Hill estimate over every exceedance in the cache.
double pooled_hill(const ExceedanceCache& cache);

// The data-driven start used by fit_mem (exposed for diagnostics/tests).
MemParams data_driven_init(const ExceedanceCache& cache);

}  // namespace evtmem
