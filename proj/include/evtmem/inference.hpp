#pragma once

#include <optional>
#include <string>
#include <vector>

#include "evtmem/estimate.hpp"
#include "evtmem/predict.hpp"

namespace evtmem {

// Empirical inverse of the common-slope covariance (the natural estimator of
// Lambda_B^{-1} from the exceedance second moments). Clusters without
// exceedances are skipped and counted; the inverse is exposed only when the
// condition number stays below 1e12.
struct LambdaBEstimate {
  MatrixXd lambda_b_inv;
  std::optional<MatrixXd> lambda_b;
  std::size_t contributing_clusters = 0;
  std::size_t skipped_clusters = 0;
};

LambdaBEstimate lambda_b_hat(const ClusteredDataset& data,
                             const ThresholdPlan& plan);

struct WaldResult {
  int k = 0;
  double t_stat = 0.0;
  double p_value = 1.0;
};

// Two-sided test of beta_Bk = 0: t = (Lambda_B)_kk^{-1/2} sqrt(J n_0) beta_Bk
// with the asymptotic-bias vector set to zero.
WaldResult wald_test(const FitResult& fit, const LambdaBEstimate& lambda_b,
                     const ThresholdPlan& plan, int k);

// Cluster-wise EVI gamma*_j = exp[(beta_A + u~_j)' xbar_Aj + beta_B' xbar_Bj]
// with exceedance-mean covariates; clusters without exceedances are omitted.
struct ClusterEvi {
  std::vector<std::string> ids;
  std::vector<double> gamma_star;
  std::size_t omitted = 0;
};

ClusterEvi cluster_evi(const FitResult& fit,
                       const RandomEffectPredictions& preds,
                       const ClusteredDataset& data, const ThresholdPlan& plan);

// Uniform goodness-of-fit transform S = (y/omega)^{-1/gamma-hat} on the
// exceedances, with the KS distance (and p-value) against U(0,1).
struct GofResult {
  std::vector<double> s_sorted;
  double ks_distance = 0.0;
  double ks_pvalue = 1.0;
};

GofResult gof_transform(const FitResult& fit,
                        const RandomEffectPredictions& preds,
                        const ClusteredDataset& data, const ThresholdPlan& plan);

// Standardized estimator samples for the location-shift model:
//   sqrt(J) (beta_A - beta_A0) / sigma_0,
//   sqrt(J n_0) (beta_B - beta_B0) [scaled by (Theta_B)_kk^{-1/2}],
//   sqrt(J) (sigma^2 - sigma_0^2) / (sqrt(2) sigma_0^2),
// plus their KS distances to N(0,1). Theta_B defaults to the identity, which
// is exact for zero-mean unit-variance common covariates; supply it for other
// designs. Requires p_A = 1 and sigma_0^2 > 0.
struct StandardizedSamples {
  std::vector<double> beta_A, beta_B, sigma2;
  double ks_beta_A = 0.0, ks_beta_B = 0.0, ks_sigma2 = 0.0;
};

StandardizedSamples standardize_estimates(
    const std::vector<FitResult>& fits, const MemParams& truth,
    const std::optional<MatrixXd>& theta_b = std::nullopt);

// Closed-form asymptotic covariances exposed for interval construction:
// Lambda_A = Sigma, Lambda_C = 2 {M_* (Sigma (x) Sigma)^{-1} M_*^T}^{-1}.
MatrixXd lambda_a(const MemParams& params);
MatrixXd lambda_c(const MatrixXd& sigma);

}  // namespace evtmem
