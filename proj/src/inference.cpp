#include "evtmem/inference.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "evtmem/special.hpp"

namespace evtmem {

LambdaBEstimate lambda_b_hat(const ClusteredDataset& data,
                             const ThresholdPlan& plan) {
  const int p_A = data.p_A(), p_B = data.p_B();
  if (p_B == 0)
    throw std::invalid_argument("lambda_b_hat: model has no common slopes");
  LambdaBEstimate out;
  out.lambda_b_inv = MatrixXd::Zero(p_B, p_B);
  double bb_scale = 0.0;  // typical Psi_BB magnitude, for the singularity test

  for (std::size_t j = 0; j < data.n_clusters(); ++j) {
    const double omega = plan.omega_for(data.cluster_id(j));
    MatrixXd psi_aa = MatrixXd::Zero(p_A, p_A);
    MatrixXd psi_ab = MatrixXd::Zero(p_A, p_B);
    MatrixXd psi_bb = MatrixXd::Zero(p_B, p_B);
    int n0 = 0;
    for (std::size_t i = 0; i < data.cluster_size(j); ++i) {
      if (!(data.y(j, i) > omega)) continue;
      ++n0;
      const auto xa = data.x_A(j, i);
      const auto xb = data.x_B(j, i);
      psi_aa += xa * xa.transpose();
      psi_ab += xa * xb.transpose();
      psi_bb += xb * xb.transpose();
    }
    if (n0 == 0) {
      ++out.skipped_clusters;
      continue;
    }
    psi_aa /= n0;
    psi_ab /= n0;
    psi_bb /= n0;
    Eigen::FullPivLU<MatrixXd> lu(psi_aa);
    if (!lu.isInvertible())
      throw std::invalid_argument("lambda_b_hat: singular Psi_AA in cluster '" +
                                  data.cluster_id(j) + "'");
    out.lambda_b_inv += psi_bb - psi_ab.transpose() * lu.solve(psi_ab);
    bb_scale += psi_bb.cwiseAbs().maxCoeff();
    ++out.contributing_clusters;
  }
  if (out.contributing_clusters == 0)
    throw std::invalid_argument("lambda_b_hat: no cluster has exceedances");
  out.lambda_b_inv /= static_cast<double>(out.contributing_clusters);
  bb_scale /= static_cast<double>(out.contributing_clusters);

  // Invertible only when well-conditioned relative to the covariate scale;
  // a fully projected-out design leaves a matrix of rounding noise.
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(out.lambda_b_inv);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  if (lo > 1e-12 * std::max(bb_scale, 1e-300) && hi / lo < 1e12)
    out.lambda_b = out.lambda_b_inv.llt().solve(MatrixXd::Identity(p_B, p_B));
  return out;
}

WaldResult wald_test(const FitResult& fit, const LambdaBEstimate& lambda_b,
                     const ThresholdPlan& plan, int k) {
  if (!lambda_b.lambda_b)
    throw std::invalid_argument("wald_test: Lambda_B estimate is singular");
  if (k < 0 || k >= fit.params.p_B())
    throw std::invalid_argument("wald_test: coefficient index out of range");
  if (!(plan.n_0() > 0.0))
    throw std::invalid_argument("wald_test: n_0 must be positive");
  const double j_n0 =
      static_cast<double>(plan.n_clusters()) * plan.n_0();
  const double scale = std::sqrt((*lambda_b.lambda_b)(k, k));
  WaldResult out;
  out.k = k;
  out.t_stat = std::sqrt(j_n0) * fit.params.beta_B()[k] / scale;
  out.p_value = 2.0 * (1.0 - norm_cdf(std::abs(out.t_stat)));
  return out;
}

ClusterEvi cluster_evi(const FitResult& fit,
                       const RandomEffectPredictions& preds,
                       const ClusteredDataset& data,
                       const ThresholdPlan& plan) {
  const int p_A = data.p_A(), p_B = data.p_B();
  ClusterEvi out;
  for (std::size_t j = 0; j < data.n_clusters(); ++j) {
    const double omega = plan.omega_for(data.cluster_id(j));
    VectorXd xbar_a = VectorXd::Zero(p_A);
    VectorXd xbar_b = VectorXd::Zero(p_B);
    int n0 = 0;
    for (std::size_t i = 0; i < data.cluster_size(j); ++i) {
      if (!(data.y(j, i) > omega)) continue;
      ++n0;
      xbar_a += data.x_A(j, i);
      xbar_b += data.x_B(j, i);
    }
    if (n0 == 0) {
      ++out.omitted;
      continue;
    }
    xbar_a /= n0;
    xbar_b /= n0;
    const VectorXd& u = preds.for_cluster(data.cluster_id(j));
    out.ids.push_back(data.cluster_id(j));
    out.gamma_star.push_back(evi(fit.params, u, xbar_a, xbar_b));
  }
  return out;
}

GofResult gof_transform(const FitResult& fit,
                        const RandomEffectPredictions& preds,
                        const ClusteredDataset& data,
                        const ThresholdPlan& plan) {
  GofResult out;
  for (std::size_t j = 0; j < data.n_clusters(); ++j) {
    const double omega = plan.omega_for(data.cluster_id(j));
    const VectorXd& u = preds.for_cluster(data.cluster_id(j));
    for (std::size_t i = 0; i < data.cluster_size(j); ++i) {
      if (!(data.y(j, i) > omega)) continue;
      const double gamma =
          evi(fit.params, u, data.x_A(j, i), data.x_B(j, i));
      const double z = std::log(data.y(j, i) / omega);
      out.s_sorted.push_back(std::exp(-z / gamma));
    }
  }
  if (out.s_sorted.empty())
    throw std::invalid_argument("gof_transform: no exceedances");
  std::sort(out.s_sorted.begin(), out.s_sorted.end());
  out.ks_distance = ks_distance_sorted_cdf(out.s_sorted);
  out.ks_pvalue = ks_pvalue(out.ks_distance, out.s_sorted.size());
  return out;
}

StandardizedSamples standardize_estimates(
    const std::vector<FitResult>& fits, const MemParams& truth,
    const std::optional<MatrixXd>& theta_b) {
  if (truth.p_A() != 1)
    throw std::invalid_argument(
        "standardize_estimates: location-shift model required (p_A = 1)");
  const double sigma0_sq = truth.sigma()(0, 0);
  if (!(sigma0_sq > 0.0))
    throw std::invalid_argument("standardize_estimates: sigma_0^2 must be > 0");
  const double sigma0 = std::sqrt(sigma0_sq);
  const int p_B = truth.p_B();
  double b_scale = 1.0;
  if (theta_b) {
    if (theta_b->rows() != p_B || theta_b->cols() != p_B)
      throw std::invalid_argument("standardize_estimates: Theta_B shape");
    b_scale = 1.0 / std::sqrt((*theta_b)(0, 0));
  }

  StandardizedSamples out;
  for (const FitResult& fit : fits) {
    if (fit.params.p_A() != 1 || fit.params.p_B() != p_B)
      throw std::invalid_argument("standardize_estimates: fit dimension mismatch");
    const double J = static_cast<double>(fit.threshold_plan.n_clusters());
    const double n0 = fit.threshold_plan.n_0();
    const double sqrt_j = std::sqrt(J);
    out.beta_A.push_back(sqrt_j * (fit.params.beta_A()[0] - truth.beta_A()[0]) /
                         sigma0);
    if (p_B > 0)
      out.beta_B.push_back(std::sqrt(J * n0) *
                           (fit.params.beta_B()[0] - truth.beta_B()[0]) *
                           b_scale);
    out.sigma2.push_back(sqrt_j * (fit.params.sigma()(0, 0) - sigma0_sq) /
                         (M_SQRT2 * sigma0_sq));
  }
  out.ks_beta_A = ks_distance_normal(out.beta_A);
  if (!out.beta_B.empty()) out.ks_beta_B = ks_distance_normal(out.beta_B);
  out.ks_sigma2 = ks_distance_normal(out.sigma2);
  return out;
}

MatrixXd lambda_a(const MemParams& params) { return params.sigma(); }

MatrixXd lambda_c(const MatrixXd& sigma) {
  const int p = static_cast<int>(sigma.rows());
  if (sigma.cols() != p) throw std::invalid_argument("lambda_c: square matrix");
  Eigen::LLT<MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success)
    throw std::invalid_argument("lambda_c: sigma must be positive definite");
  const MatrixXd sigma_inv = llt.solve(MatrixXd::Identity(p, p));
  // (Sigma (x) Sigma)^{-1} = Sigma^{-1} (x) Sigma^{-1}.
  MatrixXd kron(p * p, p * p);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j)
      kron.block(i * p, j * p, p, p) = sigma_inv(i, j) * sigma_inv;
  const DuplicationMaps maps = duplication_maps(p);
  const MatrixXd inner = maps.m_star * kron * maps.m_star.transpose();
  return 2.0 * inner.llt().solve(MatrixXd::Identity(inner.rows(), inner.rows()));
}

}  // namespace evtmem
