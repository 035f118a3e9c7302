#pragma once

#include <string>
#include <vector>

#include "evtmem/core.hpp"

namespace evtmem {

// Exceedances of one cluster, stored column-major so the kernels can stream
// over contiguous arrays. z = log(y / omega) > 0 for every retained row.
struct ClusterExceedances {
  std::string id;
  int n = 0;
  std::vector<double> z;
  std::vector<double> x_A;  // column k occupies [k*n, (k+1)*n)
  std::vector<double> x_B;
  double sum_z = 0.0;
  bool unit_x_A = false;  // p_A == 1 and x_A identically 1: scalar fast path

  const double* x_A_col(int k) const { return x_A.data() + k * n; }
  const double* x_B_col(int k) const { return x_B.data() + k * n; }
};

// Exceedance view of a dataset under a threshold plan. Rebuild whenever the
// plan changes; the likelihood depends on the data only through these (z, x)
// pairs.
class ExceedanceCache {
 public:
  ExceedanceCache(const ClusteredDataset& data, const ThresholdPlan& plan);

  int p_A() const { return p_A_; }
  int p_B() const { return p_B_; }
  std::size_t n_clusters() const { return clusters_.size(); }
  const ClusterExceedances& cluster(std::size_t j) const { return clusters_[j]; }
  std::size_t total_exceedances() const { return total_; }

 private:
  int p_A_, p_B_;
  std::size_t total_;
  std::vector<ClusterExceedances> clusters_;
};

enum class QuadratureMode { AdaptiveGaussHermite, Laplace, DenseGridOracle };

struct QuadratureSpec {
  QuadratureMode mode = QuadratureMode::AdaptiveGaussHermite;
  int nodes_per_dim = 15;
  // Dense-grid oracle controls (p_A = 1 only): half-width in prior standard
  // deviations and number of grid points.
  double grid_halfwidth_sd = 10.0;
  int grid_points = 100001;
};

// log of the Eq.-(8) integrand at u: log phi(u; 0, Sigma) plus the exceedance
// terms sum_i { -a_i - z_i exp(-a_i) }, a_i = (beta_A + u)^T x_Ai + beta_B^T x_Bi.
// Requires Sigma strictly positive definite.
double cluster_integrand_log(const MemParams& params,
                             const ClusterExceedances& cluster,
                             const VectorXd& u);

// Plug-in (no random effect) cluster log-likelihood: the integrand's data part
// at u = 0. This is the degenerate Sigma = 0 limit of the cluster integral.
double cluster_plugin_loglik(const MemParams& params,
                             const ClusterExceedances& cluster);

// Approximate marginal log-likelihood: sum over clusters of the log integral
// of the Eq.-(8) integrand, with the additive constant dropped. Sigma = 0
// (zero factor) takes the degenerate plug-in path; a singular nonzero Sigma
// is an error directing the caller to that path.
double marginal_loglik(const MemParams& params, const ExceedanceCache& cache,
                       const QuadratureSpec& quad);

// Mode and curvature of one cluster's integrand (the adaptive-quadrature
// centering step; also the conditional-mode predictor).
struct ClusterMode {
  VectorXd u_hat;
  MatrixXd neg_hessian;  // Sigma^{-1} + sum_i z_i exp(-a_i) x_Ai x_Ai^T
  double value = 0.0;    // integrand log at u_hat
  double grad_norm = 0.0;
  bool converged = true;
  int iterations = 0;
};

ClusterMode cluster_mode(const MemParams& params,
                         const ClusterExceedances& cluster);

// Unconstrained parameter vector: (beta_A, beta_B, lower factor of Sigma in
// vech order with log diagonal). Shared by the optimizer and the
// finite-difference gradient.
class ParamPacking {
 public:
  ParamPacking(int p_A, int p_B);
  int dim() const { return p_A_ + p_B_ + p_C_; }
  int p_A() const { return p_A_; }
  int p_B() const { return p_B_; }
  int p_C() const { return p_C_; }

  VectorXd pack(const MemParams& params) const;  // error on zero factor diagonal
  MemParams unpack(const VectorXd& theta) const;

 private:
  int p_A_, p_B_, p_C_;
};

// Central finite differences of marginal_loglik over the packed parameter
// vector, step 1e-5 * (1 + |theta_k|) per coordinate.
VectorXd loglik_gradient_fd(const MemParams& params,
                            const ExceedanceCache& cache,
                            const QuadratureSpec& quad);

// Gauss-Hermite rule for weight exp(-x^2): nodes and log-weights.
void gauss_hermite(int n, VectorXd& nodes, VectorXd& log_weights);

}  // namespace evtmem
