#pragma once

#include <Eigen/Core>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace evtmem {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Malformed external input (CSV, config, report). CLI maps this to exit 2;
// precondition violations (std::invalid_argument) map to exit 3.
struct parse_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// One data point: positive response plus the covariate split into the
// cluster-varying block (A) and the common-slope block (B).
struct Observation {
  double y;
  VectorXd x_A;
  VectorXd x_B;

  Observation(double y_, VectorXd xA, VectorXd xB);
};

// Observations grouped into clusters. Cluster order is ingestion order and is
// preserved; ids are opaque strings. Storage is columnar per cluster so the
// hot loops can run over contiguous arrays.
class ClusteredDataset {
 public:
  ClusteredDataset(int p_A, int p_B);

  void append(const std::string& cluster_id, const Observation& obs);

  int p_A() const { return p_A_; }
  int p_B() const { return p_B_; }
  std::size_t n_clusters() const { return ids_.size(); }
  std::size_t total_observations() const;

  const std::string& cluster_id(std::size_t j) const { return ids_[j]; }
  std::size_t cluster_size(std::size_t j) const { return y_[j].size(); }
  double y(std::size_t j, std::size_t i) const { return y_[j][i]; }
  const std::vector<double>& y_column(std::size_t j) const { return y_[j]; }
  // Row views into the covariate blocks of observation i in cluster j.
  Eigen::Map<const VectorXd> x_A(std::size_t j, std::size_t i) const;
  Eigen::Map<const VectorXd> x_B(std::size_t j, std::size_t i) const;

  bool has_cluster(const std::string& id) const {
    return index_.count(id) != 0;
  }
  std::size_t cluster_index(const std::string& id) const;

  // First J clusters, in order (the simulation protocol reuses one master
  // dataset across grid cells by truncation).
  ClusteredDataset subset_clusters(std::size_t J) const;
  // Per-cluster row split into first-half / second-half datasets.
  std::pair<ClusteredDataset, ClusteredDataset> split_half() const;

 private:
  int p_A_, p_B_;
  std::vector<std::string> ids_;
  std::vector<std::vector<double>> y_;
  std::vector<std::vector<double>> xA_;  // row-major, stride p_A_
  std::vector<std::vector<double>> xB_;  // row-major, stride p_B_
  std::unordered_map<std::string, std::size_t> index_;
};

// Fixed effects plus the random-effect covariance, stored through its
// lower-triangular square-root factor so Sigma = L L^T is positive
// semi-definite by construction and the boundary Sigma = 0 is representable.
class MemParams {
 public:
  // Builds the factor from a symmetric PSD matrix (asymmetry or a negative
  // eigenvalue beyond tolerance is an error).
  MemParams(VectorXd beta_A, VectorXd beta_B, const MatrixXd& sigma);

  static MemParams from_factor(VectorXd beta_A, VectorXd beta_B,
                               MatrixXd lower_factor);

  const VectorXd& beta_A() const { return beta_A_; }
  const VectorXd& beta_B() const { return beta_B_; }
  const MatrixXd& sigma_factor() const { return factor_; }
  MatrixXd sigma() const { return factor_ * factor_.transpose(); }

  int p_A() const { return static_cast<int>(beta_A_.size()); }
  int p_B() const { return static_cast<int>(beta_B_.size()); }

  bool sigma_is_zero() const;

 private:
  MemParams() = default;
  VectorXd beta_A_, beta_B_;
  MatrixXd factor_;
};

// Per-cluster thresholds with the strict-exceedance counts they induce.
// Construction is tied to a dataset; n_j0 and n_0 satisfy the definitions
// exactly for the dataset they were built from.
class ThresholdPlan {
 public:
  ThresholdPlan(std::vector<std::string> ids, std::vector<double> omega,
                std::vector<int> n_j0);

  std::size_t n_clusters() const { return ids_.size(); }
  const std::string& cluster_id(std::size_t j) const { return ids_[j]; }
  double omega(std::size_t j) const { return omega_[j]; }
  int n_j0(std::size_t j) const { return n_j0_[j]; }
  double n_0() const { return n_0_; }

  double omega_for(const std::string& id) const;
  bool has_cluster(const std::string& id) const {
    return index_.count(id) != 0;
  }

 private:
  std::vector<std::string> ids_;
  std::vector<double> omega_;
  std::vector<int> n_j0_;
  double n_0_;
  std::unordered_map<std::string, std::size_t> index_;
};

// 0/1 duplication matrix M with M vech(A) = vec(A) for symmetric A, and its
// Moore-Penrose inverse M_* = (M^T M)^{-1} M^T.
struct DuplicationMaps {
  MatrixXd m;       // p_A^2 x p_C
  MatrixXd m_star;  // p_C x p_A^2
};

// gamma(u, x) = exp[(beta_A + u)^T x_A + beta_B^T x_B]; always positive.
double evi(const MemParams& params, const VectorXd& u, const VectorXd& x_A,
           const VectorXd& x_B);
double log_evi(const MemParams& params, const VectorXd& u, const VectorXd& x_A,
               const VectorXd& x_B);

// Half-vectorization: stacks the lower-triangular columns of a symmetric
// matrix. unvech is its inverse; duplication_maps builds M and M_*.
VectorXd vech(const MatrixXd& a);
MatrixXd unvech(const VectorXd& v, int d);
DuplicationMaps duplication_maps(int p_A);

// Counts strict exceedances y > omega_j per cluster and averages them.
ThresholdPlan effective_counts(
    const ClusteredDataset& data,
    const std::unordered_map<std::string, double>& omega);
// Same threshold for every cluster.
ThresholdPlan effective_counts(const ClusteredDataset& data, double omega);

}  // namespace evtmem
