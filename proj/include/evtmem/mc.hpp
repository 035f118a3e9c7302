#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "evtmem/core.hpp"
#include "evtmem/estimate.hpp"
#include "evtmem/tail.hpp"
#include "evtmem/threshold.hpp"

namespace evtmem {

enum class ThresholdingMode {
  FixedUnit,  // omega_j = 1 for every cluster (exact-Pareto design)
  Ladder      // per-cluster discrepancy selection over top k_min..T
};

// One simulation study over a grid of (J, n_j0) or (J, T) cells. The
// location-shift truth is (beta_A0, beta_B0, sigma0_sq). In Ladder mode one
// master dataset of max-J clusters with n_j rows each is generated per
// replication and reused across the grid by cluster truncation and threshold
// re-selection.
struct ExperimentSpec {
  TailFamily family = TailFamily::pareto();
  CovariateGen covariate_gen = CovariateGen::Normal01;
  double beta_A0 = -0.5;
  VectorXd beta_B0 = VectorXd::Constant(1, 0.2);
  double sigma0_sq = 0.2;
  ThresholdingMode thresholding = ThresholdingMode::FixedUnit;
  std::vector<std::pair<int, int>> cells;  // (J, n_j0) fixed / (J, T) ladder
  int n_j = 1000;
  int k_min = 10;
  int replications = 500;
  std::uint64_t seed = 1;
  QuadratureSpec quad{};
  OptimizerSpec opt{};

  MemParams truth() const;
};

struct ParamStats {
  double bias = 0.0;
  double variance = 0.0;  // population form so bias^2 + variance = mse
  double mse = 0.0;
  bool variance_defined = true;  // false (NaN variance) with one replication
};

struct McCell {
  int J = 0;
  int n_or_t = 0;
  double mean_n0 = 0.0;
  ParamStats beta_A, beta_B, sigma2;
  double ks_beta_A = 0.0, ks_beta_B = 0.0, ks_sigma2 = 0.0;
  int boundary_count = 0;
  int n_converged = 0;
  int n_excluded = 0;
  std::vector<double> std_beta_A, std_beta_B, std_sigma2;
  std::vector<double> est_beta_A, est_beta_B, est_sigma2;
};

struct McSummary {
  std::vector<McCell> cells;
  int replications = 0;
};

McSummary run_experiment(const ExperimentSpec& spec);

// Normal QQ plotting pairs: (N(0,1) quantile at (r-1/2)/n, sorted sample).
std::vector<std::pair<double, double>> qq_export(std::vector<double> sample);

// Deterministic dataset generation used by the harness: cluster c of
// replication r draws its random effect and all observations from the
// (seed, r, c) stream.
ClusteredDataset generate_dataset(const ExperimentSpec& spec, int J,
                                  int n_per_cluster, int replication);

// Flat key=value config (lists comma-separated). Unknown keys are returned
// untouched for the caller; malformed input raises parse_error.
std::map<std::string, std::string> parse_kv_config(const std::string& text);
ExperimentSpec experiment_from_kv(const std::map<std::string, std::string>& kv);

// One row per (design, J, T, parameter, statistic).
void write_summary_csv(std::ostream& os, const McSummary& summary,
                       const ExperimentSpec& spec);
void write_qq_csv(std::ostream& os, const std::vector<std::pair<double, double>>& pairs);

}  // namespace evtmem
