#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "evtmem/core.hpp"
#include "evtmem/estimate.hpp"

namespace evtmem {

struct ColumnScaling {
  double mean = 0.0;
  double sd = 1.0;
};

// Parsed input table. Header: cluster,y,roleA:<name>...,roleB:<name>...
// with an implicit unit intercept in the A block when no roleA column is
// declared. Rows with nonpositive y, non-numeric cells, or the wrong field
// count are rejected and their line numbers recorded.
struct IngestResult {
  ClusteredDataset data;
  std::vector<std::string> a_names, b_names;
  bool implicit_intercept = false;
  std::vector<std::size_t> rejected_lines;  // 1-based
  std::string schema_line;
  std::uint64_t schema_hash = 0;
  bool scaling_applied = false;
  std::map<std::string, ColumnScaling> scaling;
};

// standardize: center/scale each declared covariate column to zero mean and
// unit unbiased sample variance (constant columns are left untouched), and
// record the factors. reuse_scaling applies previously recorded factors
// instead (for scoring new data with a fitted model).
IngestResult ingest_csv(std::istream& in, bool standardize = false,
                        const std::map<std::string, ColumnScaling>* reuse_scaling = nullptr);

std::uint64_t fnv1a64(const std::string& s);

// Fit report: the full cmd_fit output, consumed by the downstream commands.
struct FitReport {
  VectorXd beta_A, beta_B;
  MatrixXd sigma;
  double loglik = 0.0;
  std::vector<std::string> cluster_ids;
  std::vector<double> omega;
  std::vector<int> n_j0;
  double n_0 = 0.0;
  bool converged = false;
  bool boundary_sigma = false;
  std::uint64_t schema_hash = 0;
  bool scaling_applied = false;
  std::map<std::string, ColumnScaling> scaling;

  MemParams params() const { return MemParams(beta_A, beta_B, sigma); }
  ThresholdPlan plan() const { return ThresholdPlan(cluster_ids, omega, n_j0); }
};

FitReport make_report(const FitResult& fit, const IngestResult& ingest);
void write_fit_report(std::ostream& os, const FitReport& report);
FitReport read_fit_report(std::istream& in);

}  // namespace evtmem
