#pragma once

#include <array>
#include <string>
#include <vector>

#include "evtmem/estimate.hpp"
#include "evtmem/inference.hpp"
#include "evtmem/threshold.hpp"

namespace evtmem {

// Cluster-wise EVI under the four models, all with exceedance-mean
// covariates: M1 mixed effects, M2 mixed effects without common slopes,
// M3 fully parametric (cluster-specific slopes), M4 cluster-wise Hill.
// Stability is the split-half Spearman correlation of the per-cluster EVI
// (each half re-selects thresholds and refits). Models whose preconditions
// fail on the data (e.g. a single cluster for M1/M2) are marked unavailable.
struct ModelComparison {
  std::vector<std::string> ids;
  // evi[m] aligned with ids; NaN where a model has no estimate for a cluster.
  std::array<std::vector<double>, 4> evi;
  std::array<double, 4> stability{};  // NaN when not computable
  std::array<bool, 4> available{};
  std::string m1_error, m2_error;
};

ModelComparison compare_models(const ClusteredDataset& data,
                               const CandidateLadder& ladder,
                               const QuadratureSpec& quad,
                               const OptimizerSpec& opt);

// EVI of the fully parametric model per cluster (NaN for flagged clusters).
std::vector<double> fixed_evi(const FixedFitResult& fit,
                              const ClusteredDataset& data,
                              const ThresholdPlan& plan);

}  // namespace evtmem
