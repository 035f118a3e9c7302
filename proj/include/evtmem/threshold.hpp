#pragma once

#include "evtmem/core.hpp"

namespace evtmem {

// Candidate exceedance counts: thresholds are placed at the (k+1)-th largest
// response for k = k_min, k_min+step, ..., k_max.
struct CandidateLadder {
  int k_min = 10;
  int k_max = 20;
  int step = 1;
};

// Per-cluster threshold selection by the goodness-of-fit discrepancy: for
// each candidate k, fit the cluster Hill estimate on the top k exceedances,
// transform them to (0,1) and score the Cramer-von-Mises discrepancy
//   D(k) = (1/k) sum_r (S_(r) - (r-0.5)/k)^2 + 1/(12 k^2);
// the k minimizing D wins, ties toward larger k. The ladder is truncated in
// clusters with fewer than k_max + 1 observations. Candidates whose threshold
// value is tied (so strict exceedance would not give exactly k points) are
// skipped; a cluster with no valid candidate is an error.
ThresholdPlan select_thresholds(const ClusteredDataset& data,
                                const CandidateLadder& ladder);

// The discrepancy score itself, exposed for diagnostics.
double cvm_discrepancy(const std::vector<double>& s_sorted);

}  // namespace evtmem
