#include "evtmem/threshold.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "evtmem/parallel.hpp"

namespace evtmem {

double cvm_discrepancy(const std::vector<double>& s_sorted) {
  const std::size_t k = s_sorted.size();
  if (k == 0) throw std::invalid_argument("cvm_discrepancy: empty sample");
  double sum = 0.0;
  for (std::size_t r = 0; r < k; ++r) {
    const double d = s_sorted[r] - (static_cast<double>(r) + 0.5) / k;
    sum += d * d;
  }
  const double kk = static_cast<double>(k);
  return sum / kk + 1.0 / (12.0 * kk * kk);
}

namespace {

struct Selection {
  double omega = 0.0;
  int k = 0;
  bool valid = false;
};

Selection select_one(const std::vector<double>& y, const CandidateLadder& lad) {
  const int n = static_cast<int>(y.size());
  const int k_hi = std::min(lad.k_max, n - 1);
  const int k_lo = std::min(lad.k_min, k_hi);
  Selection best;
  if (k_hi < 2) return best;

  std::vector<double> sorted(y);
  std::sort(sorted.begin(), sorted.end(), std::greater<double>());

  std::vector<double> s(k_hi);
  double best_d = 0.0;
  for (int k = k_lo; k <= k_hi; k += lad.step) {
    const double omega = sorted[k];  // (k+1)-th largest
    if (!(omega > 0.0)) continue;
    if (sorted[k - 1] == omega) continue;  // tie: strict count != k
    double gamma = 0.0;
    for (int r = 0; r < k; ++r) gamma += std::log(sorted[r] / omega);
    gamma /= k;
    // sorted[] is descending in y, so S = exp(-z/gamma) comes out ascending.
    for (int r = 0; r < k; ++r)
      s[r] = std::exp(-std::log(sorted[r] / omega) / gamma);
    double disc = 0.0;
    for (int r = 0; r < k; ++r) {
      const double d = s[r] - (r + 0.5) / k;
      disc += d * d;
    }
    disc = disc / k + 1.0 / (12.0 * static_cast<double>(k) * k);
    if (!best.valid || disc <= best_d) {
      best_d = disc;
      best.omega = omega;
      best.k = k;
      best.valid = true;
    }
  }
  return best;
}

}  // namespace

ThresholdPlan select_thresholds(const ClusteredDataset& data,
                                const CandidateLadder& ladder) {
  if (ladder.k_min < 2 || ladder.k_max < ladder.k_min || ladder.step < 1)
    throw std::invalid_argument(
        "select_thresholds: need 2 <= k_min <= k_max and step >= 1");
  const std::size_t J = data.n_clusters();
  std::vector<Selection> picks(J);
  parallel_for(J, [&](std::size_t j) {
    picks[j] = select_one(data.y_column(j), ladder);
  });

  std::vector<std::string> ids;
  std::vector<double> omega;
  std::vector<int> counts;
  for (std::size_t j = 0; j < J; ++j) {
    if (!picks[j].valid)
      throw std::runtime_error("select_thresholds: all candidates degenerate in cluster '" +
                               data.cluster_id(j) + "'");
    ids.push_back(data.cluster_id(j));
    omega.push_back(picks[j].omega);
    counts.push_back(picks[j].k);
  }
  return ThresholdPlan(std::move(ids), std::move(omega), std::move(counts));
}

}  // namespace evtmem
