#include "evtmem/compare.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

#include "evtmem/predict.hpp"
#include "evtmem/special.hpp"

namespace evtmem {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Per-model cluster EVI on one dataset (its own threshold selection).
struct HalfEvi {
  std::vector<std::string> ids;
  std::array<std::map<std::string, double>, 4> evi;
  std::array<bool, 4> available{};
  std::string m1_error, m2_error;
};

HalfEvi evi_on(const ClusteredDataset& data, const CandidateLadder& ladder,
               const QuadratureSpec& quad, const OptimizerSpec& opt) {
  HalfEvi out;
  const ThresholdPlan plan = select_thresholds(data, ladder);
  for (std::size_t j = 0; j < data.n_clusters(); ++j)
    out.ids.push_back(data.cluster_id(j));

  // M1: proposed mixed-effects model.
  try {
    const FitResult fit = fit_mem(data, plan, quad, opt);
    const ExceedanceCache cache(data, plan);
    const auto preds = predict_u(fit, cache);
    const ClusterEvi ce = cluster_evi(fit, preds, data, plan);
    for (std::size_t k = 0; k < ce.ids.size(); ++k)
      out.evi[0][ce.ids[k]] = ce.gamma_star[k];
    out.available[0] = true;
  } catch (const std::exception& e) {
    out.m1_error = e.what();
  }

  // M2: without common slopes.
  try {
    const FitResult fit = fit_m2(data, plan, quad, opt);
    ClusteredDataset reduced(data.p_A(), 0);
    const VectorXd empty(0);
    for (std::size_t j = 0; j < data.n_clusters(); ++j)
      for (std::size_t i = 0; i < data.cluster_size(j); ++i)
        reduced.append(data.cluster_id(j),
                       Observation(data.y(j, i), data.x_A(j, i), empty));
    const ExceedanceCache cache(reduced, plan);
    const auto preds = predict_u(fit, cache);
    const ClusterEvi ce = cluster_evi(fit, preds, reduced, plan);
    for (std::size_t k = 0; k < ce.ids.size(); ++k)
      out.evi[1][ce.ids[k]] = ce.gamma_star[k];
    out.available[1] = true;
  } catch (const std::exception& e) {
    out.m2_error = e.what();
  }

  // M3: fully parametric.
  try {
    const FixedFitResult fit = fit_fixed(data, plan);
    const auto evi3 = fixed_evi(fit, data, plan);
    for (std::size_t j = 0; j < data.n_clusters(); ++j)
      if (std::isfinite(evi3[j])) out.evi[2][data.cluster_id(j)] = evi3[j];
    out.available[2] = true;
  } catch (const std::exception&) {
  }

  // M4: cluster-wise Hill.
  for (std::size_t j = 0; j < data.n_clusters(); ++j) {
    const int n0 = plan.n_j0(j);
    if (n0 < 1) continue;
    out.evi[3][data.cluster_id(j)] =
        hill_fit(data, j, plan.omega_for(data.cluster_id(j)));
    out.available[3] = true;
  }
  return out;
}

}  // namespace

std::vector<double> fixed_evi(const FixedFitResult& fit,
                              const ClusteredDataset& data,
                              const ThresholdPlan& plan) {
  std::vector<double> out(data.n_clusters(), kNaN);
  for (std::size_t j = 0; j < data.n_clusters(); ++j) {
    if (fit.flagged[j] || fit.beta_jA[j].size() == 0) continue;
    const double omega = plan.omega_for(data.cluster_id(j));
    VectorXd xbar_a = VectorXd::Zero(data.p_A());
    VectorXd xbar_b = VectorXd::Zero(data.p_B());
    int n0 = 0;
    for (std::size_t i = 0; i < data.cluster_size(j); ++i) {
      if (!(data.y(j, i) > omega)) continue;
      ++n0;
      xbar_a += data.x_A(j, i);
      xbar_b += data.x_B(j, i);
    }
    if (n0 == 0) continue;
    xbar_a /= n0;
    xbar_b /= n0;
    out[j] = std::exp(fit.beta_jA[j].dot(xbar_a) + fit.beta_B.dot(xbar_b));
  }
  return out;
}

ModelComparison compare_models(const ClusteredDataset& data,
                               const CandidateLadder& ladder,
                               const QuadratureSpec& quad,
                               const OptimizerSpec& opt) {
  ModelComparison out;
  const HalfEvi full = evi_on(data, ladder, quad, opt);
  out.ids = full.ids;
  out.available = full.available;
  out.m1_error = full.m1_error;
  out.m2_error = full.m2_error;
  for (int m = 0; m < 4; ++m) {
    out.evi[m].assign(out.ids.size(), kNaN);
    for (std::size_t k = 0; k < out.ids.size(); ++k) {
      const auto it = full.evi[m].find(out.ids[k]);
      if (it != full.evi[m].end()) out.evi[m][k] = it->second;
    }
    out.stability[m] = kNaN;
  }

  const auto halves = data.split_half();
  try {
    const HalfEvi h1 = evi_on(halves.first, ladder, quad, opt);
    const HalfEvi h2 = evi_on(halves.second, ladder, quad, opt);
    for (int m = 0; m < 4; ++m) {
      std::vector<double> a, b;
      for (const std::string& id : out.ids) {
        const auto i1 = h1.evi[m].find(id);
        const auto i2 = h2.evi[m].find(id);
        if (i1 != h1.evi[m].end() && i2 != h2.evi[m].end()) {
          a.push_back(i1->second);
          b.push_back(i2->second);
        }
      }
      if (a.size() >= 3) out.stability[m] = spearman(a, b);
    }
  } catch (const std::exception&) {
    // Halves too small for threshold selection; stability stays NaN.
  }
  return out;
}

}  // namespace evtmem
