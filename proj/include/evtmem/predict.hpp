#pragma once

#include <string>
#include <vector>

#include "evtmem/estimate.hpp"
#include "evtmem/likelihood.hpp"

namespace evtmem {

// Conditional-mode predictions of the random effects, one vector per cluster
// in dataset order. Clusters with no exceedances predict exactly zero.
struct RandomEffectPredictions {
  std::vector<std::string> ids;
  std::vector<VectorXd> u_tilde;
  std::vector<bool> inner_converged;

  std::size_t size() const { return ids.size(); }
  const VectorXd& for_cluster(const std::string& id) const;
};

// Maximizes phi(u; 0, Sigma-hat) times the exceedance density product with
// the fitted parameters plugged in, via the same safeguarded Newton used for
// quadrature centering. With Sigma-hat = 0 every prediction is zero (the
// degenerate-prior limit).
RandomEffectPredictions predict_u(const FitResult& fit,
                                  const ExceedanceCache& cache);

}  // namespace evtmem
