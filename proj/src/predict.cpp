#include "evtmem/predict.hpp"

#include <stdexcept>

#include "evtmem/parallel.hpp"

namespace evtmem {

const VectorXd& RandomEffectPredictions::for_cluster(
    const std::string& id) const {
  for (std::size_t j = 0; j < ids.size(); ++j)
    if (ids[j] == id) return u_tilde[j];
  throw std::invalid_argument("predictions: unknown cluster '" + id + "'");
}

RandomEffectPredictions predict_u(const FitResult& fit,
                                  const ExceedanceCache& cache) {
  const std::size_t J = cache.n_clusters();
  const int p_A = fit.params.p_A();
  RandomEffectPredictions out;
  out.ids.resize(J);
  out.u_tilde.assign(J, VectorXd::Zero(p_A));
  out.inner_converged.assign(J, true);
  for (std::size_t j = 0; j < J; ++j) out.ids[j] = cache.cluster(j).id;

  if (fit.params.sigma_is_zero()) return out;

  std::vector<char> converged(J, 1);
  parallel_for(J, [&](std::size_t j) {
    const ClusterExceedances& c = cache.cluster(j);
    if (c.n == 0) return;  // prior mode
    const ClusterMode mode = cluster_mode(fit.params, c);
    out.u_tilde[j] = mode.u_hat;
    converged[j] = mode.converged ? 1 : 0;
  });
  for (std::size_t j = 0; j < J; ++j) out.inner_converged[j] = converged[j] != 0;
  return out;
}

}  // namespace evtmem
