#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "evtmem/core.hpp"
#include "evtmem/rng.hpp"
#include "evtmem/special.hpp"
#include "evtmem/tail.hpp"

namespace evtmem_test {

using namespace evtmem;

inline VectorXd vec1(double x) { return VectorXd::Constant(1, x); }

inline MemParams location_shift(double beta_a, double beta_b, double sigma2) {
  return MemParams(vec1(beta_a), vec1(beta_b),
                   MatrixXd::Constant(1, 1, sigma2));
}

inline MemParams location_shift_no_b(double beta_a, double sigma2) {
  return MemParams(vec1(beta_a), VectorXd(0),
                   MatrixXd::Constant(1, 1, sigma2));
}

// Location-shift dataset from the exact-Pareto design: unit thresholds are
// valid (every y > 1 almost surely) and z | x is exactly exponential with
// mean gamma(u_j, x).
inline ClusteredDataset pareto_dataset(const MemParams& truth, double sigma0,
                                       int J, int n_j, std::uint64_t seed,
                                       CovariateGen gen = CovariateGen::Normal01,
                                       int replication = 0) {
  ClusteredDataset data(1, truth.p_B());
  for (int c = 0; c < J; ++c) {
    Rng rng(seed, static_cast<std::uint64_t>(replication),
            static_cast<std::uint64_t>(c));
    VectorXd u = vec1(sigma0 == 0.0 ? 0.0
                                    : sigma0 * norm_quantile(rng.uniform_open()));
    const auto obs = sample_cluster(TailFamily::pareto(), truth, u, gen, n_j, rng);
    for (const auto& o : obs) data.append("c" + std::to_string(c + 1), o);
  }
  return data;
}

}  // namespace evtmem_test
