#pragma once

#include <cstdint>
#include <vector>

#include "evtmem/core.hpp"
#include "evtmem/rng.hpp"

namespace evtmem {

enum class TailKind { Pareto, StudentT, Burr };

// Conditional response family given the EVI gamma. eta and lambda are the
// Burr scale and shape; ignored for the other kinds.
struct TailFamily {
  TailKind kind = TailKind::Pareto;
  double eta = 1.0;
  double lambda = 1.0;

  static TailFamily pareto() { return {TailKind::Pareto, 1.0, 1.0}; }
  static TailFamily student_t() { return {TailKind::StudentT, 1.0, 1.0}; }
  static TailFamily burr(double eta = 1.0, double lambda = 1.0);
};

enum class CovariateGen { Normal01, UniformSqrt3 };

// Conditional cdf given gamma:
//   Pareto:   1 - y^{-1/gamma},                 y >= 1
//   StudentT: t cdf with nu = 1/gamma dof (non-integer nu supported)
//   Burr:     1 - (eta / (eta + y^{1/gamma}))^lambda,  y >= 0
double tail_cdf(const TailFamily& family, double gamma, double y);

// Inverse of tail_cdf on (0, 1). Pareto and Burr are closed-form; Student-t
// uses a bisection+Newton hybrid with |tail_cdf(q) - p| <= 1e-10.
double tail_quantile(const TailFamily& family, double gamma, double p);

// One cluster of the simulation designs: x_A is the all-ones vector, x_B
// i.i.d. from the chosen zero-mean unit-variance law, and y drawn by the
// quantile transform at gamma = evi(params, u_j, x). Families whose support
// extends to y <= 0 (Student-t) are conditioned on Y > 0 so the response
// stays in the model's support; this leaves every conditional law above a
// positive threshold unchanged.
std::vector<Observation> sample_cluster(const TailFamily& family,
                                        const MemParams& params,
                                        const VectorXd& u_j,
                                        CovariateGen covariate_gen, int n_j,
                                        Rng& rng);
// Convenience overload with a fresh stream from the seed.
std::vector<Observation> sample_cluster(const TailFamily& family,
                                        const MemParams& params,
                                        const VectorXd& u_j,
                                        CovariateGen covariate_gen, int n_j,
                                        std::uint64_t rng_seed);

}  // namespace evtmem
