#include "evtmem/tail.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "evtmem/special.hpp"

namespace evtmem {

TailFamily TailFamily::burr(double eta, double lambda) {
  if (!(eta > 0.0) || !(lambda > 0.0))
    throw std::invalid_argument("TailFamily: eta and lambda must be positive");
  return {TailKind::Burr, eta, lambda};
}

namespace {

double student_t_cdf(double nu, double t) {
  if (t == 0.0) return 0.5;
  const double x = nu / (nu + t * t);
  const double half_tail = 0.5 * reg_inc_beta(0.5 * nu, 0.5, x);
  return t > 0.0 ? 1.0 - half_tail : half_tail;
}

double student_t_log_pdf(double nu, double t) {
  return std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) -
         0.5 * std::log(nu * M_PI) -
         0.5 * (nu + 1.0) * std::log1p(t * t / nu);
}

// Upper-tail constant: 1 - F(t) ~ c_nu * t^{-nu} as t -> infinity.
double student_t_tail_constant(double nu) {
  return std::exp(std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) +
                  (0.5 * nu - 1.0) * std::log(nu) - 0.5 * std::log(M_PI));
}

// Quantile for p in [1/2, 1): bracket by doubling, localize by bisection,
// polish with safeguarded Newton until |F(t) - p| <= 1e-10.
double student_t_upper_quantile(double nu, double p) {
  if (p == 0.5) return 0.0;
  const double tail = 1.0 - p;
  double lo = 0.0, hi;
  if (tail < 0.25) {
    // Tail-constant initial guess; widen until it brackets.
    const double c = student_t_tail_constant(nu);
    double guess = std::pow(c / tail, 1.0 / nu);
    if (!std::isfinite(guess) || guess <= 0.0) guess = 1.0;
    lo = 0.0;
    hi = guess;
    while (student_t_cdf(nu, hi) < p) hi *= 2.0;
  } else {
    hi = 1.0;
    while (student_t_cdf(nu, hi) < p) {
      lo = hi;
      hi *= 2.0;
    }
  }
  double t = 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    const double f = student_t_cdf(nu, t) - p;
    if (std::abs(f) <= 1e-10) return t;
    if (f > 0.0)
      hi = t;
    else
      lo = t;
    const double step = f * std::exp(-student_t_log_pdf(nu, t));
    double t_new = t - step;
    if (!(t_new > lo && t_new < hi)) t_new = 0.5 * (lo + hi);
    if (t_new == t) break;
    t = t_new;
  }
  return t;
}

void check_gamma(double gamma) {
  if (!(gamma > 0.0) || !std::isfinite(gamma))
    throw std::invalid_argument("tail distribution: gamma must be positive");
}

}  // namespace

double tail_cdf(const TailFamily& family, double gamma, double y) {
  check_gamma(gamma);
  switch (family.kind) {
    case TailKind::Pareto:
      return y <= 1.0 ? 0.0 : 1.0 - std::pow(y, -1.0 / gamma);
    case TailKind::StudentT:
      return student_t_cdf(1.0 / gamma, y);
    case TailKind::Burr: {
      if (y <= 0.0) return 0.0;
      const double t = std::pow(y, 1.0 / gamma);
      return 1.0 - std::pow(family.eta / (family.eta + t), family.lambda);
    }
  }
  throw std::logic_error("tail_cdf: unknown family");
}

double tail_quantile(const TailFamily& family, double gamma, double p) {
  check_gamma(gamma);
  if (!(p > 0.0 && p < 1.0))
    throw std::invalid_argument("tail_quantile: p must be in (0,1)");
  switch (family.kind) {
    case TailKind::Pareto:
      return std::pow(1.0 - p, -gamma);
    case TailKind::StudentT: {
      const double nu = 1.0 / gamma;
      return p >= 0.5 ? student_t_upper_quantile(nu, p)
                      : -student_t_upper_quantile(nu, 1.0 - p);
    }
    case TailKind::Burr: {
      const double t = family.eta * (std::pow(1.0 - p, -1.0 / family.lambda) - 1.0);
      return std::pow(t, gamma);
    }
  }
  throw std::logic_error("tail_quantile: unknown family");
}

std::vector<Observation> sample_cluster(const TailFamily& family,
                                        const MemParams& params,
                                        const VectorXd& u_j,
                                        CovariateGen covariate_gen, int n_j,
                                        Rng& rng) {
  if (n_j < 1) throw std::invalid_argument("sample_cluster: n_j must be >= 1");
  if (u_j.size() != params.p_A())
    throw std::invalid_argument("sample_cluster: u dimension mismatch");
  const int p_B = params.p_B();
  const VectorXd x_A = VectorXd::Ones(params.p_A());
  static const double sqrt3 = std::sqrt(3.0);

  std::vector<Observation> out;
  out.reserve(n_j);
  VectorXd x_B(p_B);
  for (int i = 0; i < n_j; ++i) {
    for (int q = 0; q < p_B; ++q) {
      const double v = rng.uniform_open();
      x_B[q] = covariate_gen == CovariateGen::Normal01
                   ? norm_quantile(v)
                   : sqrt3 * (2.0 * v - 1.0);
    }
    const double gamma = evi(params, u_j, x_A, x_B);
    double u = rng.uniform_open();
    // Condition on Y > 0 where the family's support includes zero or below.
    if (family.kind == TailKind::StudentT) u = 0.5 + 0.5 * u;
    out.emplace_back(tail_quantile(family, gamma, u), x_A, x_B);
  }
  return out;
}

std::vector<Observation> sample_cluster(const TailFamily& family,
                                        const MemParams& params,
                                        const VectorXd& u_j,
                                        CovariateGen covariate_gen, int n_j,
                                        std::uint64_t rng_seed) {
  Rng rng(rng_seed);
  return sample_cluster(family, params, u_j, covariate_gen, n_j, rng);
}

}  // namespace evtmem
