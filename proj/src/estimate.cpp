#include "evtmem/estimate.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace evtmem {

namespace {

constexpr double kSigmaFloor = 1e-8;     // eigenvalue floor for boundary report
constexpr double kBoundaryProbe = 1e-3;  // run the boundary refit below this

double safe_loglik(const MemParams& p, const ExceedanceCache& cache,
                   const QuadratureSpec& quad) {
  try {
    return marginal_loglik(p, cache, quad);
  } catch (const std::exception&) {
    return -std::numeric_limits<double>::infinity();
  }
}

}  // namespace

double hill_fit(const std::vector<double>& y, double omega) {
  if (!(omega > 0.0)) throw std::invalid_argument("hill_fit: omega must be positive");
  double sum = 0.0;
  int n = 0;
  for (double v : y)
    if (v > omega) {
      sum += std::log(v / omega);
      ++n;
    }
  if (n == 0) throw std::invalid_argument("hill_fit: no exceedances");
  return sum / n;
}

double hill_fit(const ClusteredDataset& data, std::size_t j, double omega) {
  return hill_fit(data.y_column(j), omega);
}

double pooled_hill(const ExceedanceCache& cache) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t j = 0; j < cache.n_clusters(); ++j) {
    sum += cache.cluster(j).sum_z;
    n += cache.cluster(j).n;
  }
  if (n == 0) throw std::invalid_argument("pooled_hill: no exceedances");
  return sum / static_cast<double>(n);
}

MemParams data_driven_init(const ExceedanceCache& cache) {
  const int p_A = cache.p_A(), p_B = cache.p_B();
  const double gamma_pool = pooled_hill(cache);

  // beta_A: pooled Hill on the components whose x_A column is identically 1.
  VectorXd beta_A = VectorXd::Zero(p_A);
  for (int q = 0; q < p_A; ++q) {
    bool unit = true;
    for (std::size_t j = 0; unit && j < cache.n_clusters(); ++j) {
      const auto& c = cache.cluster(j);
      const double* col = c.x_A_col(q);
      for (int i = 0; i < c.n; ++i)
        if (col[i] != 1.0) {
          unit = false;
          break;
        }
    }
    if (unit) {
      beta_A[q] = std::log(gamma_pool);
      break;
    }
  }

  // beta_B: least squares of log z on x_B (with intercept) over exceedances.
  VectorXd beta_B = VectorXd::Zero(p_B);
  if (p_B > 0) {
    const int d = p_B + 1;
    MatrixXd xtx = MatrixXd::Zero(d, d);
    VectorXd xty = VectorXd::Zero(d);
    VectorXd row(d);
    for (std::size_t j = 0; j < cache.n_clusters(); ++j) {
      const auto& c = cache.cluster(j);
      for (int i = 0; i < c.n; ++i) {
        row[0] = 1.0;
        for (int q = 0; q < p_B; ++q) row[q + 1] = c.x_B_col(q)[i];
        xtx.selfadjointView<Eigen::Lower>().rankUpdate(row);
        xty += row * std::log(c.z[i]);
      }
    }
    xtx = xtx.selfadjointView<Eigen::Lower>();
    const VectorXd sol = xtx.ldlt().solve(xty);
    if (sol.allFinite()) beta_B = sol.tail(p_B);
  }

  MatrixXd sigma = 0.1 * MatrixXd::Identity(p_A, p_A);
  return MemParams(std::move(beta_A), std::move(beta_B), sigma);
}

FitResult fit_mem(const ClusteredDataset& data, const ThresholdPlan& plan,
                  const QuadratureSpec& quad, const OptimizerSpec& opt,
                  const std::optional<MemParams>& init) {
  const ExceedanceCache cache(data, plan);
  const int p_A = data.p_A(), p_B = data.p_B();
  const ParamPacking packing(p_A, p_B);

  const std::size_t min_total = static_cast<std::size_t>(packing.dim()) + 1;
  if (cache.total_exceedances() < min_total)
    throw std::invalid_argument(
        "fit_mem: fewer exceedances than free parameters");
  std::size_t informative = 0;
  for (std::size_t j = 0; j < cache.n_clusters(); ++j)
    if (cache.cluster(j).n >= 1) ++informative;
  if (informative < 2)
    throw std::invalid_argument(
        "fit_mem: need at least 2 clusters with exceedances to estimate sigma");

  const MemParams start = init ? *init : data_driven_init(cache);
  if (start.p_A() != p_A || start.p_B() != p_B)
    throw std::invalid_argument("fit_mem: init dimension mismatch");
  // Surfaces quadrature/dimension precondition violations before the
  // optimizer starts treating every failure as -infinity.
  marginal_loglik(start, cache, quad);

  const auto objective = [&](const VectorXd& theta) {
    return safe_loglik(packing.unpack(theta), cache, quad);
  };
  const OptResult res = maximize(objective, packing.pack(start), opt);
  MemParams fitted = packing.unpack(res.x);
  double loglik = res.f;
  bool boundary = false;

  // Boundary handling: the profile in log sigma flattens near the floor, so a
  // stalled simplex can sit above it while sigma = 0 is the actual maximizer.
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(fitted.sigma());
  const double max_eig = es.eigenvalues().maxCoeff();
  if (max_eig <= kBoundaryProbe) {
    VectorXd beta0(p_A + p_B);
    beta0.head(p_A) = fitted.beta_A();
    beta0.tail(p_B) = fitted.beta_B();
    const auto boundary_objective = [&](const VectorXd& b) {
      const MemParams p = MemParams::from_factor(
          b.head(p_A), b.tail(p_B), MatrixXd::Zero(p_A, p_A));
      return safe_loglik(p, cache, quad);
    };
    const OptResult bres = maximize(boundary_objective, beta0, opt);
    const bool floor_hit = max_eig <= kSigmaFloor;
    if (floor_hit ||
        bres.f >= loglik - opt.f_tol * (1.0 + std::abs(loglik))) {
      fitted = MemParams::from_factor(bres.x.head(p_A), bres.x.tail(p_B),
                                      MatrixXd::Zero(p_A, p_A));
      boundary = true;
      loglik = marginal_loglik(fitted, cache, quad);
    }
  }

  return FitResult{std::move(fitted), loglik,   res.converged,
                   res.iterations,    plan,     quad,
                   boundary};
}

FitResult fit_m2(const ClusteredDataset& data, const ThresholdPlan& plan,
                 const QuadratureSpec& quad, const OptimizerSpec& opt) {
  ClusteredDataset reduced(data.p_A(), 0);
  const VectorXd empty(0);
  for (std::size_t j = 0; j < data.n_clusters(); ++j)
    for (std::size_t i = 0; i < data.cluster_size(j); ++i)
      reduced.append(data.cluster_id(j),
                     Observation(data.y(j, i), data.x_A(j, i), empty));
  return fit_mem(reduced, plan, quad, opt);
}

FixedFitResult fit_fixed(const ClusteredDataset& data,
                         const ThresholdPlan& plan) {
  const ExceedanceCache cache(data, plan);
  const int p_A = data.p_A(), p_B = data.p_B();
  const std::size_t J = cache.n_clusters();

  FixedFitResult out;
  out.flagged.assign(J, false);
  out.beta_jA.assign(J, VectorXd());
  std::vector<std::size_t> active;
  for (std::size_t j = 0; j < J; ++j) {
    if (cache.cluster(j).n < p_A)
      out.flagged[j] = true;
    else
      active.push_back(j);
  }
  if (active.empty())
    throw std::invalid_argument("fit_fixed: no cluster has enough exceedances");

  // Closed form for the separable intercept-only case.
  bool separable = p_B == 0;
  for (std::size_t j : active)
    if (!cache.cluster(j).unit_x_A) separable = false;
  if (separable) {
    out.beta_B = VectorXd(0);
    out.converged = true;
    double ll = 0.0;
    for (std::size_t j : active) {
      const auto& c = cache.cluster(j);
      const double gamma = c.sum_z / c.n;
      out.beta_jA[j] = VectorXd::Constant(1, std::log(gamma));
      ll += -c.n * std::log(gamma) - c.n;
    }
    out.loglik = ll;
    return out;
  }

  // Newton on the concave plug-in likelihood, block-eliminating the
  // cluster-specific coordinates through the Schur complement on beta_B.
  std::vector<VectorXd> bA(J, VectorXd::Zero(p_A));
  for (std::size_t j : active) {
    const auto& c = cache.cluster(j);
    if (c.unit_x_A) bA[j][0] = std::log(std::max(c.sum_z / c.n, 1e-8));
  }
  VectorXd bB = VectorXd::Zero(p_B);

  const auto loglik_at = [&](const std::vector<VectorXd>& a,
                             const VectorXd& b) {
    double ll = 0.0;
    for (std::size_t j : active) {
      const auto& c = cache.cluster(j);
      for (int i = 0; i < c.n; ++i) {
        double lin = 0.0;
        for (int q = 0; q < p_A; ++q) lin += a[j][q] * c.x_A_col(q)[i];
        for (int q = 0; q < p_B; ++q) lin += b[q] * c.x_B_col(q)[i];
        ll += -lin - c.z[i] * std::exp(-lin);
      }
    }
    return ll;
  };

  double ll = loglik_at(bA, bB);
  bool ok = false;
  int iters = 0;
  for (; iters < 100; ++iters) {
    std::vector<MatrixXd> D(J), C(J);
    std::vector<VectorXd> gA(J);
    MatrixXd B = MatrixXd::Zero(p_B, p_B);
    VectorXd gB = VectorXd::Zero(p_B);
    double gnorm = 0.0;
    for (std::size_t j : active) {
      const auto& c = cache.cluster(j);
      D[j] = MatrixXd::Zero(p_A, p_A);
      C[j] = MatrixXd::Zero(p_A, p_B);
      gA[j] = VectorXd::Zero(p_A);
      for (int i = 0; i < c.n; ++i) {
        double lin = 0.0;
        for (int q = 0; q < p_A; ++q) lin += bA[j][q] * c.x_A_col(q)[i];
        for (int q = 0; q < p_B; ++q) lin += bB[q] * c.x_B_col(q)[i];
        const double ez = c.z[i] * std::exp(-lin);
        for (int q = 0; q < p_A; ++q) {
          const double xq = c.x_A_col(q)[i];
          gA[j][q] += (ez - 1.0) * xq;
          for (int r = 0; r < p_A; ++r) D[j](q, r) += ez * xq * c.x_A_col(r)[i];
          for (int r = 0; r < p_B; ++r) C[j](q, r) += ez * xq * c.x_B_col(r)[i];
        }
        for (int q = 0; q < p_B; ++q) {
          const double xq = c.x_B_col(q)[i];
          gB[q] += (ez - 1.0) * xq;
          for (int r = 0; r <= q; ++r) B(q, r) += ez * xq * c.x_B_col(r)[i];
        }
      }
      gnorm = std::max(gnorm, gA[j].lpNorm<Eigen::Infinity>());
    }
    B = B.selfadjointView<Eigen::Lower>();
    gnorm = std::max(gnorm, gB.lpNorm<Eigen::Infinity>());
    if (gnorm <= 1e-10 * (1.0 + std::abs(ll))) {
      ok = true;
      break;
    }

    MatrixXd S = B;
    VectorXd rhs = gB;
    std::vector<Eigen::LDLT<MatrixXd>> Dsolve(J);
    bool singular = false;
    for (std::size_t j : active) {
      Dsolve[j].compute(D[j]);
      if (Dsolve[j].info() != Eigen::Success) {
        singular = true;
        break;
      }
      S -= C[j].transpose() * Dsolve[j].solve(C[j]);
      rhs -= C[j].transpose() * Dsolve[j].solve(gA[j]);
    }
    if (singular) break;
    VectorXd dB = p_B > 0 ? VectorXd(S.ldlt().solve(rhs)) : VectorXd(0);
    if (!dB.allFinite()) break;

    // Backtracking on the joint step.
    double t = 1.0;
    bool improved = false;
    for (int ls = 0; ls < 50; ++ls) {
      std::vector<VectorXd> a_new = bA;
      const VectorXd b_new = bB + t * dB;
      for (std::size_t j : active)
        a_new[j] = bA[j] + t * Dsolve[j].solve(gA[j] - C[j] * dB);
      const double ll_new = loglik_at(a_new, b_new);
      if (ll_new > ll) {
        bA = std::move(a_new);
        bB = b_new;
        ll = ll_new;
        improved = true;
        break;
      }
      t *= 0.5;
    }
    if (!improved) break;
  }

  for (std::size_t j : active) out.beta_jA[j] = bA[j];
  out.beta_B = bB;
  out.loglik = ll;
  out.converged = ok;
  out.iterations = iters;
  return out;
}

}  // namespace evtmem
