#include "evtmem/likelihood.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <stdexcept>

#include "evtmem/kernels.hpp"
#include "evtmem/parallel.hpp"

namespace evtmem {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kLog2Pi = 1.8378770664093454836;

thread_local struct Scratch {
  std::vector<double> a, e, v, u;
} g_scratch;

// Cholesky context of the random-effect covariance, shared across clusters
// within one likelihood evaluation. The scalar case avoids Eigen entirely:
// it sits on the optimizer's and the grid oracle's innermost path.
struct SigmaContext {
  bool zero = false;
  int p = 0;
  MatrixXd sigma_inv;
  double log_norm = 0.0;  // log phi(0; 0, Sigma)
  double sigma11 = 0.0;   // scalar case

  explicit SigmaContext(const MemParams& params) {
    p = params.p_A();
    if (params.sigma_is_zero()) {
      zero = true;
      return;
    }
    if (p == 1) {
      const double l = params.sigma_factor()(0, 0);
      sigma11 = l * l;
      if (!(sigma11 > 0.0) || !std::isfinite(sigma11))
        throw std::invalid_argument(
            "marginal_loglik: singular sigma; use the degenerate sigma = 0 path");
      log_norm = -0.5 * (kLog2Pi + 2.0 * std::log(l));
      sigma_inv = MatrixXd::Constant(1, 1, 1.0 / sigma11);
      return;
    }
    const MatrixXd sigma = params.sigma();
    Eigen::LLT<MatrixXd> llt(sigma);
    if (llt.info() != Eigen::Success || !sigma.allFinite())
      throw std::invalid_argument(
          "marginal_loglik: singular sigma; use the degenerate sigma = 0 path");
    const MatrixXd chol_lower = llt.matrixL();
    double log_det = 0.0;
    for (int i = 0; i < p; ++i) {
      const double d = chol_lower(i, i);
      if (!(d > 0.0) || !std::isfinite(d))
        throw std::invalid_argument(
            "marginal_loglik: singular sigma; use the degenerate sigma = 0 path");
      log_det += 2.0 * std::log(d);
    }
    sigma_inv = llt.solve(MatrixXd::Identity(p, p));
    log_norm = -0.5 * (p * kLog2Pi + log_det);
    sigma11 = sigma(0, 0);
  }
};

struct GhRule {
  std::vector<double> nodes;
  std::vector<double> log_weights;
};

const GhRule& gh_rule(int n);

// Linear predictor at u = 0 for one cluster: a_i = beta_A^T x_Ai + beta_B^T x_Bi.
void build_base(const MemParams& params, const ClusterExceedances& c,
                std::vector<double>& a) {
  const auto& k = active_kernels();
  a.assign(c.n, 0.0);
  if (c.unit_x_A) {
    std::fill(a.begin(), a.end(), params.beta_A()[0]);
  } else {
    for (int q = 0; q < params.p_A(); ++q)
      k.axpy(params.beta_A()[q], c.x_A_col(q), a.data(), c.n);
  }
  for (int q = 0; q < params.p_B(); ++q)
    k.axpy(params.beta_B()[q], c.x_B_col(q), a.data(), c.n);
}

// Location-shift per-cluster summary: data(u) = -S0 - n*u - W0*exp(-u).
struct FastSummary {
  double s0 = 0.0;  // sum_i a_i(0)
  double w0 = 0.0;  // sum_i z_i exp(-a_i(0))
};

FastSummary fast_summary(const MemParams& params, const ClusterExceedances& c) {
  if (c.n == 0) return {};
  const double beta = params.beta_A()[0];
  if (params.p_B() == 0)
    return {beta * c.n, std::exp(-beta) * c.sum_z};
  auto& a = g_scratch.a;
  build_base(params, c, a);
  const PotSums s = active_kernels().pot_sums(a.data(), c.z.data(), c.n);
  return {s.sum_a, s.sum_exp_z};
}

// Scalar Newton for the location-shift mode: maximize
// q(u) = -n*u - w0*exp(-u) - u^2/(2*sigma2). Strictly concave.
struct FastMode {
  double u_hat = 0.0;
  double neg_hess = 0.0;  // 1/sigma2 + w0*exp(-u_hat)
  bool converged = true;
  int iterations = 0;
};

FastMode fast_mode(double n, double w0, double sigma2) {
  FastMode m;
  const double inv_s2 = 1.0 / sigma2;
  double u = 0.0, eu = 1.0;  // eu = exp(-u)
  double q = -w0;            // q(0)
  double g = -n + w0 - 0.0;
  for (int it = 0; it < 100; ++it) {
    const double we = w0 * eu;
    g = -n + we - u * inv_s2;
    const double h = we + inv_s2;
    m.iterations = it;
    if (std::abs(g) <= 1e-9) break;
    double step = g / h;
    if (!std::isfinite(step)) step = g > 0 ? 1.0 : -1.0;
    step = std::clamp(step, -5.0, 5.0);
    if (std::abs(step) <= 4e-16 * (1.0 + std::abs(u))) break;
    bool accepted = false;
    for (int ls = 0; ls < 40; ++ls) {
      const double u_new = u + step;
      const double eu_new = std::exp(-u_new);
      const double q_new =
          -n * u_new - w0 * eu_new - 0.5 * u_new * u_new * inv_s2;
      if (q_new >= q && u_new != u) {
        u = u_new;
        eu = eu_new;
        q = q_new;
        accepted = true;
        break;
      }
      step *= 0.5;
      if (std::abs(step) <= 4e-16 * (1.0 + std::abs(u))) break;
    }
    if (!accepted) break;  // at the representable optimum
  }
  m.u_hat = u;
  m.neg_hess = w0 * eu + inv_s2;
  m.converged = std::abs(g) <= 1e-8 ||
                std::abs(g / m.neg_hess) <= 4e-16 * (1.0 + std::abs(u));
  return m;
}

// Generic-path data terms and derivatives at a given u.
struct DataDerivs {
  double value = 0.0;  // sum_i (-a_i - z_i exp(-a_i))
  VectorXd grad;       // sum_i (z_i exp(-a_i) - 1) x_Ai
  MatrixXd curv;       // sum_i z_i exp(-a_i) x_Ai x_Ai^T
};

void generic_data_at(const MemParams& params, const ClusterExceedances& c,
                     const VectorXd& u, bool derivs, DataDerivs& out) {
  const auto& k = active_kernels();
  const int pa = params.p_A();
  auto& a = g_scratch.a;
  build_base(params, c, a);
  if (c.unit_x_A) {
    for (auto& ai : a) ai += u[0];
  } else {
    for (int q = 0; q < pa; ++q) k.axpy(u[q], c.x_A_col(q), a.data(), c.n);
  }
  auto& e = g_scratch.e;
  e.resize(c.n);
  k.exp_neg(a.data(), e.data(), c.n);
  double value = 0.0;
  out.grad = VectorXd::Zero(pa);
  out.curv = MatrixXd::Zero(pa, pa);
  for (int i = 0; i < c.n; ++i) {
    const double ez = c.z[i] * e[i];
    value -= a[i] + ez;
    if (derivs) {
      if (c.unit_x_A) {
        out.grad[0] += ez - 1.0;
        out.curv(0, 0) += ez;
      } else {
        for (int q = 0; q < pa; ++q) {
          const double xq = c.x_A_col(q)[i];
          out.grad[q] += (ez - 1.0) * xq;
          for (int r = 0; r <= q; ++r)
            out.curv(q, r) += ez * xq * c.x_A_col(r)[i];
        }
      }
    }
  }
  if (derivs && !c.unit_x_A)
    out.curv = out.curv.selfadjointView<Eigen::Lower>();
  out.value = value;
}

ClusterMode generic_mode(const MemParams& params, const SigmaContext& ctx,
                         const ClusterExceedances& c) {
  const int pa = params.p_A();
  ClusterMode mode;
  mode.u_hat = VectorXd::Zero(pa);
  if (c.n == 0) {
    mode.neg_hessian = ctx.sigma_inv;
    mode.value = ctx.log_norm;
    return mode;
  }
  DataDerivs d;
  VectorXd u = VectorXd::Zero(pa);
  generic_data_at(params, c, u, true, d);
  double obj = ctx.log_norm + d.value;  // - 0.5 u' Sinv u is 0 at u = 0
  bool ok = false;
  int it = 0;
  for (; it < 100; ++it) {
    const VectorXd grad = d.grad - ctx.sigma_inv * u;
    const MatrixXd neg_h = ctx.sigma_inv + d.curv;
    mode.grad_norm = grad.lpNorm<Eigen::Infinity>();
    if (mode.grad_norm <= 1e-9) {
      ok = true;
      break;
    }
    VectorXd step = neg_h.ldlt().solve(grad);
    if (!step.allFinite()) step = grad / std::max(1.0, grad.norm());
    const double max_step = step.lpNorm<Eigen::Infinity>();
    if (max_step > 5.0) step *= 5.0 / max_step;
    const double u_scale = 1.0 + u.lpNorm<Eigen::Infinity>();
    if (step.lpNorm<Eigen::Infinity>() <= 4e-16 * u_scale) {
      ok = true;  // at the representable optimum
      break;
    }
    bool improved = false;
    for (int ls = 0; ls < 40; ++ls) {
      const VectorXd u_new = u + step;
      generic_data_at(params, c, u_new, true, d);
      const double obj_new =
          ctx.log_norm + d.value - 0.5 * u_new.dot(ctx.sigma_inv * u_new);
      if (obj_new >= obj && u_new != u) {
        u = u_new;
        obj = obj_new;
        improved = true;
        break;
      }
      step *= 0.5;
      if (step.lpNorm<Eigen::Infinity>() <= 4e-16 * u_scale) break;
    }
    if (!improved) {
      generic_data_at(params, c, u, true, d);
      ok = mode.grad_norm <= 1e-6;
      break;
    }
  }
  if (!ok) {
    // Bisection along the gradient as a safeguarded fallback.
    for (int r = 0; r < 200 && !ok; ++r) {
      const VectorXd grad = d.grad - ctx.sigma_inv * u;
      mode.grad_norm = grad.lpNorm<Eigen::Infinity>();
      if (mode.grad_norm <= 1e-8) {
        ok = true;
        break;
      }
      double t = 1.0 / std::max(1.0, grad.norm());
      for (int ls = 0; ls < 60; ++ls) {
        const VectorXd u_new = u + t * grad;
        generic_data_at(params, c, u_new, true, d);
        const double obj_new = ctx.log_norm + d.value -
                               0.5 * u_new.dot(ctx.sigma_inv * u_new);
        if (obj_new > obj) {
          u = u_new;
          obj = obj_new;
          break;
        }
        t *= 0.5;
      }
    }
  }
  generic_data_at(params, c, u, true, d);
  const VectorXd grad = d.grad - ctx.sigma_inv * u;
  mode.u_hat = u;
  mode.neg_hessian = ctx.sigma_inv + d.curv;
  mode.value = ctx.log_norm + d.value - 0.5 * u.dot(ctx.sigma_inv * u);
  mode.grad_norm = grad.lpNorm<Eigen::Infinity>();
  mode.converged = ok || mode.grad_norm <= 1e-8;
  mode.iterations = it;
  return mode;
}

double logsumexp(const std::vector<double>& v) {
  double m = kNegInf;
  for (double x : v) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

// Log integral over one cluster by mode-centered, curvature-scaled
// Gauss-Hermite quadrature (tensor product for p_A <= 3).
double agh_cluster_generic(const MemParams& params, const SigmaContext& ctx,
                           const ClusterExceedances& c, int nodes) {
  const int pa = params.p_A();
  const ClusterMode mode = generic_mode(params, ctx, c);
  Eigen::LLT<MatrixXd> llt(mode.neg_hessian);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("marginal_loglik: indefinite curvature at mode");
  const MatrixXd L = llt.matrixL();
  double log_det_l = 0.0;
  for (int i = 0; i < pa; ++i) log_det_l += std::log(L(i, i));

  const GhRule& gh = gh_rule(nodes);
  const auto& x = gh.nodes;
  const auto& logw = gh.log_weights;
  std::vector<int> idx(pa, 0);
  std::vector<double> vals;
  vals.reserve(static_cast<std::size_t>(std::pow(nodes, pa)));
  VectorXd t(pa);
  const auto solve_up = [&](const VectorXd& rhs) -> VectorXd {
    return L.transpose().triangularView<Eigen::Upper>().solve(rhs);
  };
  DataDerivs d;
  for (;;) {
    double lw = 0.0, t2 = 0.0;
    for (int q = 0; q < pa; ++q) {
      t[q] = x[idx[q]];
      lw += logw[idx[q]];
      t2 += t[q] * t[q];
    }
    const VectorXd u = mode.u_hat + M_SQRT2 * solve_up(t);
    generic_data_at(params, c, u, false, d);
    const double g =
        ctx.log_norm + d.value - 0.5 * u.dot(ctx.sigma_inv * u);
    vals.push_back(lw + t2 + g);
    int q = 0;
    for (; q < pa; ++q) {
      if (++idx[q] < nodes) break;
      idx[q] = 0;
    }
    if (q == pa) break;
  }
  return 0.5 * pa * M_LN2 - log_det_l + logsumexp(vals);
}

double agh_cluster_fast(const SigmaContext& ctx, double n_obs,
                        const FastSummary& fs, int nodes) {
  if (!std::isfinite(fs.w0) || !std::isfinite(fs.s0)) return kNegInf;
  const double sigma2 = ctx.sigma11;
  const FastMode mode = fast_mode(n_obs, fs.w0, sigma2);
  const double sqrt_h = std::sqrt(mode.neg_hess);

  const GhRule& gh = gh_rule(nodes);
  auto& u = g_scratch.u;
  auto& e = g_scratch.e;
  auto& v = g_scratch.v;
  u.resize(nodes);
  e.resize(nodes);
  v.resize(nodes);
  const double step = M_SQRT2 / sqrt_h;
  for (int k = 0; k < nodes; ++k) u[k] = mode.u_hat + step * gh.nodes[k];
  active_kernels().exp_neg(u.data(), e.data(), nodes);
  const double inv_2s2 = 0.5 / sigma2;
  for (int k = 0; k < nodes; ++k) {
    const double xk = gh.nodes[k];
    const double g = ctx.log_norm - u[k] * u[k] * inv_2s2 - fs.s0 -
                     n_obs * u[k] - fs.w0 * e[k];
    v[k] = gh.log_weights[k] + xk * xk + g;
  }
  return 0.5 * M_LN2 - std::log(sqrt_h) + logsumexp(v);
}

double laplace_cluster(const MemParams& params, const SigmaContext& ctx,
                       const ClusterExceedances& c) {
  const int pa = params.p_A();
  if (c.unit_x_A || c.n == 0) {
    const FastSummary fs = fast_summary(params, c);
    if (!std::isfinite(fs.w0) || !std::isfinite(fs.s0)) return kNegInf;
    const FastMode mode = fast_mode(c.n, fs.w0, ctx.sigma11);
    const double g = ctx.log_norm - 0.5 * mode.u_hat * mode.u_hat / ctx.sigma11 -
                     fs.s0 - c.n * mode.u_hat - fs.w0 * std::exp(-mode.u_hat);
    return g + 0.5 * kLog2Pi - 0.5 * std::log(mode.neg_hess);
  }
  const ClusterMode mode = generic_mode(params, ctx, c);
  Eigen::LLT<MatrixXd> llt(mode.neg_hessian);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("marginal_loglik: indefinite curvature at mode");
  double log_det = 0.0;
  const MatrixXd L = llt.matrixL();
  for (int i = 0; i < pa; ++i) log_det += 2.0 * std::log(L(i, i));
  return mode.value + 0.5 * pa * kLog2Pi - 0.5 * log_det;
}

double oracle_cluster(const MemParams& params, const SigmaContext& ctx,
                      const ClusterExceedances& c, const QuadratureSpec& quad) {
  // Trapezoid rule on a fixed grid centered at the prior mean; deliberately
  // ignorant of the mode finder so it can serve as its oracle.
  const double sd = std::sqrt(ctx.sigma11);
  const double half = quad.grid_halfwidth_sd * sd;
  const int m = quad.grid_points;
  if (m < 3) throw std::invalid_argument("DenseGridOracle: need >= 3 grid points");
  const double h = 2.0 * half / (m - 1);
  std::vector<double> vals(m);
  VectorXd u(1);
  for (int k = 0; k < m; ++k) {
    u[0] = -half + h * k;
    vals[k] = cluster_integrand_log(params, c, u);
  }
  // log of h * (sum - half the endpoints), evaluated stably.
  double vmax = kNegInf;
  for (double x : vals) vmax = std::max(vmax, x);
  if (!std::isfinite(vmax)) return vmax;
  double s = 0.0;
  for (double x : vals) s += std::exp(x - vmax);
  s -= 0.5 * (std::exp(vals.front() - vmax) + std::exp(vals.back() - vmax));
  return vmax + std::log(h * s);
}

}  // namespace

ExceedanceCache::ExceedanceCache(const ClusteredDataset& data,
                                 const ThresholdPlan& plan)
    : p_A_(data.p_A()), p_B_(data.p_B()), total_(0) {
  clusters_.reserve(data.n_clusters());
  for (std::size_t j = 0; j < data.n_clusters(); ++j) {
    const double omega = plan.omega_for(data.cluster_id(j));
    ClusterExceedances c;
    c.id = data.cluster_id(j);
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < data.cluster_size(j); ++i)
      if (data.y(j, i) > omega) rows.push_back(i);
    c.n = static_cast<int>(rows.size());
    c.z.resize(rows.size());
    c.x_A.resize(rows.size() * p_A_);
    c.x_B.resize(rows.size() * p_B_);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      c.z[r] = std::log(data.y(j, rows[r]) / omega);
      const auto xa = data.x_A(j, rows[r]);
      for (int q = 0; q < p_A_; ++q) c.x_A[q * c.n + r] = xa[q];
      const auto xb = data.x_B(j, rows[r]);
      for (int q = 0; q < p_B_; ++q) c.x_B[q * c.n + r] = xb[q];
      c.sum_z += c.z[r];
    }
    c.unit_x_A = (p_A_ == 1);
    for (int r = 0; c.unit_x_A && r < c.n; ++r)
      if (c.x_A[r] != 1.0) c.unit_x_A = false;
    total_ += c.n;
    clusters_.push_back(std::move(c));
  }
}

double cluster_integrand_log(const MemParams& params,
                             const ClusterExceedances& cluster,
                             const VectorXd& u) {
  if (u.size() != params.p_A())
    throw std::invalid_argument("cluster_integrand_log: dimension mismatch");
  const SigmaContext ctx(params);
  if (ctx.zero)
    throw std::invalid_argument(
        "cluster_integrand_log: singular sigma; use the degenerate sigma = 0 path");
  const double prior = ctx.log_norm - 0.5 * u.dot(ctx.sigma_inv * u);
  if (cluster.n == 0) return prior;
  DataDerivs d;
  generic_data_at(params, cluster, u, false, d);
  return prior + d.value;
}

double cluster_plugin_loglik(const MemParams& params,
                             const ClusterExceedances& cluster) {
  if (cluster.n == 0) return 0.0;
  const FastSummary fs = fast_summary(params, cluster);
  if (cluster.unit_x_A || params.p_A() == 0) return -fs.s0 - fs.w0;
  DataDerivs d;
  generic_data_at(params, cluster, VectorXd::Zero(params.p_A()), false, d);
  return d.value;
}

ClusterMode cluster_mode(const MemParams& params,
                         const ClusterExceedances& cluster) {
  const SigmaContext ctx(params);
  if (ctx.zero)
    throw std::invalid_argument(
        "cluster_mode: singular sigma; use the degenerate sigma = 0 path");
  if (cluster.unit_x_A || cluster.n == 0) {
    const FastSummary fs = fast_summary(params, cluster);
    const FastMode fm = fast_mode(cluster.n, fs.w0, ctx.sigma11);
    ClusterMode mode;
    mode.u_hat = VectorXd::Constant(1, fm.u_hat);
    mode.neg_hessian = MatrixXd::Constant(1, 1, fm.neg_hess);
    mode.value = ctx.log_norm - 0.5 * fm.u_hat * fm.u_hat / ctx.sigma11 -
                 fs.s0 - cluster.n * fm.u_hat - fs.w0 * std::exp(-fm.u_hat);
    mode.grad_norm = std::abs(-cluster.n + fs.w0 * std::exp(-fm.u_hat) -
                              fm.u_hat / ctx.sigma11);
    mode.converged = fm.converged;
    mode.iterations = fm.iterations;
    return mode;
  }
  return generic_mode(params, ctx, cluster);
}

double marginal_loglik(const MemParams& params, const ExceedanceCache& cache,
                       const QuadratureSpec& quad) {
  if (params.p_A() != cache.p_A() || params.p_B() != cache.p_B())
    throw std::invalid_argument("marginal_loglik: dimension mismatch");
  const std::size_t J = cache.n_clusters();

  if (params.sigma_is_zero()) {
    double total = 0.0;
    for (std::size_t j = 0; j < J; ++j)
      total += cluster_plugin_loglik(params, cache.cluster(j));
    if (std::isnan(total))
      throw std::runtime_error("marginal_loglik: non-finite integrand");
    return total;
  }

  const SigmaContext ctx(params);
  if (quad.mode == QuadratureMode::AdaptiveGaussHermite && params.p_A() > 3)
    throw std::invalid_argument(
        "marginal_loglik: AGH supports p_A <= 3; use Laplace mode");
  if (quad.mode == QuadratureMode::DenseGridOracle && params.p_A() != 1)
    throw std::invalid_argument("marginal_loglik: DenseGridOracle is 1-D only");
  if (quad.nodes_per_dim < 1)
    throw std::invalid_argument("marginal_loglik: nodes_per_dim must be >= 1");

  std::vector<double> per_cluster(J);
  auto eval_one = [&](std::size_t j) {
    const ClusterExceedances& c = cache.cluster(j);
    switch (quad.mode) {
      case QuadratureMode::AdaptiveGaussHermite:
        if (c.unit_x_A || c.n == 0) {
          const FastSummary fs = fast_summary(params, c);
          per_cluster[j] = agh_cluster_fast(ctx, c.n, fs, quad.nodes_per_dim);
        } else {
          per_cluster[j] = agh_cluster_generic(params, ctx, c, quad.nodes_per_dim);
        }
        break;
      case QuadratureMode::Laplace:
        per_cluster[j] = laplace_cluster(params, ctx, c);
        break;
      case QuadratureMode::DenseGridOracle:
        per_cluster[j] = oracle_cluster(params, ctx, c, quad);
        break;
    }
  };
  // Spawning workers only pays off once the per-evaluation work dwarfs the
  // thread start-up cost; small fits run serial and parallelize one level up.
  if (J >= 32 && cache.total_exceedances() >= 20000 && max_threads() > 1 &&
      !detail::in_parallel_region)
    parallel_for(J, eval_one);
  else
    for (std::size_t j = 0; j < J; ++j) eval_one(j);

  double total = 0.0;
  for (std::size_t j = 0; j < J; ++j) total += per_cluster[j];
  if (std::isnan(total))
    throw std::runtime_error("marginal_loglik: non-finite integrand");
  return total;
}

ParamPacking::ParamPacking(int p_A, int p_B)
    : p_A_(p_A), p_B_(p_B), p_C_(p_A * (p_A + 1) / 2) {
  if (p_A < 1 || p_B < 0) throw std::invalid_argument("ParamPacking: bad dims");
}

VectorXd ParamPacking::pack(const MemParams& params) const {
  if (params.p_A() != p_A_ || params.p_B() != p_B_)
    throw std::invalid_argument("ParamPacking: dimension mismatch");
  VectorXd theta(dim());
  theta.head(p_A_) = params.beta_A();
  theta.segment(p_A_, p_B_) = params.beta_B();
  const MatrixXd& L = params.sigma_factor();
  int k = p_A_ + p_B_;
  for (int j = 0; j < p_A_; ++j)
    for (int i = j; i < p_A_; ++i) {
      if (i == j) {
        if (!(L(i, i) > 0.0))
          throw std::invalid_argument(
              "ParamPacking: boundary sigma is not packable");
        theta[k++] = std::log(L(i, i));
      } else {
        theta[k++] = L(i, j);
      }
    }
  return theta;
}

MemParams ParamPacking::unpack(const VectorXd& theta) const {
  if (theta.size() != dim())
    throw std::invalid_argument("ParamPacking: bad vector length");
  MatrixXd L = MatrixXd::Zero(p_A_, p_A_);
  int k = p_A_ + p_B_;
  for (int j = 0; j < p_A_; ++j)
    for (int i = j; i < p_A_; ++i) {
      L(i, j) = (i == j) ? std::exp(theta[k]) : theta[k];
      ++k;
    }
  return MemParams::from_factor(theta.head(p_A_), theta.segment(p_A_, p_B_),
                                std::move(L));
}

VectorXd loglik_gradient_fd(const MemParams& params,
                            const ExceedanceCache& cache,
                            const QuadratureSpec& quad) {
  const ParamPacking packing(params.p_A(), params.p_B());
  const VectorXd theta = packing.pack(params);
  VectorXd grad(packing.dim());
  for (int k = 0; k < packing.dim(); ++k) {
    const double h = 1e-5 * (1.0 + std::abs(theta[k]));
    VectorXd tp = theta, tm = theta;
    tp[k] += h;
    tm[k] -= h;
    const double fp = marginal_loglik(packing.unpack(tp), cache, quad);
    const double fm = marginal_loglik(packing.unpack(tm), cache, quad);
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw std::runtime_error(
          "loglik_gradient_fd: non-finite evaluation near the boundary");
    grad[k] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

namespace {
const GhRule& gh_rule(int n) {
  if (n < 1) throw std::invalid_argument("gauss_hermite: n must be >= 1");
  thread_local int last_n = 0;
  thread_local const GhRule* last_rule = nullptr;
  if (n == last_n) return *last_rule;
  static std::map<int, GhRule> cache;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it == cache.end()) {
    // Golub-Welsch on the Jacobi matrix of the Hermite weight exp(-x^2).
    VectorXd diag = VectorXd::Zero(n);
    VectorXd sub(n > 1 ? n - 1 : 0);
    for (int k = 1; k < n; ++k) sub[k - 1] = std::sqrt(0.5 * k);
    Eigen::SelfAdjointEigenSolver<MatrixXd> es;
    es.computeFromTridiagonal(diag, sub);
    if (es.info() != Eigen::Success)
      throw std::runtime_error("gauss_hermite: eigensolver failed");
    GhRule rule;
    rule.nodes.resize(n);
    rule.log_weights.resize(n);
    const double log_sqrt_pi = 0.5 * std::log(M_PI);
    for (int k = 0; k < n; ++k) {
      rule.nodes[k] = es.eigenvalues()[k];
      rule.log_weights[k] =
          log_sqrt_pi + 2.0 * std::log(std::abs(es.eigenvectors()(0, k)));
    }
    it = cache.emplace(n, std::move(rule)).first;
  }
  last_n = n;
  last_rule = &it->second;
  return *last_rule;
}
}  // namespace

void gauss_hermite(int n, VectorXd& nodes, VectorXd& log_weights) {
  const GhRule& rule = gh_rule(n);
  nodes = Eigen::Map<const VectorXd>(rule.nodes.data(), n);
  log_weights = Eigen::Map<const VectorXd>(rule.log_weights.data(), n);
}

}  // namespace evtmem
