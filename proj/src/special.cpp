#include "evtmem/special.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/special_functions/beta.hpp>

namespace evtmem {

double norm_pdf(double x) {
  static const double inv_sqrt_2pi = 0.3989422804014326779;
  return inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

double norm_cdf(double x) { return 0.5 * std::erfc(-x * M_SQRT1_2); }

double norm_quantile(double p) {
  if (!(p > 0.0 && p < 1.0))
    throw std::invalid_argument("norm_quantile: p must be in (0,1)");
  static const boost::math::normal_distribution<double> std_normal;
  return boost::math::quantile(std_normal, p);
}

double reg_inc_beta(double a, double b, double x) {
  return boost::math::ibeta(a, b, x);
}

double ks_distance_sorted_cdf(const std::vector<double>& cdf) {
  const std::size_t n = cdf.size();
  if (n == 0) throw std::invalid_argument("ks_distance: empty sample");
  double d = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double hi = static_cast<double>(i + 1) / n - cdf[i];
    const double lo = cdf[i] - static_cast<double>(i) / n;
    d = std::max(d, std::max(hi, lo));
  }
  return d;
}

double ks_distance_uniform(std::vector<double> sample) {
  std::sort(sample.begin(), sample.end());
  return ks_distance_sorted_cdf(sample);
}

double ks_distance_normal(std::vector<double> sample) {
  std::sort(sample.begin(), sample.end());
  for (auto& v : sample) v = norm_cdf(v);
  return ks_distance_sorted_cdf(sample);
}

double ks_pvalue(double distance, std::size_t n) {
  if (n == 0) throw std::invalid_argument("ks_pvalue: empty sample");
  const double sn = std::sqrt(static_cast<double>(n));
  const double lambda = (sn + 0.12 + 0.11 / sn) * distance;
  if (lambda < 1e-3) return 1.0;
  // Kolmogorov tail series, alternating; converges fast for lambda > ~0.3.
  double sum = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += (k % 2 == 1 ? term : -term);
    if (term < 1e-16) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

namespace {
std::vector<double> average_ranks(const std::vector<double>& v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(),
            [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> rank(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[idx[k]] = r;
    i = j + 1;
  }
  return rank;
}
}  // namespace

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw std::invalid_argument("spearman: need two samples of equal size >= 2");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace evtmem
