#pragma once

#include <utility>
#include <vector>

namespace evtmem {

// Standard normal density, cdf, and quantile.
double norm_pdf(double x);
double norm_cdf(double x);
double norm_quantile(double p);

// Regularized incomplete beta I_x(a, b).
double reg_inc_beta(double a, double b, double x);

// One-sample Kolmogorov-Smirnov distance of a sample against a cdf given as
// the vector of cdf values at the sorted sample points.
double ks_distance_sorted_cdf(const std::vector<double>& cdf_at_sorted);

// KS distance of a sample against U(0,1) / N(0,1). The sample need not be
// sorted; a sorted copy is taken.
double ks_distance_uniform(std::vector<double> sample);
double ks_distance_normal(std::vector<double> sample);

// Asymptotic p-value for the one-sample KS statistic at sample size n
// (Stephens' small-sample adjustment of the Kolmogorov series).
double ks_pvalue(double distance, std::size_t n);

// Spearman rank correlation; average ranks on ties.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace evtmem
