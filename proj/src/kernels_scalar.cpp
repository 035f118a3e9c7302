#include <cmath>

#include "evtmem/kernels.hpp"

namespace evtmem {
namespace {

PotSums pot_sums_scalar(const double* a, const double* z, std::size_t n) {
  double sa = 0.0, sez = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sa += a[i];
    sez += z[i] * std::exp(-a[i]);
  }
  return {sa, sez};
}

void exp_neg_scalar(const double* x, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(-x[i]);
}

void axpy_scalar(double c, const double* x, double* a, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) a[i] += c * x[i];
}

}  // namespace

const Kernels& scalar_kernels() {
  static const Kernels k{pot_sums_scalar, exp_neg_scalar, axpy_scalar,
                         "scalar"};
  return k;
}

}  // namespace evtmem
