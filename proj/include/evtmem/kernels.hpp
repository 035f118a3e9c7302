#pragma once

#include <cstddef>
#include <string>

namespace evtmem {

// Hot inner reductions of the exceedance likelihood. Each function has a
// scalar reference implementation and, where the build and host support it,
// an AVX2 variant; the active variant is chosen once at runtime and the two
// are equivalence-tested against each other.

struct PotSums {
  double sum_a;      // sum_i a_i
  double sum_exp_z;  // sum_i z_i * exp(-a_i)
};

struct Kernels {
  // Fused peaks-over-threshold reduction over one cluster's exceedances:
  // a_i is the log-EVI linear predictor, z_i = log(y_i / omega) > 0.
  PotSums (*pot_sums)(const double* a, const double* z, std::size_t n);
  // out_i = exp(-x_i); used for quadrature node sweeps.
  void (*exp_neg)(const double* x, double* out, std::size_t n);
  // a_i += c * x_i; linear-predictor accumulation, one covariate column.
  void (*axpy)(double c, const double* x, double* a, std::size_t n);
  const char* name;
};

// Active kernel set. Resolution order: EVTMEM_KERNEL environment variable
// ("scalar" or "avx2"), else the best variant the CPU supports.
const Kernels& active_kernels();

// Specific variants, for equivalence tests and benchmarks. avx2_kernels()
// returns nullptr when the build or the host CPU lacks AVX2+FMA.
const Kernels& scalar_kernels();
const Kernels* avx2_kernels();

// Force a variant at runtime ("scalar", "avx2", "auto"). Throws if the
// variant is unavailable.
void select_kernels(const std::string& name);

}  // namespace evtmem
