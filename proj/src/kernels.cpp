#include "evtmem/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <stdexcept>

namespace evtmem {

#ifdef EVTMEM_BUILD_AVX2
const Kernels* avx2_kernels_impl();
#endif

const Kernels* avx2_kernels() {
#ifdef EVTMEM_BUILD_AVX2
  static const bool supported =
      __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return supported ? avx2_kernels_impl() : nullptr;
#else
  return nullptr;
#endif
}

namespace {

const Kernels* resolve_default() {
  if (const char* env = std::getenv("EVTMEM_KERNEL")) {
    const std::string want(env);
    if (want == "scalar") return &scalar_kernels();
    if (want == "avx2") {
      if (const Kernels* k = avx2_kernels()) return k;
      throw std::runtime_error("EVTMEM_KERNEL=avx2 requested but unavailable");
    }
  }
  if (const Kernels* k = avx2_kernels()) return k;
  return &scalar_kernels();
}

std::atomic<const Kernels*>& active_slot() {
  static std::atomic<const Kernels*> slot{resolve_default()};
  return slot;
}

}  // namespace

const Kernels& active_kernels() { return *active_slot().load(); }

void select_kernels(const std::string& name) {
  if (name == "auto") {
    const Kernels* k = avx2_kernels();
    active_slot().store(k ? k : &scalar_kernels());
  } else if (name == "scalar") {
    active_slot().store(&scalar_kernels());
  } else if (name == "avx2") {
    const Kernels* k = avx2_kernels();
    if (!k) throw std::runtime_error("avx2 kernels unavailable on this host");
    active_slot().store(k);
  } else {
    throw std::invalid_argument("unknown kernel variant '" + name + "'");
  }
}

}  // namespace evtmem
