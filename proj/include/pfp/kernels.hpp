#pragma once

#include <cstddef>
#include <string_view>

namespace pfp::kernels {

// Data-parallel primitives behind the Sinkhorn solver's inner loops.
// Each op has a scalar reference implementation and an AVX2 variant; the
// active backend is chosen once at startup from CPU capabilities and can
// be overridden with the PFP_KERNEL environment variable ("scalar" or
// "avx2"). Backends are equivalence-tested against each other.
struct Ops {
  double (*sum)(const double* x, std::size_t n);
  double (*dot)(const double* x, const double* y, std::size_t n);
  // out[i] = a * x[i]
  void (*scale)(double* out, const double* x, double a, std::size_t n);
  // y[i] += a * x[i]
  void (*axpy)(double* y, const double* x, double a, std::size_t n);
  // out[i] = a / x[i]
  void (*recip_scale)(double* out, const double* x, double a, std::size_t n);
  // sum_i |u[i] * d[i] - r|
  double (*l1_residual)(const double* u, const double* d, double r,
                        std::size_t n);
};

enum class Backend { Scalar, Avx2 };

// Active backend (capability- and env-selected, cached).
const Ops& ops();

// Explicit backend, for equivalence tests. Throws pfp::Error when the
// requested backend is unavailable on this machine/build.
const Ops& ops(Backend backend);

Backend active_backend();
bool backend_available(Backend backend);
std::string_view backend_name(Backend backend);

}  // namespace pfp::kernels
