#include <cmath>
#include <cstddef>

#include "pfp/kernels.hpp"

// Scalar reference kernels. These define the semantics; the SIMD variants
// must agree with them up to floating-point reassociation.

namespace pfp::kernels::detail {

double sum_scalar(const double* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

double dot_scalar(const double* x, const double* y, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

void scale_scalar(double* out, const double* x, double a, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a * x[i];
}

void axpy_scalar(double* y, const double* x, double a, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void recip_scale_scalar(double* out, const double* x, double a,
                        std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a / x[i];
}

double l1_residual_scalar(const double* u, const double* d, double r,
                          std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += std::fabs(u[i] * d[i] - r);
  return acc;
}

extern const Ops kScalarOps;
const Ops kScalarOps = {
    sum_scalar,         dot_scalar,  scale_scalar,
    axpy_scalar,        recip_scale_scalar, l1_residual_scalar,
};

}  // namespace pfp::kernels::detail
