#include "pfp/kernels.hpp"

#include <cstdlib>
#include <string>

#include "pfp/error.hpp"

namespace pfp::kernels {

namespace detail {
extern const Ops kScalarOps;
#ifdef PFP_HAVE_AVX2
extern const Ops kAvx2Ops;
#endif
}  // namespace detail

namespace {

bool cpu_has_avx2() {
#if defined(PFP_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  return __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}

Backend select_backend() {
  if (const char* env = std::getenv("PFP_KERNEL")) {
    const std::string name(env);
    if (name == "scalar") return Backend::Scalar;
    if (name == "avx2" && backend_available(Backend::Avx2))
      return Backend::Avx2;
    // Unknown or unavailable override falls through to auto-detection.
  }
  return backend_available(Backend::Avx2) ? Backend::Avx2 : Backend::Scalar;
}

}  // namespace

bool backend_available(Backend backend) {
  switch (backend) {
    case Backend::Scalar:
      return true;
    case Backend::Avx2:
      return cpu_has_avx2();
  }
  return false;
}

std::string_view backend_name(Backend backend) {
  return backend == Backend::Scalar ? "scalar" : "avx2";
}

const Ops& ops(Backend backend) {
  switch (backend) {
    case Backend::Scalar:
      return detail::kScalarOps;
    case Backend::Avx2:
#ifdef PFP_HAVE_AVX2
      if (cpu_has_avx2()) return detail::kAvx2Ops;
#endif
      throw Error("avx2 kernel backend unavailable");
  }
  throw Error("unknown kernel backend");
}

Backend active_backend() {
  static const Backend selected = select_backend();
  return selected;
}

const Ops& ops() { return ops(active_backend()); }

}  // namespace pfp::kernels
