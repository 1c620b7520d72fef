#include <cstdlib>
#include <string>

#include "pprec/common/error.hpp"
#include "pprec/core/kernels.hpp"

namespace pprec::core::kernels {

const Kernels& scalar_kernels();
#if defined(__x86_64__)
const Kernels& avx2_kernels();
#endif
#if defined(__aarch64__)
const Kernels& neon_kernels();
#endif

std::string backend_name(Backend b) {
  switch (b) {
    case Backend::scalar: return "scalar";
    case Backend::avx2: return "avx2";
    case Backend::neon: return "neon";
  }
  return "unknown";
}

Backend parse_backend(const std::string& name) {
  if (name == "scalar") return Backend::scalar;
  if (name == "avx2") return Backend::avx2;
  if (name == "neon") return Backend::neon;
  throw ConfigError("unknown kernel backend '" + name + "' (expected scalar|avx2|neon)");
}

bool available(Backend b) {
  switch (b) {
    case Backend::scalar:
      return true;
    case Backend::avx2:
#if defined(__x86_64__)
      return __builtin_cpu_supports("avx2") != 0;
#else
      return false;
#endif
    case Backend::neon:
#if defined(__aarch64__)
      return true;
#else
      return false;
#endif
  }
  return false;
}

const Kernels& get(Backend b) {
  if (!available(b)) {
    throw ConfigError("kernel backend '" + backend_name(b) + "' not available on this machine");
  }
  switch (b) {
#if defined(__x86_64__)
    case Backend::avx2: return avx2_kernels();
#endif
#if defined(__aarch64__)
    case Backend::neon: return neon_kernels();
#endif
    default: return scalar_kernels();
  }
}

namespace {

Backend pick_default() {
  if (const char* env = std::getenv("PPREC_KERNELS")) {
    Backend b = parse_backend(env);
    if (!available(b)) {
      throw ConfigError("PPREC_KERNELS requests '" + std::string(env) + "' which is unavailable");
    }
    return b;
  }
  if (available(Backend::avx2)) return Backend::avx2;
  if (available(Backend::neon)) return Backend::neon;
  return Backend::scalar;
}

Backend& active_slot() {
  static Backend slot = pick_default();
  return slot;
}

}  // namespace

Backend active_backend() { return active_slot(); }

const Kernels& active() { return get(active_slot()); }

void set_backend(Backend b) {
  if (!available(b)) {
    throw ConfigError("kernel backend '" + backend_name(b) + "' not available on this machine");
  }
  active_slot() = b;
}

}  // namespace pprec::core::kernels
