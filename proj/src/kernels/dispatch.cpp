#include <atomic>
#include <cstdlib>
#include <string>

#include "critq/error.hpp"
#include "critq/kernels.hpp"

namespace critq::kernels {

namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Backend initial_backend() {
  const char* env = std::getenv("CRITQ_KERNELS");
  const std::string choice = env ? env : "auto";
  if (choice == "scalar") return Backend::Scalar;
  if (choice == "avx2" && !avx2_supported())
    throw ValidationError("CRITQ_KERNELS=avx2 requested but AVX2/FMA is unavailable");
  return avx2_supported() ? Backend::Avx2 : Backend::Scalar;
}

std::atomic<Backend>& current() {
  static std::atomic<Backend> b{initial_backend()};
  return b;
}

}  // namespace

bool avx2_supported() {
  static const bool ok = avx2::compiled() && cpu_has_avx2();
  return ok;
}

Backend active_backend() { return current().load(std::memory_order_relaxed); }

std::string_view backend_name(Backend b) { return b == Backend::Avx2 ? "avx2" : "scalar"; }

void set_backend(Backend b) {
  if (b == Backend::Avx2 && !avx2_supported())
    throw ValidationError("AVX2 kernels are unavailable on this build or CPU");
  current().store(b, std::memory_order_relaxed);
}

const KernelTable& active() {
  return active_backend() == Backend::Avx2 ? avx2::table : scalar::table;
}

}  // namespace critq::kernels
