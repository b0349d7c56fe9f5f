#include "wbgnn/kernels.hpp"

#include <cstdlib>
#include <stdexcept>

namespace wbgnn::kern {
namespace {

Lane g_lane = Lane::scalar;
bool g_selected = false;

Lane pick_lane() {
  if (const char* env = std::getenv("WBGNN_KERNELS")) {
    const std::string s(env);
    if (s == "scalar") return Lane::scalar;
    if (s == "avx2") {
      if (!avx2_built() || !cpu_has_avx2())
        throw std::runtime_error("WBGNN_KERNELS=avx2 but AVX2 is unavailable");
      return Lane::avx2;
    }
    throw std::runtime_error("WBGNN_KERNELS must be scalar or avx2, got: " + s);
  }
  return (avx2_built() && cpu_has_avx2()) ? Lane::avx2 : Lane::scalar;
}

}  // namespace

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
  return __builtin_cpu_supports("avx2") != 0;
#else
  return false;
#endif
}

bool avx2_built() {
#if defined(WBGNN_BUILD_AVX2)
  return true;
#else
  return false;
#endif
}

const KernelSet& active() {
  if (!g_selected) {
    g_lane = pick_lane();
    g_selected = true;
  }
#if defined(WBGNN_BUILD_AVX2)
  return g_lane == Lane::avx2 ? avx2_kernels : scalar_kernels;
#else
  return scalar_kernels;
#endif
}

Lane active_lane() {
  active();
  return g_lane;
}

void force_lane(Lane lane) {
  if (lane == Lane::avx2 && (!avx2_built() || !cpu_has_avx2()))
    throw std::runtime_error("cannot force avx2 lane: unavailable");
  g_lane = lane;
  g_selected = true;
}

std::string lane_name(Lane lane) {
  return lane == Lane::avx2 ? "avx2" : "scalar";
}

}  // namespace wbgnn::kern
