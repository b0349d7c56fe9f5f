#pragma once

#include <cstdint>
#include <string>

// Low-level numeric kernels behind the tensor ops. Two lanes: a scalar
// reference implementation and an AVX2 variant selected at runtime. Both
// lanes perform the same floating-point operations in the same order per
// output element (sequential accumulation, no FMA), so results are
// bit-identical and the choice of lane never changes a result.

namespace wbgnn::kern {

enum class Lane { scalar, avx2 };

struct KernelSet {
  // out[p,b] = sum_a x[p,a] * m[a,b]; accumulation ordered over a.
  void (*matxw)(const double* x, const double* m, double* out,
                int64_t p, int64_t a, int64_t b);
  // dw[b,a] = sum_p g[p,b] * x[p,a]; accumulation ordered over p.
  void (*outer_acc)(const double* g, const double* x, double* dw,
                    int64_t p, int64_t b, int64_t a);
  // out[o,i] = sum_ax x[o,ax,i]; accumulation ordered over ax.
  void (*strided_sum)(const double* x, double* out,
                      int64_t outer, int64_t ax, int64_t inner);
  // out[o,ax,i] = x[o,i] for every ax.
  void (*tile)(const double* x, double* out,
               int64_t outer, int64_t ax, int64_t inner);
  void (*ew_add)(const double* a, const double* b, double* out, int64_t n);
  void (*ew_sub)(const double* a, const double* b, double* out, int64_t n);
  void (*ew_mul)(const double* a, const double* b, double* out, int64_t n);
  void (*scale)(const double* x, double c, double* out, int64_t n);
  void (*axpy)(double a, const double* x, double* y, int64_t n);
  void (*relu_fwd)(const double* x, double* out, int64_t n);
  // out = g where x > 0, else 0
  void (*relu_bwd)(const double* x, const double* g, double* out, int64_t n);
};

extern const KernelSet scalar_kernels;
#if defined(WBGNN_BUILD_AVX2)
extern const KernelSet avx2_kernels;
#endif

bool cpu_has_avx2();
bool avx2_built();

// Active set: picked once from WBGNN_KERNELS=scalar|avx2 if set, else from
// cpuid. force_lane overrides (tests); throws if the lane is unavailable.
const KernelSet& active();
Lane active_lane();
void force_lane(Lane lane);
std::string lane_name(Lane lane);

}  // namespace wbgnn::kern
