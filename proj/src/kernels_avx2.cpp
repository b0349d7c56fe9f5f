#include "wbgnn/kernels.hpp"

#include <immintrin.h>

#include <cstring>

// AVX2 lane. Vector lanes always hold independent output elements and every
// output element sees the same mul/add sequence as the scalar lane, so the
// two lanes agree bit for bit. Compiled with -mno-fma on top of
// -ffp-contract=off; no FMA anywhere.

namespace wbgnn::kern {
namespace {

void v_matxw(const double* x, const double* m, double* out,
             int64_t p, int64_t a, int64_t b) {
  std::memset(out, 0, sizeof(double) * p * b);
  const int64_t bv = b & ~int64_t(3);
  for (int64_t ip = 0; ip < p; ++ip) {
    const double* xr = x + ip * a;
    double* or_ = out + ip * b;
    for (int64_t ia = 0; ia < a; ++ia) {
      const double xv = xr[ia];
      const __m256d xvv = _mm256_set1_pd(xv);
      const double* mr = m + ia * b;
      int64_t ib = 0;
      for (; ib < bv; ib += 4) {
        __m256d acc = _mm256_loadu_pd(or_ + ib);
        acc = _mm256_add_pd(acc, _mm256_mul_pd(xvv, _mm256_loadu_pd(mr + ib)));
        _mm256_storeu_pd(or_ + ib, acc);
      }
      for (; ib < b; ++ib) or_[ib] += xv * mr[ib];
    }
  }
}

void v_outer_acc(const double* g, const double* x, double* dw,
                 int64_t p, int64_t b, int64_t a) {
  std::memset(dw, 0, sizeof(double) * b * a);
  const int64_t av = a & ~int64_t(3);
  for (int64_t ip = 0; ip < p; ++ip) {
    const double* gr = g + ip * b;
    const double* xr = x + ip * a;
    for (int64_t ib = 0; ib < b; ++ib) {
      const double gv = gr[ib];
      const __m256d gvv = _mm256_set1_pd(gv);
      double* dr = dw + ib * a;
      int64_t ia = 0;
      for (; ia < av; ia += 4) {
        __m256d acc = _mm256_loadu_pd(dr + ia);
        acc = _mm256_add_pd(acc, _mm256_mul_pd(gvv, _mm256_loadu_pd(xr + ia)));
        _mm256_storeu_pd(dr + ia, acc);
      }
      for (; ia < a; ++ia) dr[ia] += gv * xr[ia];
    }
  }
}

void v_strided_sum(const double* x, double* out,
                   int64_t outer, int64_t ax, int64_t inner) {
  std::memset(out, 0, sizeof(double) * outer * inner);
  const int64_t iv = inner & ~int64_t(3);
  for (int64_t o = 0; o < outer; ++o) {
    const double* xo = x + o * ax * inner;
    double* oo = out + o * inner;
    for (int64_t s = 0; s < ax; ++s) {
      const double* xr = xo + s * inner;
      int64_t i = 0;
      for (; i < iv; i += 4) {
        __m256d acc = _mm256_loadu_pd(oo + i);
        acc = _mm256_add_pd(acc, _mm256_loadu_pd(xr + i));
        _mm256_storeu_pd(oo + i, acc);
      }
      for (; i < inner; ++i) oo[i] += xr[i];
    }
  }
}

void v_tile(const double* x, double* out,
            int64_t outer, int64_t ax, int64_t inner) {
  for (int64_t o = 0; o < outer; ++o) {
    const double* xo = x + o * inner;
    double* oo = out + o * ax * inner;
    for (int64_t s = 0; s < ax; ++s)
      std::memcpy(oo + s * inner, xo, sizeof(double) * inner);
  }
}

void v_ew_add(const double* a, const double* b, double* out, int64_t n) {
  const int64_t nv = n & ~int64_t(3);
  int64_t i = 0;
  for (; i < nv; i += 4)
    _mm256_storeu_pd(out + i,
                     _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void v_ew_sub(const double* a, const double* b, double* out, int64_t n) {
  const int64_t nv = n & ~int64_t(3);
  int64_t i = 0;
  for (; i < nv; i += 4)
    _mm256_storeu_pd(out + i,
                     _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) out[i] = a[i] - b[i];
}

void v_ew_mul(const double* a, const double* b, double* out, int64_t n) {
  const int64_t nv = n & ~int64_t(3);
  int64_t i = 0;
  for (; i < nv; i += 4)
    _mm256_storeu_pd(out + i,
                     _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

void v_scale(const double* x, double c, double* out, int64_t n) {
  const __m256d cv = _mm256_set1_pd(c);
  const int64_t nv = n & ~int64_t(3);
  int64_t i = 0;
  for (; i < nv; i += 4)
    _mm256_storeu_pd(out + i, _mm256_mul_pd(cv, _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) out[i] = c * x[i];
}

void v_axpy(double a, const double* x, double* y, int64_t n) {
  const __m256d av = _mm256_set1_pd(a);
  const int64_t nv = n & ~int64_t(3);
  int64_t i = 0;
  for (; i < nv; i += 4) {
    __m256d acc = _mm256_loadu_pd(y + i);
    acc = _mm256_add_pd(acc, _mm256_mul_pd(av, _mm256_loadu_pd(x + i)));
    _mm256_storeu_pd(y + i, acc);
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

void v_relu_fwd(const double* x, double* out, int64_t n) {
  const __m256d zero = _mm256_setzero_pd();
  const int64_t nv = n & ~int64_t(3);
  int64_t i = 0;
  for (; i < nv; i += 4) {
    const __m256d xv = _mm256_loadu_pd(x + i);
    const __m256d mask = _mm256_cmp_pd(xv, zero, _CMP_GT_OQ);
    _mm256_storeu_pd(out + i, _mm256_and_pd(mask, xv));
  }
  for (; i < n; ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void v_relu_bwd(const double* x, const double* g, double* out, int64_t n) {
  const __m256d zero = _mm256_setzero_pd();
  const int64_t nv = n & ~int64_t(3);
  int64_t i = 0;
  for (; i < nv; i += 4) {
    const __m256d xv = _mm256_loadu_pd(x + i);
    const __m256d mask = _mm256_cmp_pd(xv, zero, _CMP_GT_OQ);
    _mm256_storeu_pd(out + i, _mm256_and_pd(mask, _mm256_loadu_pd(g + i)));
  }
  for (; i < n; ++i) out[i] = x[i] > 0.0 ? g[i] : 0.0;
}

}  // namespace

const KernelSet avx2_kernels = {
    v_matxw,   v_outer_acc, v_strided_sum, v_tile,     v_ew_add,
    v_ew_sub,  v_ew_mul,    v_scale,       v_axpy,     v_relu_fwd,
    v_relu_bwd,
};

}  // namespace wbgnn::kern
