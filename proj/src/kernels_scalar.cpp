#include "wbgnn/kernels.hpp"

#include <cstring>

namespace wbgnn::kern {
namespace {

void s_matxw(const double* x, const double* m, double* out,
             int64_t p, int64_t a, int64_t b) {
  for (int64_t i = 0; i < p * b; ++i) out[i] = 0.0;
  for (int64_t ip = 0; ip < p; ++ip) {
    const double* xr = x + ip * a;
    double* or_ = out + ip * b;
    for (int64_t ia = 0; ia < a; ++ia) {
      const double xv = xr[ia];
      const double* mr = m + ia * b;
      for (int64_t ib = 0; ib < b; ++ib) or_[ib] += xv * mr[ib];
    }
  }
}

void s_outer_acc(const double* g, const double* x, double* dw,
                 int64_t p, int64_t b, int64_t a) {
  for (int64_t i = 0; i < b * a; ++i) dw[i] = 0.0;
  for (int64_t ip = 0; ip < p; ++ip) {
    const double* gr = g + ip * b;
    const double* xr = x + ip * a;
    for (int64_t ib = 0; ib < b; ++ib) {
      const double gv = gr[ib];
      double* dr = dw + ib * a;
      for (int64_t ia = 0; ia < a; ++ia) dr[ia] += gv * xr[ia];
    }
  }
}

void s_strided_sum(const double* x, double* out,
                   int64_t outer, int64_t ax, int64_t inner) {
  for (int64_t i = 0; i < outer * inner; ++i) out[i] = 0.0;
  for (int64_t o = 0; o < outer; ++o) {
    const double* xo = x + o * ax * inner;
    double* oo = out + o * inner;
    for (int64_t s = 0; s < ax; ++s) {
      const double* xr = xo + s * inner;
      for (int64_t i = 0; i < inner; ++i) oo[i] += xr[i];
    }
  }
}

void s_tile(const double* x, double* out,
            int64_t outer, int64_t ax, int64_t inner) {
  for (int64_t o = 0; o < outer; ++o) {
    const double* xo = x + o * inner;
    double* oo = out + o * ax * inner;
    for (int64_t s = 0; s < ax; ++s)
      std::memcpy(oo + s * inner, xo, sizeof(double) * inner);
  }
}

void s_ew_add(const double* a, const double* b, double* out, int64_t n) {
  for (int64_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}
void s_ew_sub(const double* a, const double* b, double* out, int64_t n) {
  for (int64_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}
void s_ew_mul(const double* a, const double* b, double* out, int64_t n) {
  for (int64_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}
void s_scale(const double* x, double c, double* out, int64_t n) {
  for (int64_t i = 0; i < n; ++i) out[i] = c * x[i];
}
void s_axpy(double a, const double* x, double* y, int64_t n) {
  for (int64_t i = 0; i < n; ++i) y[i] += a * x[i];
}
void s_relu_fwd(const double* x, double* out, int64_t n) {
  for (int64_t i = 0; i < n; ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
}
void s_relu_bwd(const double* x, const double* g, double* out, int64_t n) {
  for (int64_t i = 0; i < n; ++i) out[i] = x[i] > 0.0 ? g[i] : 0.0;
}

}  // namespace

const KernelSet scalar_kernels = {
    s_matxw,   s_outer_acc, s_strided_sum, s_tile,     s_ew_add,
    s_ew_sub,  s_ew_mul,    s_scale,       s_axpy,     s_relu_fwd,
    s_relu_bwd,
};

}  // namespace wbgnn::kern
