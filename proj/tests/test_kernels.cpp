#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <vector>

#include "wbgnn/kernels.hpp"
#include "wbgnn/rng.hpp"

using namespace wbgnn;
using kern::KernelSet;

namespace {

std::vector<double> rand_vec(Rng& rng, int64_t n, double lo = -2.0, double hi = 2.0) {
  std::vector<double> v(static_cast<size_t>(n));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

bool have_avx2() { return kern::avx2_built() && kern::cpu_has_avx2(); }

const KernelSet& avx2() {
#if defined(WBGNN_BUILD_AVX2)
  return kern::avx2_kernels;
#else
  return kern::scalar_kernels;
#endif
}

}  // namespace

TEST_CASE("matxw matches a naive triple loop") {
  Rng rng(7);
  const int64_t p = 5, a = 7, b = 9;
  auto x = rand_vec(rng, p * a);
  auto m = rand_vec(rng, a * b);
  std::vector<double> out(static_cast<size_t>(p * b));
  kern::scalar_kernels.matxw(x.data(), m.data(), out.data(), p, a, b);
  for (int64_t ip = 0; ip < p; ++ip)
    for (int64_t ib = 0; ib < b; ++ib) {
      double acc = 0.0;
      for (int64_t ia = 0; ia < a; ++ia)
        acc += x[static_cast<size_t>(ip * a + ia)] * m[static_cast<size_t>(ia * b + ib)];
      CHECK(out[static_cast<size_t>(ip * b + ib)] == doctest::Approx(acc).epsilon(1e-14));
    }
}

TEST_CASE("lanes agree bit for bit") {
  if (!have_avx2()) {
    MESSAGE("AVX2 unavailable; lane equivalence trivially skipped");
    return;
  }
  Rng rng(123);
  // deliberately odd sizes to exercise vector remainders
  for (int trial = 0; trial < 20; ++trial) {
    const int64_t p = 1 + rng.uniform_int(9);
    const int64_t a = 1 + rng.uniform_int(13);
    const int64_t b = 1 + rng.uniform_int(17);

    auto x = rand_vec(rng, p * a);
    auto m = rand_vec(rng, a * b);
    std::vector<double> o1(static_cast<size_t>(p * b)), o2(static_cast<size_t>(p * b));
    kern::scalar_kernels.matxw(x.data(), m.data(), o1.data(), p, a, b);
    avx2().matxw(x.data(), m.data(), o2.data(), p, a, b);
    CHECK(bitwise_equal(o1, o2));

    auto g = rand_vec(rng, p * b);
    std::vector<double> w1(static_cast<size_t>(b * a)), w2(static_cast<size_t>(b * a));
    kern::scalar_kernels.outer_acc(g.data(), x.data(), w1.data(), p, b, a);
    avx2().outer_acc(g.data(), x.data(), w2.data(), p, b, a);
    CHECK(bitwise_equal(w1, w2));

    const int64_t outer = 1 + rng.uniform_int(4);
    const int64_t ax = 1 + rng.uniform_int(6);
    const int64_t inner = 1 + rng.uniform_int(11);
    auto t = rand_vec(rng, outer * ax * inner);
    std::vector<double> s1(static_cast<size_t>(outer * inner)), s2(s1);
    kern::scalar_kernels.strided_sum(t.data(), s1.data(), outer, ax, inner);
    avx2().strided_sum(t.data(), s2.data(), outer, ax, inner);
    CHECK(bitwise_equal(s1, s2));

    auto small = rand_vec(rng, outer * inner);
    std::vector<double> t1(static_cast<size_t>(outer * ax * inner)), t2(t1);
    kern::scalar_kernels.tile(small.data(), t1.data(), outer, ax, inner);
    avx2().tile(small.data(), t2.data(), outer, ax, inner);
    CHECK(bitwise_equal(t1, t2));

    const int64_t n = 1 + rng.uniform_int(37);
    auto u = rand_vec(rng, n);
    auto v = rand_vec(rng, n);
    std::vector<double> e1(static_cast<size_t>(n)), e2(static_cast<size_t>(n));

    kern::scalar_kernels.ew_add(u.data(), v.data(), e1.data(), n);
    avx2().ew_add(u.data(), v.data(), e2.data(), n);
    CHECK(bitwise_equal(e1, e2));
    kern::scalar_kernels.ew_sub(u.data(), v.data(), e1.data(), n);
    avx2().ew_sub(u.data(), v.data(), e2.data(), n);
    CHECK(bitwise_equal(e1, e2));
    kern::scalar_kernels.ew_mul(u.data(), v.data(), e1.data(), n);
    avx2().ew_mul(u.data(), v.data(), e2.data(), n);
    CHECK(bitwise_equal(e1, e2));
    kern::scalar_kernels.scale(u.data(), 0.37, e1.data(), n);
    avx2().scale(u.data(), 0.37, e2.data(), n);
    CHECK(bitwise_equal(e1, e2));

    auto y1 = v, y2 = v;
    kern::scalar_kernels.axpy(-1.25, u.data(), y1.data(), n);
    avx2().axpy(-1.25, u.data(), y2.data(), n);
    CHECK(bitwise_equal(y1, y2));

    kern::scalar_kernels.relu_fwd(u.data(), e1.data(), n);
    avx2().relu_fwd(u.data(), e2.data(), n);
    CHECK(bitwise_equal(e1, e2));
    kern::scalar_kernels.relu_bwd(u.data(), v.data(), e1.data(), n);
    avx2().relu_bwd(u.data(), v.data(), e2.data(), n);
    CHECK(bitwise_equal(e1, e2));
  }
}

TEST_CASE("force_lane switches the active set and rejects bogus lanes") {
  kern::force_lane(kern::Lane::scalar);
  CHECK(kern::active_lane() == kern::Lane::scalar);
  if (have_avx2()) {
    kern::force_lane(kern::Lane::avx2);
    CHECK(kern::active_lane() == kern::Lane::avx2);
    kern::force_lane(kern::Lane::scalar);
  }
  CHECK(kern::lane_name(kern::Lane::scalar) == "scalar");
  CHECK(kern::lane_name(kern::Lane::avx2) == "avx2");
}

TEST_CASE("relu handles signed zero and negatives") {
  const double x[4] = {-0.0, 0.0, -1.5, 2.5};
  double out[4];
  kern::scalar_kernels.relu_fwd(x, out, 4);
  CHECK(out[0] == 0.0);
  CHECK(out[1] == 0.0);
  CHECK(out[2] == 0.0);
  CHECK(out[3] == 2.5);
}
