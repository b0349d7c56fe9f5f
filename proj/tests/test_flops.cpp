#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <stdexcept>
#include <vector>

#include "wbgnn/flops.hpp"

using namespace wbgnn;

TEST_CASE("scheduler layer count, hand-computed values") {
  CHECK(scheduler_layer_flops(1, 1, 1, 1, 1, 1) == 13);

  // M=2, K=3, N_R=1, N_T=2, 4 -> 8 channels:
  //   products 8*7*12 = 672
  //   lifts    2*8*4*(6+4+12+6) = 1792
  //   sums     4*(6+8+0+6) = 80
  //   epilogue 4*8 = 32
  CHECK(scheduler_layer_flops(2, 3, 1, 2, 4, 8) == 672 + 1792 + 80 + 32);
  CHECK(scheduler_layer_flops(2, 3, 1, 2, 4, 8) == 2576);
}

TEST_CASE("precoder layer count, hand-computed values") {
  // All dims 1: products 1, lifts 2*(1+4+1)=12, sums 0, gate 4+4-1+1=8.
  CHECK(precoder_layer_flops(1, 1, 1, 1, 1, 1) == 21);

  // M=1, K'=2, N_R=2, N_T=2, 2 -> 3 channels:
  //   products 3*3*8 = 72
  //   lifts    2*3*2*(8+16+4) = 336
  //   sums     2*(0+4+4) = 16
  //   gate     3*1*2*(16+16-2+1) = 186
  CHECK(precoder_layer_flops(1, 2, 2, 2, 2, 3) == 72 + 336 + 16 + 186);
  CHECK(precoder_layer_flops(1, 2, 2, 2, 2, 3) == 610);
}

TEST_CASE("doubling the width roughly quadruples one layer") {
  for (int64_t c = 64; c <= 512; c *= 2) {
    double lo = static_cast<double>(scheduler_layer_flops(4, 6, 2, 8, c, c));
    double hi = static_cast<double>(scheduler_layer_flops(4, 6, 2, 8, 2 * c, 2 * c));
    CHECK(hi / lo > 3.5);
    CHECK(hi / lo < 4.0);

    double plo = static_cast<double>(precoder_layer_flops(4, 3, 2, 8, c, c));
    double phi = static_cast<double>(precoder_layer_flops(4, 3, 2, 8, 2 * c, 2 * c));
    CHECK(phi / plo > 3.5);
    CHECK(phi / plo < 4.0);
  }
}

TEST_CASE("network totals sum the per-layer counts") {
  FlopsDims d;
  d.m = 2;
  d.k = 6;
  d.kp = 2;
  d.n_r = 1;
  d.n_t = 4;
  std::vector<int> sw = {4, 32, 32, 1};
  int64_t expect = 0;
  for (size_t l = 0; l + 1 < sw.size(); ++l)
    expect += scheduler_layer_flops(d.m, d.k, d.n_r, d.n_t, sw[l], sw[l + 1]);
  CHECK(scheduler_network_flops(d, sw) == expect);

  std::vector<int> gw = {5, 32, 32, 1};
  int64_t one = 0;
  for (size_t l = 0; l + 1 < gw.size(); ++l)
    one += scheduler_layer_flops(d.m, d.k, d.n_r, d.n_t, gw[l], gw[l + 1]);
  CHECK(sgnn_network_flops(d, gw) == d.kp * one);

  std::vector<int> pw = {2, 48, 48, 48, 10};
  int64_t pe = 0;
  for (size_t l = 0; l + 1 < pw.size(); ++l)
    pe += precoder_layer_flops(d.m, d.kp, d.n_r, d.n_t, pw[l], pw[l + 1]);
  CHECK(precoder_network_flops(d, pw) == pe);
}

TEST_CASE("invalid arguments are rejected") {
  CHECK_THROWS_AS(scheduler_layer_flops(0, 1, 1, 1, 1, 1), std::invalid_argument);
  CHECK_THROWS_AS(precoder_layer_flops(1, 1, 1, 1, 1, 0), std::invalid_argument);
  FlopsDims d;
  CHECK_THROWS_AS(scheduler_network_flops(d, {4}), std::invalid_argument);
  d.kp = 0;
  CHECK_THROWS_AS(sgnn_network_flops(d, {4, 1}), std::invalid_argument);
}

TEST_CASE("asymptotic table lists every implemented method once") {
  auto rows = asymptotic_table();
  CHECK(rows.size() == 6);
  for (const auto& r : rows) {
    CHECK(!r.method.empty());
    CHECK(r.order.substr(0, 2) == "O(");
  }
}
