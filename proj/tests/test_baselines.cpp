#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <stdexcept>
#include <vector>

#include "wbgnn/baselines.hpp"
#include "wbgnn/rng.hpp"
#include "wbgnn/system.hpp"

using namespace wbgnn;
using cd = std::complex<double>;

namespace {

ChannelSample random_channel(int m, int k, int nr, int nt, uint64_t seed) {
  ChannelSample h;
  h.m = m;
  h.k = k;
  h.n_r = nr;
  h.n_t = nt;
  h.h.resize(static_cast<size_t>(m) * k * nr * nt);
  Rng rng(seed);
  const double s = 1.0 / std::sqrt(2.0);
  for (cd& x : h.h) x = {rng.normal() * s, rng.normal() * s};
  return h;
}

double basis_se(const ChannelSample& h, const ScheduleBasis& b, const PrecodeFn& fn,
                double p_tot) {
  return fn(extract_scheduled(h, b), p_tot);
}

}  // namespace

TEST_CASE("woodbury route matches the direct inverse") {
  Rng rng(404);
  for (int trial = 0; trial < 30; ++trial) {
    const int k = 1 + trial % 4;
    const int nt = 2 + 2 * (trial % 3);
    MisoInstance in = default_miso_sampler(k, nt)(rng);
    CMat direct = miso_precoder(in, false);
    CMat wood = miso_precoder(in, true);
    for (int i = 0; i < k; ++i)
      for (int n = 0; n < nt; ++n)
        CHECK(std::abs(direct[static_cast<size_t>(i)][static_cast<size_t>(n)] -
                       wood[static_cast<size_t>(i)][static_cast<size_t>(n)]) < 1e-12);
    for (int i = 0; i < k; ++i) {
      double n2 = 0.0;
      for (const cd& x : direct[static_cast<size_t>(i)]) n2 += std::norm(x);
      CHECK(n2 == doctest::Approx(in.p[static_cast<size_t>(i)]).epsilon(1e-12));
    }
  }
}

TEST_CASE("zero channel keeps a zero precoder instead of dividing by zero") {
  MisoInstance in;
  in.h = {CVec(3, cd{0.0, 0.0})};
  in.lam = {1.0};
  in.p = {2.0};
  in.sigma2 = 1.0;
  for (bool wood : {false, true}) {
    CMat w = miso_precoder(in, wood);
    for (const cd& x : w.front()) CHECK(x == cd{0.0, 0.0});
  }
}

TEST_CASE("duplicating a transmit antenna duplicates the precoder entry") {
  for (bool wood : {false, true}) {
    SpsdReport r = spsd_check("antenna", 50, 990 + wood, 1e-10,
                              default_miso_sampler(3, 4), miso_policy(wood));
    CHECK(r.agreement_rate == 1.0);
    CHECK(r.max_deviation < 1e-10);
    CHECK(r.samples == 50);
  }
}

TEST_CASE("identical users: equal split is strictly beaten by a lopsided split") {
  // h = e_1, total power 2, unit noise:
  //   equal split    2 log2(1 + 1/(1+1)) = 2 log2(3/2)
  //   all-to-one     log2(1 + 2)
  //   gap            log2(4/3)
  CVec h = {cd{1.0, 0.0}, cd{0.0, 0.0}};
  CHECK(duplicate_user_gap(h, 2.0, 1.0) ==
        doctest::Approx(std::log2(4.0 / 3.0)).epsilon(1e-12));

  SpsdReport r = spsd_check("user", 200, 7, 1e-10, default_miso_sampler(2, 4),
                            miso_policy(false));
  CHECK(r.agreement_rate == 0.0);
  CHECK(r.max_deviation > 0.0);

  CHECK_THROWS_AS(spsd_check("rb", 10, 1, 1e-10, default_miso_sampler(2, 2),
                             miso_policy(false)),
                  std::invalid_argument);
  CHECK_THROWS_AS(spsd_check("user", 0, 1, 1e-10, default_miso_sampler(2, 2),
                             miso_policy(false)),
                  std::invalid_argument);
}

TEST_CASE("two-pair power control threshold") {
  CHECK(pair_threshold(1.0, 1.0) == doctest::Approx(1.6180339887498949).epsilon(1e-14));

  // at the threshold both corner decisions earn the same sum rate
  for (double ht : {0.5, 1.0, 1.7}) {
    for (double hi : {0.3, 1.0, 2.1}) {
      const double s = pair_threshold(ht, hi);
      CHECK(pair_sum_rate(ht, hi, s, s, 1.0) ==
            doctest::Approx(pair_sum_rate(ht, hi, s, 0.0, 1.0)).epsilon(1e-12));
    }
  }

  auto both = power_control_2pair(1.0, 1.0, 1.0, 1.0);
  CHECK(both.first == 1.0);
  CHECK(both.second == 1.0);
  auto one = power_control_2pair(1.0, 1.0, 2.0, 1.0);
  CHECK(one.first == 2.0);
  CHECK(one.second == 0.0);
  CHECK_THROWS_AS(power_control_2pair(1.0, 1.0, 0.0, 1.0), std::invalid_argument);
}

TEST_CASE("closed-form power control never loses to a grid search") {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const double ht = rng.uniform(0.1, 2.0);
    const double hi = rng.uniform(0.1, 2.0);
    const double pm = rng.uniform(0.5, 4.0);
    const double s2 = rng.uniform(0.5, 2.0);
    auto closed = power_control_2pair(ht, hi, pm, s2);
    auto grid = pair_grid_best(ht, hi, pm, s2, 201);
    const double r_closed = pair_sum_rate(ht, hi, closed.first, closed.second, s2);
    const double r_grid = pair_sum_rate(ht, hi, grid.first, grid.second, s2);
    CHECK(r_closed + 1e-12 >= r_grid);
  }
}

TEST_CASE("digital ZF: single user reduces to matched beamforming") {
  ChannelSample h = random_channel(2, 1, 1, 4, 21);
  const double p = 3.0, s2 = 0.7;
  double expect = 0.0;
  for (int rb = 0; rb < h.m; ++rb) {
    double n2 = 0.0;
    for (int n = 0; n < h.n_t; ++n) n2 += std::norm(h.at(rb, 0, n));
    expect += std::log2(1.0 + (p / h.m) * n2 / s2);
  }
  expect /= h.m;
  CHECK(digital_zf_se(h, p, s2) == doctest::Approx(expect).epsilon(1e-9));
}

TEST_CASE("digital ZF: orthogonal users see no interference") {
  ChannelSample h;
  h.m = 1;
  h.k = 2;
  h.n_r = 1;
  h.n_t = 2;
  h.h = {cd{1.0, 0.0}, cd{0.0, 0.0}, cd{0.0, 0.0}, cd{1.0, 0.0}};
  // per-stream power 2, SINR 2/0.5 each
  CHECK(digital_zf_se(h, 4.0, 0.5) ==
        doctest::Approx(2.0 * std::log2(5.0)).epsilon(1e-9));
}

TEST_CASE("digital ZF: crossing users still decouple") {
  ChannelSample h = random_channel(2, 3, 1, 4, 77);
  const double p = 2.0, s2 = 1.0;
  // against a no-interference bound: ZF rate can never exceed the
  // interference-free matched filter at the same per-stream power
  double bound = 0.0;
  const double ps = p / (h.m * h.k);
  for (int rb = 0; rb < h.m; ++rb)
    for (int u = 0; u < h.k; ++u) {
      double n2 = 0.0;
      for (int n = 0; n < h.n_t; ++n) n2 += std::norm(h.at(rb, u, n));
      bound += std::log2(1.0 + ps * n2 / s2);
    }
  bound /= h.m;
  const double se = digital_zf_se(h, p, s2);
  CHECK(se > 0.0);
  CHECK(se <= bound + 1e-9);
}

TEST_CASE("matched phase: single-user hand case") {
  ChannelSample h;
  h.m = 1;
  h.k = 1;
  h.n_r = 1;
  h.n_t = 2;
  h.h = {cd{3.0, 0.0}, cd{0.0, 4.0}};
  // phase-aligned column collects |3| + |4i| = 7; the composed column
  // carries the full budget 2, split as modulus 1 per antenna, so the
  // received power is 7^2 and the rate log2(50).
  HybridSolution sol = matched_phase(h, 2.0, 1.0);
  ConstraintReport rep = check_constraints(sol, 2.0);
  CHECK(rep.rf_modulus < 1e-12);
  CHECK(rep.comb_modulus < 1e-12);
  CHECK(rep.power_rel < 1e-9);
  const double se = sum_rate(h, identity_basis(1, 1), sol, 1.0);
  CHECK(se == doctest::Approx(std::log2(50.0)).epsilon(1e-12));
  CHECK(matched_phase_fn(1.0)(h, 2.0) == doctest::Approx(se).epsilon(1e-15));
}

TEST_CASE("matched phase obeys the constraints on random channels") {
  for (int trial = 0; trial < 20; ++trial) {
    const int m = 1 + trial % 3;
    const int kp = 1 + trial % 3;
    const int nr = 1 + trial % 2;
    const int nt = 4;
    ChannelSample h = random_channel(m, kp, nr, nt, 1000 + trial);
    HybridSolution sol = matched_phase(h, 2.5, 0.8);
    ConstraintReport rep = check_constraints(sol, 2.5);
    CHECK(rep.rf_modulus < 1e-12);
    CHECK(rep.comb_modulus < 1e-12);
    CHECK(rep.power_rel < 1e-9);
    CHECK(sum_rate(h, identity_basis(m, kp), sol, 0.8) > 0.0);
  }
}

TEST_CASE("strongest schedule keeps the top-energy users in order") {
  ChannelSample h;
  h.m = 2;
  h.k = 3;
  h.n_r = 1;
  h.n_t = 1;
  h.h = {cd{1.0, 0.0}, cd{2.0, 0.0}, cd{0.5, 0.0},
         cd{0.0, 1.0}, cd{0.0, 2.0}, cd{0.0, 0.5}};
  ScheduleBasis b = schedule_strongest(h, 2);
  for (int rb = 0; rb < 2; ++rb) {
    CHECK(b.selected(rb, 0) == 1);
    CHECK(b.selected(rb, 1) == 0);
  }
  CHECK_THROWS_AS(schedule_strongest(h, 4), std::invalid_argument);
}

TEST_CASE("rb_slice carries the right block") {
  ChannelSample h = random_channel(3, 2, 2, 2, 5);
  ChannelSample s = rb_slice(h, 1);
  CHECK(s.m == 1);
  for (int kr = 0; kr < h.k * h.n_r; ++kr)
    for (int n = 0; n < h.n_t; ++n) CHECK(s.at(0, kr, n) == h.at(1, kr, n));
  CHECK_THROWS_AS(rb_slice(h, 3), std::invalid_argument);
}

TEST_CASE("search ordering: exhaustive >= greedy, exhaustive >= strongest") {
  const double p = 4.0, s2 = 1.0;
  PrecodeFn fn = digital_zf_fn(s2);
  for (int trial = 0; trial < 6; ++trial) {
    ChannelSample h = random_channel(2, 5, 1, 4, 300 + trial);
    SearchResult ex = exhaustive_schedule(h, 2, fn, p);
    SearchResult gr = greedy_schedule(h, 2, fn, p);
    ScheduleBasis st = schedule_strongest(h, 2);
    const double st_se = basis_se(h, st, fn, p);
    CHECK(ex.se + 1e-12 >= gr.se);
    CHECK(ex.se + 1e-12 >= st_se);
    CHECK(gr.se > 0.0);
    ex.basis.validate();
    gr.basis.validate();
  }
}

TEST_CASE("shared-analog exhaustive beats every uniform wideband pick") {
  const double p = 2.0, s2 = 1.0;
  PrecodeFn fn = matched_phase_fn(s2);
  ChannelSample h = random_channel(2, 4, 1, 4, 88);
  SearchResult shared = exhaustive_schedule(h, 2, fn, p, true);
  shared.basis.validate();
  double best_uniform = 0.0;
  for (int a = 0; a < h.k; ++a)
    for (int b = a + 1; b < h.k; ++b) {
      ScheduleBasis basis = ScheduleBasis::from_selection(
          h.m, h.k, std::vector<std::vector<int>>(static_cast<size_t>(h.m), {a, b}));
      best_uniform = std::max(best_uniform, basis_se(h, basis, fn, p));
    }
  CHECK(shared.se + 1e-12 >= best_uniform);
}

TEST_CASE("shared-analog search size guard") {
  ChannelSample h = random_channel(2, 20, 1, 2, 9);
  CHECK_THROWS_AS(
      exhaustive_schedule(h, 10, digital_zf_fn(1.0), 1.0, true),
      std::invalid_argument);
}
