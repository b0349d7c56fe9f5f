#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>

#include "wbgnn/rng.hpp"
#include "wbgnn/system.hpp"

using namespace wbgnn;
namespace ad = wbgnn::ad;

namespace {

ChannelSample random_channel(int m, int k, int nr, int nt, uint64_t seed) {
  ChannelSample h;
  h.m = m;
  h.k = k;
  h.n_r = nr;
  h.n_t = nt;
  h.h.resize(static_cast<size_t>(m) * k * nr * nt);
  Rng rng(seed);
  for (auto& x : h.h) x = {rng.normal(), rng.normal()};
  return h;
}

HybridSolution random_solution(int m, int kp, int nrf, int nt, int nr, double p_tot,
                               uint64_t seed) {
  HybridSolution s;
  s.m = m;
  s.kp = kp;
  s.n_rf = nrf;
  s.n_t = nt;
  s.n_r = nr;
  Rng rng(seed);
  s.w_rf.resize(static_cast<size_t>(nt) * nrf);
  for (auto& w : s.w_rf) {
    const double ph = rng.uniform(-M_PI, M_PI);
    w = {std::cos(ph), std::sin(ph)};
  }
  s.v_rf.resize(static_cast<size_t>(kp) * nr);
  for (auto& v : s.v_rf) {
    const double ph = rng.uniform(-M_PI, M_PI);
    v = {std::cos(ph), std::sin(ph)};
  }
  s.w_bb.resize(static_cast<size_t>(m) * nrf * kp);
  for (auto& b : s.w_bb) b = {rng.normal(), rng.normal()};
  // scale to exact total power
  double used = 0.0;
  for (int rb = 0; rb < m; ++rb)
    for (int i = 0; i < kp; ++i)
      for (int n = 0; n < nt; ++n) {
        std::complex<double> acc = 0.0;
        for (int j = 0; j < nrf; ++j) acc += s.rf(n, j) * s.bb(rb, j, i);
        used += std::norm(acc);
      }
  const double c = std::sqrt(p_tot / used);
  for (auto& b : s.w_bb) b *= c;
  return s;
}

// pack a solution into the batched graph shapes with batch size 1
struct GraphPack {
  Tensor hre, him, wre, wim, bre, bim, vre, vim;
};
GraphPack pack(const ChannelSample& hp, const HybridSolution& s) {
  GraphPack g;
  const int m = hp.m, kpr = hp.k * hp.n_r, nt = hp.n_t;
  g.hre = Tensor(Shape{1, m, kpr, nt, 1});
  g.him = Tensor(Shape{1, m, kpr, nt, 1});
  for (int rb = 0; rb < m; ++rb)
    for (int i = 0; i < kpr; ++i)
      for (int n = 0; n < nt; ++n) {
        g.hre.at({0, rb, i, n, 0}) = hp.at(rb, i, n).real();
        g.him.at({0, rb, i, n, 0}) = hp.at(rb, i, n).imag();
      }
  g.wre = Tensor(Shape{1, 1, 1, s.n_t, s.n_rf});
  g.wim = Tensor(Shape{1, 1, 1, s.n_t, s.n_rf});
  for (int n = 0; n < s.n_t; ++n)
    for (int j = 0; j < s.n_rf; ++j) {
      g.wre.at({0, 0, 0, n, j}) = s.rf(n, j).real();
      g.wim.at({0, 0, 0, n, j}) = s.rf(n, j).imag();
    }
  g.bre = Tensor(Shape{1, s.m, 1, s.kp, s.n_rf});
  g.bim = Tensor(Shape{1, s.m, 1, s.kp, s.n_rf});
  for (int rb = 0; rb < s.m; ++rb)
    for (int i = 0; i < s.kp; ++i)
      for (int j = 0; j < s.n_rf; ++j) {
        g.bre.at({0, rb, 0, i, j}) = s.bb(rb, j, i).real();
        g.bim.at({0, rb, 0, i, j}) = s.bb(rb, j, i).imag();
      }
  g.vre = Tensor(Shape{1, 1, s.kp * s.n_r, 1, 1});
  g.vim = Tensor(Shape{1, 1, s.kp * s.n_r, 1, 1});
  for (int i = 0; i < s.kp * s.n_r; ++i) {
    g.vre.at({0, 0, i, 0, 0}) = s.v_rf[static_cast<size_t>(i)].real();
    g.vim.at({0, 0, i, 0, 0}) = s.v_rf[static_cast<size_t>(i)].imag();
  }
  return g;
}

}  // namespace

TEST_CASE("hard basis selects rows; soft basis mixes them") {
  ChannelSample h = random_channel(2, 3, 2, 2, 1);
  ScheduleBasis b = ScheduleBasis::from_selection(2, 3, {{2, 0}, {1, 2}});
  ChannelSample hp = extract_scheduled(h, b);
  CHECK(hp.k == 2);
  for (int r = 0; r < 2; ++r)
    for (int n = 0; n < 2; ++n) {
      CHECK(hp.at(0, 0 * 2 + r, n) == h.at(0, 2 * 2 + r, n));
      CHECK(hp.at(0, 1 * 2 + r, n) == h.at(0, 0 * 2 + r, n));
      CHECK(hp.at(1, 0 * 2 + r, n) == h.at(1, 1 * 2 + r, n));
    }

  ScheduleBasis soft;
  soft.m = 2;
  soft.kp = 1;
  soft.k = 3;
  soft.hard = false;
  soft.rows = Tensor(Shape{2, 1, 3});
  soft.rows.at({0, 0, 0}) = 0.5;
  soft.rows.at({0, 0, 1}) = 0.5;
  soft.rows.at({1, 0, 2}) = 1.0;
  soft.validate();
  ChannelSample hs = extract_scheduled(h, soft);
  const auto expect = 0.5 * h.at(0, 0, 0) + 0.5 * h.at(0, 2, 0);
  CHECK(std::abs(hs.at(0, 0, 0) - expect) < 1e-15);
}

TEST_CASE("basis validation catches malformed rows") {
  CHECK_THROWS(ScheduleBasis::from_selection(1, 3, {{0, 0}}));  // duplicate user
  CHECK_THROWS(ScheduleBasis::from_selection(1, 3, {{0, 5}}));  // out of range
  ScheduleBasis b;
  b.m = 1;
  b.kp = 1;
  b.k = 2;
  b.hard = false;
  b.rows = Tensor(Shape{1, 1, 2});
  b.rows.at({0, 0, 0}) = 0.7;  // sums to 0.7
  CHECK_THROWS(b.validate());
  b.rows.at({0, 0, 1}) = 0.3;
  b.validate();
  b.rows.at({0, 0, 0}) = -0.1;
  b.rows.at({0, 0, 1}) = 1.1;
  CHECK_THROWS(b.validate());
}

TEST_CASE("sum rate closed form on a scalar link") {
  // one RB, one stream, single antennas everywhere
  ChannelSample h;
  h.m = 1;
  h.k = 1;
  h.n_r = 1;
  h.n_t = 1;
  h.h = {{2.0, 1.0}};
  ScheduleBasis b = ScheduleBasis::from_selection(1, 1, {{0}});
  HybridSolution s;
  s.m = 1;
  s.kp = 1;
  s.n_rf = 1;
  s.n_t = 1;
  s.n_r = 1;
  s.w_rf = {{1.0, 0.0}};
  s.v_rf = {{1.0, 0.0}};
  s.w_bb = {{3.0, 0.0}};
  const double sigma2 = 0.25;
  const double expect = std::log2(1.0 + std::norm(std::complex<double>(2.0, 1.0) * 3.0) / 0.25);
  Tensor per;
  CHECK(sum_rate(h, b, s, sigma2, &per) == doctest::Approx(expect).epsilon(1e-12));
  CHECK(per.at({0, 0}) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("interference lowers the rate") {
  ChannelSample h = random_channel(2, 4, 1, 4, 3);
  ScheduleBasis b = ScheduleBasis::from_selection(2, 4, {{0, 1}, {2, 3}});
  HybridSolution s = random_solution(2, 2, 2, 4, 1, 10.0, 4);
  const double with_inter = sum_rate(h, b, s, 1e-2);
  HybridSolution clean = s;
  // zero the cross terms: each stream on its own RF chain only
  for (int rb = 0; rb < 2; ++rb) {
    clean.bb(rb, 0, 1) = 0.0;
    clean.bb(rb, 1, 0) = 0.0;
  }
  Tensor per_a, per_b;
  sum_rate(h, b, s, 1e-2, &per_a);
  sum_rate(h, b, clean, 1e-2, &per_b);
  CHECK(with_inter > 0.0);
  // per-stream rates are finite and positive-ish sanity
  for (double r : per_a.v) CHECK(r >= 0.0);
  for (double r : per_b.v) CHECK(r >= 0.0);
}

TEST_CASE("constraint report flags modulus and power violations") {
  HybridSolution s = random_solution(1, 2, 2, 3, 1, 5.0, 9);
  ConstraintReport ok = check_constraints(s, 5.0);
  CHECK(ok.rf_modulus < 1e-12);
  CHECK(ok.comb_modulus < 1e-12);
  CHECK(ok.power_rel < 1e-9);

  HybridSolution bad = s;
  bad.rf(0, 0) = {2.0, 0.0};
  ConstraintReport r1 = check_constraints(bad, 5.0);
  CHECK(r1.rf_modulus == doctest::Approx(1.0).epsilon(1e-12));

  HybridSolution scaled = s;
  for (auto& x : scaled.w_bb) x *= 2.0;
  ConstraintReport r2 = check_constraints(scaled, 5.0);
  CHECK(r2.power_rel == doctest::Approx(3.0).epsilon(1e-9));
}

TEST_CASE("features are standardized per RB and survive degenerate input") {
  ChannelSample h = random_channel(3, 5, 2, 4, 11);
  Features f = compute_features(h);
  for (int rb = 0; rb < 3; ++rb) {
    double mean = 0.0, var = 0.0;
    for (int u = 0; u < 5; ++u) mean += f.f_s.at({rb, u});
    mean /= 5;
    for (int u = 0; u < 5; ++u) {
      const double d = f.f_s.at({rb, u}) - mean;
      var += d * d;
    }
    CHECK(std::fabs(mean) < 1e-12);
    CHECK(var / 5 == doctest::Approx(1.0).epsilon(1e-9));
  }
  CHECK(f.zero_norm_count == 0);

  // zero out one user entirely: no NaN, flag counts, rows still finite
  ChannelSample hz = h;
  for (int rb = 0; rb < 3; ++rb)
    for (int r = 0; r < 2; ++r)
      for (int n = 0; n < 4; ++n) hz.at(rb, 2 * 2 + r, n) = 0.0;
  Features fz = compute_features(hz);
  CHECK(fz.zero_norm_count > 0);
  for (double x : fz.f_o.v) CHECK(std::isfinite(x));
  for (double x : fz.f_s.v) CHECK(std::isfinite(x));

  // identical users: std collapses, rows become zeros
  ChannelSample hd = h;
  for (int rb = 0; rb < 3; ++rb)
    for (int u = 1; u < 5; ++u)
      for (int r = 0; r < 2; ++r)
        for (int n = 0; n < 4; ++n) hd.at(rb, u * 2 + r, n) = hd.at(rb, 0 * 2 + r, n);
  Features fd = compute_features(hd);
  for (double x : fd.f_s.v) CHECK(x == 0.0);
}

TEST_CASE("permutation helpers are involutive and compose") {
  ChannelSample h = random_channel(3, 4, 2, 5, 21);
  const std::vector<int> pu{2, 0, 3, 1};
  const std::vector<int> inv{1, 3, 0, 2};
  ChannelSample p = permute_users(h, pu);
  ChannelSample back = permute_users(p, inv);
  for (size_t i = 0; i < h.h.size(); ++i) CHECK(h.h[i] == back.h[i]);

  ChannelSample pr = permute_rbs(h, {2, 0, 1});
  CHECK(pr.at(0, 0, 0) == h.at(2, 0, 0));
  ChannelSample pb = permute_bs_antennas(h, {4, 3, 2, 1, 0});
  CHECK(pb.at(1, 2, 0) == h.at(1, 2, 4));
  ChannelSample pa = permute_user_antennas(h, 1, {1, 0});
  CHECK(pa.at(0, 1 * 2 + 0, 3) == h.at(0, 1 * 2 + 1, 3));
  CHECK(pa.at(0, 0, 3) == h.at(0, 0, 3));

  CHECK_THROWS(permute_users(h, {0, 1, 2}));
  CHECK_THROWS(permute_users(h, {0, 0, 1, 2}));
}

TEST_CASE("rate graph agrees with the plain route") {
  for (uint64_t trial = 0; trial < 8; ++trial) {
    const int m = 2, k = 4, kp = 2, nr = 2, nt = 4, nrf = 2;
    ChannelSample h = random_channel(m, k, nr, nt, 100 + trial);
    ScheduleBasis b = ScheduleBasis::from_selection(m, k, {{0, 2}, {1, 3}});
    HybridSolution s = random_solution(m, kp, nrf, nt, nr, 7.5, 200 + trial);
    const double sigma2 = 3e-3;
    const double plain = sum_rate(h, b, s, sigma2);

    ChannelSample hp = extract_scheduled(h, b);
    GraphPack g = pack(hp, s);
    ad::Tape t;
    cg::CVar hv{t.constant(g.hre), t.constant(g.him)};
    cg::CVar wv{t.constant(g.wre), t.constant(g.wim)};
    cg::CVar bv{t.constant(g.bre), t.constant(g.bim)};
    cg::CVar vv{t.constant(g.vre), t.constant(g.vim)};
    ad::Var se = sum_rate_graph(t, hv, wv, bv, vv, kp, nr, sigma2);
    CHECK(se.val().numel() == 1);
    CHECK(std::fabs(ad::scalar_value(se) - plain) < 1e-12);
  }
}

TEST_CASE("rate graph gradient matches finite differences") {
  const int m = 1, k = 2, kp = 2, nr = 1, nt = 2, nrf = 2;
  ChannelSample h = random_channel(m, k, nr, nt, 55);
  ScheduleBasis b = ScheduleBasis::from_selection(m, k, {{0, 1}});
  HybridSolution s = random_solution(m, kp, nrf, nt, nr, 4.0, 66);
  ChannelSample hp = extract_scheduled(h, b);
  GraphPack g = pack(hp, s);

  auto build = [&](ad::Tape& t, std::vector<ad::Var>& v) {
    cg::CVar hv{v[0], v[1]};
    cg::CVar wv{v[2], v[3]};
    cg::CVar bv{v[4], v[5]};
    cg::CVar vv{v[6], v[7]};
    return sum_rate_graph(t, hv, wv, bv, vv, kp, nr, 0.05);
  };
  const double err = ad::grad_check(
      build, {g.hre, g.him, g.wre, g.wim, g.bre, g.bim, g.vre, g.vim}, 1e-6);
  CHECK(err < 1e-6);
}

TEST_CASE("solution_from_graph unpacks the batched head layout") {
  HybridSolution s = random_solution(2, 2, 2, 3, 2, 1.0, 31);
  ChannelSample hp = random_channel(2, 2, 2, 3, 32);
  GraphPack g = pack(hp, s);
  HybridSolution u = solution_from_graph(g.wre, g.wim, g.bre, g.bim, g.vre, g.vim, 0,
                                         2, 2, 2, 3, 2);
  for (size_t i = 0; i < s.w_rf.size(); ++i) CHECK(u.w_rf[i] == s.w_rf[i]);
  for (size_t i = 0; i < s.w_bb.size(); ++i) CHECK(u.w_bb[i] == s.w_bb[i]);
  for (size_t i = 0; i < s.v_rf.size(); ++i) CHECK(u.v_rf[i] == s.v_rf[i]);
}
