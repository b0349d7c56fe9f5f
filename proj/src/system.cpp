#include "wbgnn/system.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace wbgnn {
namespace {

constexpr double kLn2 = 0.6931471805599453;

void check_perm(const std::vector<int>& perm, int n, const char* what) {
  if (static_cast<int>(perm.size()) != n)
    throw std::invalid_argument(std::string(what) + ": permutation size mismatch");
  std::vector<char> seen(static_cast<size_t>(n), 0);
  for (int p : perm) {
    if (p < 0 || p >= n || seen[static_cast<size_t>(p)])
      throw std::invalid_argument(std::string(what) + ": not a permutation");
    seen[static_cast<size_t>(p)] = 1;
  }
}

}  // namespace

ScheduleBasis ScheduleBasis::from_selection(
    int m, int k, const std::vector<std::vector<int>>& users_per_rb) {
  if (static_cast<int>(users_per_rb.size()) != m)
    throw std::invalid_argument("from_selection: need one user list per RB");
  const int kp = static_cast<int>(users_per_rb[0].size());
  ScheduleBasis b;
  b.m = m;
  b.kp = kp;
  b.k = k;
  b.hard = true;
  b.rows = Tensor(Shape{m, kp, k});
  for (int rb = 0; rb < m; ++rb) {
    if (static_cast<int>(users_per_rb[static_cast<size_t>(rb)].size()) != kp)
      throw std::invalid_argument("from_selection: ragged user lists");
    for (int i = 0; i < kp; ++i) {
      const int u = users_per_rb[static_cast<size_t>(rb)][static_cast<size_t>(i)];
      if (u < 0 || u >= k) throw std::invalid_argument("from_selection: user out of range");
      b.rows.at({rb, i, u}) = 1.0;
    }
  }
  b.validate();
  return b;
}

void ScheduleBasis::validate() const {
  if (rows.shape != Shape{m, kp, k})
    throw std::invalid_argument("schedule basis: bad rows shape");
  if (kp < 1 || kp > k) throw std::invalid_argument("schedule basis: kp out of range");
  for (int rb = 0; rb < m; ++rb)
    for (int i = 0; i < kp; ++i) {
      double s = 0.0;
      int ones = 0;
      for (int u = 0; u < k; ++u) {
        const double w = rows.at({rb, i, u});
        if (w < 0.0) throw std::invalid_argument("schedule basis: negative weight");
        s += w;
        if (w == 1.0) ++ones;
      }
      if (std::fabs(s - 1.0) > 1e-9)
        throw std::invalid_argument("schedule basis: row does not sum to 1");
      if (hard && ones != 1)
        throw std::invalid_argument("schedule basis: hard row is not one-hot");
    }
  if (hard) {
    // no user scheduled twice on one RB
    for (int rb = 0; rb < m; ++rb) {
      std::vector<char> seen(static_cast<size_t>(k), 0);
      for (int i = 0; i < kp; ++i) {
        const int u = selected(rb, i);
        if (seen[static_cast<size_t>(u)])
          throw std::invalid_argument("schedule basis: duplicate user on one RB");
        seen[static_cast<size_t>(u)] = 1;
      }
    }
  }
}

int ScheduleBasis::selected(int rb, int row) const {
  if (!hard) throw std::logic_error("selected: basis is soft");
  for (int u = 0; u < k; ++u)
    if (rows.at({rb, row, u}) == 1.0) return u;
  throw std::logic_error("selected: no one-hot entry");
}

ChannelSample extract_scheduled(const ChannelSample& h, const ScheduleBasis& b) {
  if (b.k != h.k || b.m != h.m)
    throw std::invalid_argument("extract_scheduled: basis/channel mismatch");
  ChannelSample out;
  out.m = h.m;
  out.k = b.kp;
  out.n_r = h.n_r;
  out.n_t = h.n_t;
  out.h.assign(static_cast<size_t>(h.m) * b.kp * h.n_r * h.n_t, {0.0, 0.0});
  for (int rb = 0; rb < h.m; ++rb)
    for (int i = 0; i < b.kp; ++i)
      for (int u = 0; u < h.k; ++u) {
        const double w = b.rows.at({rb, i, u});
        if (w == 0.0) continue;
        for (int r = 0; r < h.n_r; ++r)
          for (int n = 0; n < h.n_t; ++n)
            out.at(rb, i * h.n_r + r, n) += w * h.at(rb, u * h.n_r + r, n);
      }
  return out;
}

double sum_rate(const ChannelSample& h, const ScheduleBasis& b,
                const HybridSolution& sol, double sigma2, Tensor* per_stream) {
  if (sol.m != h.m || sol.kp != b.kp || sol.n_t != h.n_t || sol.n_r != h.n_r)
    throw std::invalid_argument("sum_rate: solution/channel mismatch");
  if (sigma2 <= 0.0) throw std::invalid_argument("sum_rate: sigma2 must be positive");
  const ChannelSample hp = extract_scheduled(h, b);
  if (per_stream) *per_stream = Tensor(Shape{h.m, b.kp});

  double total = 0.0;
  std::vector<std::complex<double>> g(static_cast<size_t>(h.n_t));
  std::vector<std::complex<double>> f(static_cast<size_t>(sol.n_rf));
  for (int rb = 0; rb < h.m; ++rb) {
    for (int tgt = 0; tgt < b.kp; ++tgt) {
      // combiner applied to the target's block
      for (int n = 0; n < h.n_t; ++n) {
        std::complex<double> acc = 0.0;
        for (int r = 0; r < h.n_r; ++r)
          acc += std::conj(sol.v_rf[static_cast<size_t>(tgt * h.n_r + r)]) *
                 hp.at(rb, tgt * h.n_r + r, n);
        g[static_cast<size_t>(n)] = acc;
      }
      for (int j = 0; j < sol.n_rf; ++j) {
        std::complex<double> acc = 0.0;
        for (int n = 0; n < h.n_t; ++n) acc += g[static_cast<size_t>(n)] * sol.rf(n, j);
        f[static_cast<size_t>(j)] = acc;
      }
      double sig = 0.0, inter = 0.0;
      for (int i = 0; i < b.kp; ++i) {
        std::complex<double> e = 0.0;
        for (int j = 0; j < sol.n_rf; ++j) e += f[static_cast<size_t>(j)] * sol.bb(rb, j, i);
        const double p = std::norm(e);
        if (i == tgt)
          sig = p;
        else
          inter += p;
      }
      const double sinr = sig / (inter + h.n_r * sigma2);
      const double rate = std::log1p(sinr) / kLn2;
      if (per_stream) per_stream->at({rb, tgt}) = rate;
      total += rate;
    }
  }
  return total / h.m;
}

ConstraintReport check_constraints(const HybridSolution& sol, double p_tot) {
  ConstraintReport rep;
  for (const auto& w : sol.w_rf)
    rep.rf_modulus = std::max(rep.rf_modulus, std::fabs(std::abs(w) - 1.0));
  for (const auto& v : sol.v_rf)
    rep.comb_modulus = std::max(rep.comb_modulus, std::fabs(std::abs(v) - 1.0));
  double used = 0.0;
  for (int rb = 0; rb < sol.m; ++rb)
    for (int i = 0; i < sol.kp; ++i)
      for (int n = 0; n < sol.n_t; ++n) {
        std::complex<double> acc = 0.0;
        for (int j = 0; j < sol.n_rf; ++j) acc += sol.rf(n, j) * sol.bb(rb, j, i);
        used += std::norm(acc);
      }
  rep.power_rel = std::fabs(used - p_tot) / p_tot;
  return rep;
}

Features compute_features(const ChannelSample& h) {
  Features out;
  const int m = h.m, k = h.k, nr = h.n_r, nt = h.n_t;
  const int kr = k * nr;
  out.f_s = Tensor(Shape{m, k});
  out.f_o = Tensor(Shape{m, kr});

  std::vector<double> norms(static_cast<size_t>(kr));
  for (int rb = 0; rb < m; ++rb) {
    // per-user Frobenius norms
    for (int u = 0; u < k; ++u) {
      double s = 0.0;
      for (int r = 0; r < nr; ++r)
        for (int n = 0; n < nt; ++n) s += std::norm(h.at(rb, u * nr + r, n));
      out.f_s.at({rb, u}) = std::sqrt(s);
    }
    // per-row norms and pairwise correlation means
    for (int i = 0; i < kr; ++i) {
      double s = 0.0;
      for (int n = 0; n < nt; ++n) s += std::norm(h.at(rb, i, n));
      norms[static_cast<size_t>(i)] = std::sqrt(s);
    }
    for (int i = 0; i < kr; ++i) {
      double acc = 0.0;
      for (int j = 0; j < kr; ++j) {
        const double denom = norms[static_cast<size_t>(i)] * norms[static_cast<size_t>(j)];
        if (denom == 0.0) {
          ++out.zero_norm_count;
          continue;
        }
        std::complex<double> dot = 0.0;
        for (int n = 0; n < nt; ++n)
          dot += std::conj(h.at(rb, i, n)) * h.at(rb, j, n);
        acc += std::abs(dot) / denom;
      }
      out.f_o.at({rb, i}) = acc / kr;
    }

    // standardize each feature over its per-RB index set
    auto standardize = [](Tensor& t, int rb2, int n) {
      double mean = 0.0;
      for (int i = 0; i < n; ++i) mean += t.at({rb2, i});
      mean /= n;
      double var = 0.0;
      for (int i = 0; i < n; ++i) {
        const double d = t.at({rb2, i}) - mean;
        var += d * d;
      }
      var /= n;
      const double sd = std::sqrt(var);
      if (sd < 1e-15) {
        for (int i = 0; i < n; ++i) t.at({rb2, i}) = 0.0;
      } else {
        for (int i = 0; i < n; ++i) t.at({rb2, i}) = (t.at({rb2, i}) - mean) / sd;
      }
    };
    standardize(out.f_s, rb, k);
    standardize(out.f_o, rb, kr);
  }
  return out;
}

ChannelSample permute_rbs(const ChannelSample& h, const std::vector<int>& perm) {
  check_perm(perm, h.m, "permute_rbs");
  ChannelSample out = h;
  for (int rb = 0; rb < h.m; ++rb)
    for (int i = 0; i < h.k * h.n_r; ++i)
      for (int n = 0; n < h.n_t; ++n)
        out.at(rb, i, n) = h.at(perm[static_cast<size_t>(rb)], i, n);
  return out;
}

ChannelSample permute_users(const ChannelSample& h, const std::vector<int>& perm) {
  check_perm(perm, h.k, "permute_users");
  ChannelSample out = h;
  for (int rb = 0; rb < h.m; ++rb)
    for (int u = 0; u < h.k; ++u)
      for (int r = 0; r < h.n_r; ++r)
        for (int n = 0; n < h.n_t; ++n)
          out.at(rb, u * h.n_r + r, n) =
              h.at(rb, perm[static_cast<size_t>(u)] * h.n_r + r, n);
  return out;
}

ChannelSample permute_user_antennas(const ChannelSample& h, int user,
                                    const std::vector<int>& perm) {
  if (user < 0 || user >= h.k)
    throw std::invalid_argument("permute_user_antennas: user out of range");
  check_perm(perm, h.n_r, "permute_user_antennas");
  ChannelSample out = h;
  for (int rb = 0; rb < h.m; ++rb)
    for (int r = 0; r < h.n_r; ++r)
      for (int n = 0; n < h.n_t; ++n)
        out.at(rb, user * h.n_r + r, n) =
            h.at(rb, user * h.n_r + perm[static_cast<size_t>(r)], n);
  return out;
}

ChannelSample permute_bs_antennas(const ChannelSample& h, const std::vector<int>& perm) {
  check_perm(perm, h.n_t, "permute_bs_antennas");
  ChannelSample out = h;
  for (int rb = 0; rb < h.m; ++rb)
    for (int i = 0; i < h.k * h.n_r; ++i)
      for (int n = 0; n < h.n_t; ++n)
        out.at(rb, i, n) = h.at(rb, i, perm[static_cast<size_t>(n)]);
  return out;
}

// ---- tape-side compositions ----

namespace cg {

CVar cmul(CVar a, CVar b) {
  return {ad::sub(ad::mul(a.re, b.re), ad::mul(a.im, b.im)),
          ad::add(ad::mul(a.re, b.im), ad::mul(a.im, b.re))};
}

CVar cconj_mul(CVar a, CVar b) {
  return {ad::add(ad::mul(a.re, b.re), ad::mul(a.im, b.im)),
          ad::sub(ad::mul(a.re, b.im), ad::mul(a.im, b.re))};
}

CVar cadd(CVar a, CVar b) { return {ad::add(a.re, b.re), ad::add(a.im, b.im)}; }

ad::Var abs2(CVar a) { return ad::add(ad::square(a.re), ad::square(a.im)); }

}  // namespace cg

ad::Var sum_rate_graph(ad::Tape& t, cg::CVar hp, cg::CVar wrf, cg::CVar wbb,
                       cg::CVar v, int kp, int n_r, double sigma2) {
  if (sigma2 <= 0.0) throw std::invalid_argument("sum_rate_graph: sigma2 must be positive");
  const Shape& hs = hp.re.shape();
  const int64_t b = hs[0], m = hs[1], nt = hs[3];
  const int64_t n_rf = wrf.re.shape()[4];

  // combiner onto the target block: g = sum_r conj(v) h'
  cg::CVar vb = {ad::broadcast(ad::broadcast(v.re, 1, m), 3, nt),
                 ad::broadcast(ad::broadcast(v.im, 1, m), 3, nt)};
  cg::CVar gq = cg::cconj_mul(vb, hp);
  cg::CVar g = {ad::group_sum(gq.re, 2, n_r),
                ad::group_sum(gq.im, 2, n_r)};  // (B,M,K',NT,1)

  // through the analog stage: f = g W_RF, contraction over NT
  cg::CVar gb = {ad::broadcast(g.re, 4, n_rf), ad::broadcast(g.im, 4, n_rf)};
  cg::CVar wb = {ad::broadcast(ad::broadcast(wrf.re, 1, m), 2, kp),
                 ad::broadcast(ad::broadcast(wrf.im, 1, m), 2, kp)};
  cg::CVar prod = cg::cmul(gb, wb);
  cg::CVar f = {ad::axis_sum(prod.re, 3), ad::axis_sum(prod.im, 3)};  // (B,M,K',1,NRF)

  // through baseband columns: e[tgt, slot] = sum_j f[tgt, j] w_bb[slot, j]
  cg::CVar fb = {ad::broadcast(f.re, 3, kp), ad::broadcast(f.im, 3, kp)};
  cg::CVar bbb = {ad::broadcast(wbb.re, 2, kp), ad::broadcast(wbb.im, 2, kp)};
  cg::CVar eprod = cg::cmul(fb, bbb);
  cg::CVar e = {ad::axis_sum(eprod.re, 4), ad::axis_sum(eprod.im, 4)};  // (B,M,K',K',1)
  ad::Var p = cg::abs2(e);

  ad::Var noise = t.constant(Tensor::full(Shape{b, m, 1, 1, 1}, n_r * sigma2));
  ad::Var acc;
  for (int tgt = 0; tgt < kp; ++tgt) {
    ad::Var row = ad::slice_axis(p, 2, tgt, 1);           // (B,M,1,K',1)
    ad::Var num = ad::slice_axis(row, 3, tgt, 1);         // (B,M,1,1,1)
    ad::Var den = ad::add(ad::sub(ad::axis_sum(row, 3), num), noise);
    ad::Var sinr = ad::mul(num, ad::reciprocal(den));
    ad::Var one = t.constant(Tensor::full(Shape{b, m, 1, 1, 1}, 1.0));
    ad::Var rate = ad::scalar_mul(ad::log_(ad::add(sinr, one)), 1.0 / kLn2);
    acc = tgt == 0 ? rate : ad::add(acc, rate);
  }
  return ad::scalar_mul(ad::axis_sum(acc, 1), 1.0 / static_cast<double>(m));
}

BatchLeaves make_batch_leaves(ad::Tape& t, const Dataset& ds,
                              const std::vector<int64_t>& idx,
                              const std::vector<Features>& feats) {
  const int64_t b = static_cast<int64_t>(idx.size());
  const int m = ds.cfg.m, k = ds.cfg.k, nr = ds.cfg.n_r, nt = ds.cfg.n_t;
  const int64_t kr = static_cast<int64_t>(k) * nr;
  Tensor hre(Shape{b, m, kr, nt, 1}), him(Shape{b, m, kr, nt, 1});
  Tensor fs(Shape{b, m, k, 1, 1}), fo(Shape{b, m, kr, 1, 1});
  const size_t per = static_cast<size_t>(m) * static_cast<size_t>(kr) * nt;
  for (int64_t i = 0; i < b; ++i) {
    const int64_t s = idx[static_cast<size_t>(i)];
    const std::complex<double>* src = ds.data.data() + per * static_cast<size_t>(s);
    for (size_t j = 0; j < per; ++j) {
      hre[i * static_cast<int64_t>(per) + static_cast<int64_t>(j)] = src[j].real();
      him[i * static_cast<int64_t>(per) + static_cast<int64_t>(j)] = src[j].imag();
    }
    const Features& f = feats[static_cast<size_t>(s)];
    for (int64_t j = 0; j < static_cast<int64_t>(m) * k; ++j)
      fs[i * m * k + j] = f.f_s[j];
    for (int64_t j = 0; j < static_cast<int64_t>(m) * kr; ++j)
      fo[i * m * kr + j] = f.f_o[j];
  }
  return {t.constant(std::move(hre)), t.constant(std::move(him)),
          t.constant(std::move(fs)), t.constant(std::move(fo))};
}

HybridSolution solution_from_graph(const Tensor& wrf_re, const Tensor& wrf_im,
                                   const Tensor& wbb_re, const Tensor& wbb_im,
                                   const Tensor& v_re, const Tensor& v_im,
                                   int64_t batch_index, int m, int kp, int n_rf,
                                   int n_t, int n_r) {
  HybridSolution sol;
  sol.m = m;
  sol.kp = kp;
  sol.n_rf = n_rf;
  sol.n_t = n_t;
  sol.n_r = n_r;
  sol.w_rf.resize(static_cast<size_t>(n_t) * n_rf);
  sol.w_bb.resize(static_cast<size_t>(m) * n_rf * kp);
  sol.v_rf.resize(static_cast<size_t>(kp) * n_r);

  // wrf: (B,1,1,NT,NRF)
  const int64_t wrf_off = batch_index * n_t * n_rf;
  for (int n = 0; n < n_t; ++n)
    for (int j = 0; j < n_rf; ++j)
      sol.rf(n, j) = {wrf_re[wrf_off + n * n_rf + j], wrf_im[wrf_off + n * n_rf + j]};
  // wbb: (B,M,1,KP,NRF) -> (m, j, i)
  const int64_t bb_off = batch_index * m * kp * n_rf;
  for (int rb = 0; rb < m; ++rb)
    for (int i = 0; i < kp; ++i)
      for (int j = 0; j < n_rf; ++j) {
        const int64_t src = bb_off + (static_cast<int64_t>(rb) * kp + i) * n_rf + j;
        sol.bb(rb, j, i) = {wbb_re[src], wbb_im[src]};
      }
  // v: (B,1,KPR,1,1)
  const int64_t v_off = batch_index * kp * n_r;
  for (int i = 0; i < kp * n_r; ++i)
    sol.v_rf[static_cast<size_t>(i)] = {v_re[v_off + i], v_im[v_off + i]};
  return sol;
}

}  // namespace wbgnn
