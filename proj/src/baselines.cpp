#include "wbgnn/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace wbgnn {

namespace {

using cd = std::complex<double>;

CMat cidentity(int n) {
  CMat a(static_cast<size_t>(n), CVec(static_cast<size_t>(n)));
  for (int i = 0; i < n; ++i) a[static_cast<size_t>(i)][static_cast<size_t>(i)] = 1.0;
  return a;
}

// Gauss-Jordan with partial pivoting; sizes here stay tiny
CMat cinv(CMat a) {
  const int n = static_cast<int>(a.size());
  CMat inv = cidentity(n);
  for (int c = 0; c < n; ++c) {
    int piv = c;
    for (int r = c + 1; r < n; ++r)
      if (std::abs(a[static_cast<size_t>(r)][static_cast<size_t>(c)]) >
          std::abs(a[static_cast<size_t>(piv)][static_cast<size_t>(c)]))
        piv = r;
    if (std::abs(a[static_cast<size_t>(piv)][static_cast<size_t>(c)]) < 1e-300)
      throw std::runtime_error("cinv: singular matrix");
    std::swap(a[static_cast<size_t>(piv)], a[static_cast<size_t>(c)]);
    std::swap(inv[static_cast<size_t>(piv)], inv[static_cast<size_t>(c)]);
    const cd d = a[static_cast<size_t>(c)][static_cast<size_t>(c)];
    for (int j = 0; j < n; ++j) {
      a[static_cast<size_t>(c)][static_cast<size_t>(j)] /= d;
      inv[static_cast<size_t>(c)][static_cast<size_t>(j)] /= d;
    }
    for (int r = 0; r < n; ++r) {
      if (r == c) continue;
      const cd f = a[static_cast<size_t>(r)][static_cast<size_t>(c)];
      if (f == 0.0) continue;
      for (int j = 0; j < n; ++j) {
        a[static_cast<size_t>(r)][static_cast<size_t>(j)] -=
            f * a[static_cast<size_t>(c)][static_cast<size_t>(j)];
        inv[static_cast<size_t>(r)][static_cast<size_t>(j)] -=
            f * inv[static_cast<size_t>(c)][static_cast<size_t>(j)];
      }
    }
  }
  return inv;
}

CVec matvec(const CMat& a, const CVec& x) {
  CVec y(a.size());
  for (size_t r = 0; r < a.size(); ++r) {
    cd acc = 0.0;
    for (size_t j = 0; j < x.size(); ++j) acc += a[r][j] * x[j];
    y[r] = acc;
  }
  return y;
}

cd dot_conj(const CVec& a, const CVec& b) {  // a^H b
  cd acc = 0.0;
  for (size_t i = 0; i < a.size(); ++i) acc += std::conj(a[i]) * b[i];
  return acc;
}

cd dot_plain(const CVec& a, const CVec& b) {  // a^T b
  cd acc = 0.0;
  for (size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double norm2(const CVec& a) {
  double acc = 0.0;
  for (const cd& x : a) acc += std::norm(x);
  return acc;
}

cd phase_conj(cd a) {  // conj(a)/|a|, or 1 for a = 0
  const double m = std::abs(a);
  if (m < 1e-300) return {1.0, 0.0};
  return std::conj(a) / m;
}

// principal eigenvector of H H^H by fixed-count power iteration
CVec principal_combiner(const ChannelSample& hp, int rb, int user) {
  const int nr = hp.n_r, nt = hp.n_t;
  if (nr == 1) return {cd{1.0, 0.0}};
  CMat a(static_cast<size_t>(nr), CVec(static_cast<size_t>(nr)));
  for (int r = 0; r < nr; ++r)
    for (int s = 0; s < nr; ++s) {
      cd acc = 0.0;
      for (int n = 0; n < nt; ++n)
        acc += hp.at(rb, user * nr + r, n) * std::conj(hp.at(rb, user * nr + s, n));
      a[static_cast<size_t>(r)][static_cast<size_t>(s)] = acc;
    }
  CVec v(static_cast<size_t>(nr));
  v[0] = 1.0;
  for (int it = 0; it < 50; ++it) {
    CVec w = matvec(a, v);
    const double n2 = norm2(w);
    if (n2 < 1e-300) break;
    const double inv = 1.0 / std::sqrt(n2);
    for (cd& x : w) x *= inv;
    v = std::move(w);
  }
  return v;
}

// combiner-reduced row of one user on one RB
CVec effective_row(const ChannelSample& hp, int rb, int user, const CVec& v) {
  CVec g(static_cast<size_t>(hp.n_t));
  for (int n = 0; n < hp.n_t; ++n) {
    cd acc = 0.0;
    for (int r = 0; r < hp.n_r; ++r)
      acc += std::conj(v[static_cast<size_t>(r)]) * hp.at(rb, user * hp.n_r + r, n);
    g[static_cast<size_t>(n)] = acc;
  }
  return g;
}

// rows^H (rows rows^H + ridge I)^-1: regularized pseudo-inverse columns
CMat zf_columns(const CMat& rows) {
  const int k = static_cast<int>(rows.size());
  CMat gram(static_cast<size_t>(k), CVec(static_cast<size_t>(k)));
  double tr = 0.0;
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) {
      gram[static_cast<size_t>(i)][static_cast<size_t>(j)] =
          dot_conj(rows[static_cast<size_t>(j)], rows[static_cast<size_t>(i)]);
      if (i == j) tr += gram[static_cast<size_t>(i)][static_cast<size_t>(j)].real();
    }
  const double ridge = 1e-6 * tr / k;
  for (int i = 0; i < k; ++i) gram[static_cast<size_t>(i)][static_cast<size_t>(i)] += ridge;
  CMat ginv = cinv(gram);
  const size_t nt = rows.front().size();
  CMat w(static_cast<size_t>(k), CVec(nt));  // w[i] = column for stream i
  for (int i = 0; i < k; ++i)
    for (size_t n = 0; n < nt; ++n) {
      cd acc = 0.0;
      for (int j = 0; j < k; ++j)
        acc += std::conj(rows[static_cast<size_t>(j)][n]) *
               ginv[static_cast<size_t>(j)][static_cast<size_t>(i)];
      w[static_cast<size_t>(i)][n] = acc;
    }
  return w;
}

std::vector<std::vector<int>> all_combos(int k, int kp) {
  std::vector<std::vector<int>> out;
  std::vector<int> c(static_cast<size_t>(kp));
  std::iota(c.begin(), c.end(), 0);
  while (true) {
    out.push_back(c);
    int i = kp - 1;
    while (i >= 0 && c[static_cast<size_t>(i)] == k - kp + i) --i;
    if (i < 0) break;
    ++c[static_cast<size_t>(i)];
    for (int j = i + 1; j < kp; ++j)
      c[static_cast<size_t>(j)] = c[static_cast<size_t>(j - 1)] + 1;
  }
  return out;
}

}  // namespace

ScheduleBasis schedule_strongest(const ChannelSample& h, int kp) {
  if (kp < 1 || kp > h.k) throw std::invalid_argument("schedule_strongest: bad stream count");
  std::vector<double> energy(static_cast<size_t>(h.k), 0.0);
  for (int m = 0; m < h.m; ++m)
    for (int u = 0; u < h.k; ++u)
      for (int r = 0; r < h.n_r; ++r)
        for (int n = 0; n < h.n_t; ++n)
          energy[static_cast<size_t>(u)] += std::norm(h.at(m, u * h.n_r + r, n));
  std::vector<int> order(static_cast<size_t>(h.k));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return energy[static_cast<size_t>(a)] > energy[static_cast<size_t>(b)];
  });
  std::vector<int> pick(order.begin(), order.begin() + kp);
  std::vector<std::vector<int>> sel(static_cast<size_t>(h.m), pick);
  return ScheduleBasis::from_selection(h.m, h.k, sel);
}

ChannelSample rb_slice(const ChannelSample& h, int rb) {
  if (rb < 0 || rb >= h.m) throw std::invalid_argument("rb_slice: bad index");
  ChannelSample out;
  out.m = 1;
  out.k = h.k;
  out.n_r = h.n_r;
  out.n_t = h.n_t;
  const size_t per = static_cast<size_t>(h.k) * h.n_r * h.n_t;
  out.h.assign(h.h.begin() + static_cast<int64_t>(per) * rb,
               h.h.begin() + static_cast<int64_t>(per) * (rb + 1));
  return out;
}

ScheduleBasis identity_basis(int m, int kp) {
  std::vector<int> all(static_cast<size_t>(kp));
  std::iota(all.begin(), all.end(), 0);
  return ScheduleBasis::from_selection(m, kp, std::vector<std::vector<int>>(
                                                  static_cast<size_t>(m), all));
}

double digital_zf_se(const ChannelSample& hp, double p_tot, double sigma2) {
  if (!(p_tot > 0.0) || !(sigma2 > 0.0))
    throw std::invalid_argument("digital_zf_se: bad budget or noise");
  const int m = hp.m, kp = hp.k;
  const double p_stream = p_tot / (static_cast<double>(m) * kp);
  double total = 0.0;
  for (int rb = 0; rb < m; ++rb) {
    CMat rows(static_cast<size_t>(kp));
    for (int i = 0; i < kp; ++i) {
      CVec v = principal_combiner(hp, rb, i);
      rows[static_cast<size_t>(i)] = effective_row(hp, rb, i, v);
    }
    CMat w = zf_columns(rows);
    for (int i = 0; i < kp; ++i) {
      const double n2 = norm2(w[static_cast<size_t>(i)]);
      const double s = n2 < 1e-300 ? 0.0 : std::sqrt(p_stream / n2);
      for (cd& x : w[static_cast<size_t>(i)]) x *= s;
    }
    for (int i = 0; i < kp; ++i) {
      double sig = 0.0, inter = 0.0;
      for (int j = 0; j < kp; ++j) {
        // combiner-reduced rows multiply precoder columns without conjugation
        const double q =
            std::norm(dot_plain(rows[static_cast<size_t>(i)], w[static_cast<size_t>(j)]));
        (i == j ? sig : inter) += q;
      }
      total += std::log2(1.0 + sig / (inter + sigma2));
    }
  }
  return total / m;
}

HybridSolution matched_phase(const ChannelSample& hp, double p_tot, double sigma2) {
  (void)sigma2;
  if (!(p_tot > 0.0)) throw std::invalid_argument("matched_phase: bad budget");
  const int m = hp.m, kp = hp.k, nr = hp.n_r, nt = hp.n_t;
  HybridSolution sol;
  sol.m = m;
  sol.kp = kp;
  sol.n_rf = kp;
  sol.n_t = nt;
  sol.n_r = nr;
  sol.w_rf.resize(static_cast<size_t>(nt) * kp);
  sol.v_rf.resize(static_cast<size_t>(kp) * nr);
  sol.w_bb.assign(static_cast<size_t>(m) * kp * kp, cd{0.0, 0.0});

  for (int u = 0; u < kp; ++u) {
    for (int n = 0; n < nt; ++n) {
      cd agg = 0.0;
      for (int rb = 0; rb < m; ++rb)
        for (int r = 0; r < nr; ++r) agg += hp.at(rb, u * nr + r, n);
      sol.rf(n, u) = phase_conj(agg);
    }
    for (int r = 0; r < nr; ++r) {
      cd beam = 0.0;
      for (int rb = 0; rb < m; ++rb)
        for (int n = 0; n < nt; ++n) beam += hp.at(rb, u * nr + r, n) * sol.rf(n, u);
      sol.v_rf[static_cast<size_t>(u * nr + r)] = phase_conj(beam);
    }
  }

  const double p_stream = p_tot / (static_cast<double>(m) * kp);
  for (int rb = 0; rb < m; ++rb) {
    CMat eff(static_cast<size_t>(kp), CVec(static_cast<size_t>(kp)));
    for (int i = 0; i < kp; ++i) {
      CVec g(static_cast<size_t>(nt));
      for (int n = 0; n < nt; ++n) {
        cd acc = 0.0;
        for (int r = 0; r < nr; ++r)
          acc += std::conj(sol.v_rf[static_cast<size_t>(i * nr + r)]) *
                 hp.at(rb, i * nr + r, n);
        g[static_cast<size_t>(n)] = acc;
      }
      for (int j = 0; j < kp; ++j) {
        cd acc = 0.0;
        for (int n = 0; n < nt; ++n) acc += g[static_cast<size_t>(n)] * sol.rf(n, j);
        eff[static_cast<size_t>(i)][static_cast<size_t>(j)] = acc;
      }
    }
    CMat cols = zf_columns(eff);
    for (int i = 0; i < kp; ++i) {
      CVec composed(static_cast<size_t>(nt));
      for (int n = 0; n < nt; ++n) {
        cd acc = 0.0;
        for (int j = 0; j < kp; ++j)
          acc += sol.rf(n, j) * cols[static_cast<size_t>(i)][static_cast<size_t>(j)];
        composed[static_cast<size_t>(n)] = acc;
      }
      const double n2 = norm2(composed);
      if (n2 < 1e-300) throw std::runtime_error("matched_phase: degenerate channel");
      const double s = std::sqrt(p_stream / n2);
      for (int j = 0; j < kp; ++j)
        sol.bb(rb, j, i) = cols[static_cast<size_t>(i)][static_cast<size_t>(j)] * s;
    }
  }
  return sol;
}

PrecodeFn digital_zf_fn(double sigma2) {
  return [sigma2](const ChannelSample& hp, double p_tot) {
    return digital_zf_se(hp, p_tot, sigma2);
  };
}

PrecodeFn matched_phase_fn(double sigma2) {
  return [sigma2](const ChannelSample& hp, double p_tot) {
    HybridSolution sol = matched_phase(hp, p_tot, sigma2);
    return sum_rate(hp, identity_basis(hp.m, hp.k), sol, sigma2);
  };
}

SearchResult greedy_schedule(const ChannelSample& h, int kp, const PrecodeFn& fn,
                             double p_tot) {
  if (kp < 1 || kp > h.k) throw std::invalid_argument("greedy_schedule: bad stream count");
  const double p_rb = p_tot / h.m;
  std::vector<std::vector<int>> sel(static_cast<size_t>(h.m));
  double total = 0.0;
  for (int rb = 0; rb < h.m; ++rb) {
    ChannelSample slice = rb_slice(h, rb);
    std::vector<int>& cur = sel[static_cast<size_t>(rb)];
    double best_round = 0.0;
    for (int round = 0; round < kp; ++round) {
      int best_u = -1;
      double best_se = 0.0;
      for (int u = 0; u < h.k; ++u) {
        if (std::find(cur.begin(), cur.end(), u) != cur.end()) continue;
        std::vector<int> cand = cur;
        cand.push_back(u);
        ScheduleBasis b = ScheduleBasis::from_selection(1, h.k, {cand});
        const double se = fn(extract_scheduled(slice, b), p_rb);
        if (best_u < 0 || se > best_se) {
          best_u = u;
          best_se = se;
        }
      }
      cur.push_back(best_u);
      best_round = best_se;
    }
    total += best_round;
  }
  SearchResult out;
  out.basis = ScheduleBasis::from_selection(h.m, h.k, sel);
  out.se = total / h.m;
  return out;
}

SearchResult exhaustive_schedule(const ChannelSample& h, int kp, const PrecodeFn& fn,
                                 double p_tot, bool shared_analog) {
  if (kp < 1 || kp > h.k)
    throw std::invalid_argument("exhaustive_schedule: bad stream count");
  const std::vector<std::vector<int>> combos = all_combos(h.k, kp);
  SearchResult out;
  if (!shared_analog) {
    const double p_rb = p_tot / h.m;
    std::vector<std::vector<int>> sel(static_cast<size_t>(h.m));
    double total = 0.0;
    for (int rb = 0; rb < h.m; ++rb) {
      ChannelSample slice = rb_slice(h, rb);
      double best_se = 0.0;
      size_t best_c = 0;
      for (size_t c = 0; c < combos.size(); ++c) {
        ScheduleBasis b = ScheduleBasis::from_selection(1, h.k, {combos[c]});
        const double se = fn(extract_scheduled(slice, b), p_rb);
        if (c == 0 || se > best_se) {
          best_se = se;
          best_c = c;
        }
      }
      sel[static_cast<size_t>(rb)] = combos[best_c];
      total += best_se;
    }
    out.basis = ScheduleBasis::from_selection(h.m, h.k, sel);
    out.se = total / h.m;
    return out;
  }

  double count = 1.0;
  for (int rb = 0; rb < h.m; ++rb) {
    count *= static_cast<double>(combos.size());
    if (count > 1e6)
      throw std::invalid_argument("exhaustive_schedule: shared-analog product too large");
  }
  std::vector<size_t> idx(static_cast<size_t>(h.m), 0);
  bool first = true;
  while (true) {
    std::vector<std::vector<int>> sel;
    sel.reserve(static_cast<size_t>(h.m));
    for (size_t i : idx) sel.push_back(combos[i]);
    ScheduleBasis b = ScheduleBasis::from_selection(h.m, h.k, sel);
    const double se = fn(extract_scheduled(h, b), p_tot);
    if (first || se > out.se) {
      out.se = se;
      out.basis = b;
      first = false;
    }
    int rb = h.m - 1;
    while (rb >= 0 && ++idx[static_cast<size_t>(rb)] == combos.size()) {
      idx[static_cast<size_t>(rb)] = 0;
      --rb;
    }
    if (rb < 0) break;
  }
  return out;
}

CMat miso_precoder(const MisoInstance& in, bool woodbury) {
  const int k = static_cast<int>(in.h.size());
  if (k == 0 || in.lam.size() != in.h.size() || in.p.size() != in.h.size())
    throw std::invalid_argument("miso_precoder: inconsistent instance");
  const int nt = static_cast<int>(in.h.front().size());
  if (!(in.sigma2 > 0.0)) throw std::invalid_argument("miso_precoder: bad noise power");

  CMat u(static_cast<size_t>(k), CVec(static_cast<size_t>(nt)));  // scaled rows
  for (int j = 0; j < k; ++j) {
    const double s = std::sqrt(in.lam[static_cast<size_t>(j)] / in.sigma2);
    for (int n = 0; n < nt; ++n)
      u[static_cast<size_t>(j)][static_cast<size_t>(n)] =
          s * in.h[static_cast<size_t>(j)][static_cast<size_t>(n)];
  }

  CMat dirs(static_cast<size_t>(k), CVec(static_cast<size_t>(nt)));
  if (!woodbury) {
    CMat a = cidentity(nt);  // I + sum_j u_j u_j^H
    for (int j = 0; j < k; ++j)
      for (int r = 0; r < nt; ++r)
        for (int c = 0; c < nt; ++c)
          a[static_cast<size_t>(r)][static_cast<size_t>(c)] +=
              u[static_cast<size_t>(j)][static_cast<size_t>(r)] *
              std::conj(u[static_cast<size_t>(j)][static_cast<size_t>(c)]);
    CMat ainv = cinv(a);
    for (int i = 0; i < k; ++i) dirs[static_cast<size_t>(i)] = matvec(ainv, in.h[static_cast<size_t>(i)]);
  } else {
    CMat g = cidentity(k);  // I + U^H U in the K x K sense
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < k; ++j)
        g[static_cast<size_t>(i)][static_cast<size_t>(j)] +=
            dot_conj(u[static_cast<size_t>(i)], u[static_cast<size_t>(j)]);
    CMat ginv = cinv(g);
    for (int i = 0; i < k; ++i) {
      CVec uh(static_cast<size_t>(k));  // U^H h_i
      for (int j = 0; j < k; ++j)
        uh[static_cast<size_t>(j)] =
            dot_conj(u[static_cast<size_t>(j)], in.h[static_cast<size_t>(i)]);
      CVec coef = matvec(ginv, uh);
      CVec d = in.h[static_cast<size_t>(i)];
      for (int j = 0; j < k; ++j)
        for (int n = 0; n < nt; ++n)
          d[static_cast<size_t>(n)] -= u[static_cast<size_t>(j)][static_cast<size_t>(n)] *
                                       coef[static_cast<size_t>(j)];
      dirs[static_cast<size_t>(i)] = std::move(d);
    }
  }

  CMat w(static_cast<size_t>(k), CVec(static_cast<size_t>(nt)));
  for (int i = 0; i < k; ++i) {
    const double n2 = norm2(dirs[static_cast<size_t>(i)]);
    if (n2 < 1e-300) continue;  // zero channel keeps a zero precoder
    const double s = std::sqrt(in.p[static_cast<size_t>(i)] / n2);
    for (int n = 0; n < nt; ++n)
      w[static_cast<size_t>(i)][static_cast<size_t>(n)] =
          s * dirs[static_cast<size_t>(i)][static_cast<size_t>(n)];
  }
  return w;
}

double miso_sum_rate(const CMat& h, const CMat& w, double sigma2) {
  if (h.size() != w.size()) throw std::invalid_argument("miso_sum_rate: size mismatch");
  double total = 0.0;
  for (size_t i = 0; i < h.size(); ++i) {
    double sig = 0.0, inter = 0.0;
    for (size_t j = 0; j < w.size(); ++j) {
      const double q = std::norm(dot_conj(h[i], w[j]));
      (i == j ? sig : inter) += q;
    }
    total += std::log2(1.0 + sig / (inter + sigma2));
  }
  return total;
}

double duplicate_user_gap(const CVec& h, double p, double sigma2) {
  const double n2 = norm2(h);
  if (n2 < 1e-300) return 0.0;
  CVec w(h.size());
  const double s = std::sqrt(p / (2.0 * n2));
  for (size_t n = 0; n < h.size(); ++n) w[n] = s * h[n];
  CMat both{h, h};
  CVec lop(h.size());
  for (size_t n = 0; n < h.size(); ++n) lop[n] = std::sqrt(2.0) * w[n];
  const double even = miso_sum_rate(both, {w, w}, sigma2);
  const double lopsided = miso_sum_rate(both, {lop, CVec(h.size())}, sigma2);
  return lopsided - even;
}

double pair_threshold(double h_t, double h_i) {
  if (!(h_t > 0.0) || !(h_i > 0.0)) throw std::invalid_argument("pair_threshold: bad gains");
  return 2.0 / (std::sqrt(h_t * h_t + 4.0 * h_i * h_i) - h_t);
}

double pair_sum_rate(double h_t, double h_i, double p1, double p2, double sigma2) {
  return std::log2(1.0 + h_t * p1 / (sigma2 + h_i * p2)) +
         std::log2(1.0 + h_t * p2 / (sigma2 + h_i * p1));
}

std::pair<double, double> power_control_2pair(double h_t, double h_i, double p_max,
                                              double sigma2) {
  if (!(p_max > 0.0) || !(sigma2 > 0.0))
    throw std::invalid_argument("power_control_2pair: bad bounds");
  if (pair_threshold(h_t, h_i) > p_max / sigma2) return {p_max, p_max};
  return {p_max, 0.0};
}

std::pair<double, double> pair_grid_best(double h_t, double h_i, double p_max,
                                         double sigma2, int grid) {
  if (grid < 2) throw std::invalid_argument("pair_grid_best: bad resolution");
  double best = -1.0;
  std::pair<double, double> arg{0.0, 0.0};
  for (int i = 0; i < grid; ++i)
    for (int j = 0; j < grid; ++j) {
      const double p1 = p_max * i / (grid - 1);
      const double p2 = p_max * j / (grid - 1);
      const double r = pair_sum_rate(h_t, h_i, p1, p2, sigma2);
      if (r > best) {
        best = r;
        arg = {p1, p2};
      }
    }
  return arg;
}

MisoSampler default_miso_sampler(int k, int n_t) {
  if (k < 1 || n_t < 1) throw std::invalid_argument("default_miso_sampler: bad sizes");
  return [k, n_t](Rng& rng) {
    MisoInstance in;
    in.h.assign(static_cast<size_t>(k), CVec(static_cast<size_t>(n_t)));
    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    for (auto& row : in.h)
      for (cd& x : row) x = {rng.normal() * inv_sqrt2, rng.normal() * inv_sqrt2};
    in.lam.resize(static_cast<size_t>(k));
    in.p.resize(static_cast<size_t>(k));
    for (double& x : in.lam) x = rng.uniform(0.5, 2.0);
    for (double& x : in.p) x = rng.uniform(0.5, 2.0);
    in.sigma2 = rng.uniform(0.5, 2.0);
    return in;
  };
}

MisoPolicy miso_policy(bool woodbury) {
  return [woodbury](const MisoInstance& in) { return miso_precoder(in, woodbury); };
}

SpsdReport spsd_check(const std::string& axis, int64_t samples, uint64_t seed,
                      double tol, const MisoSampler& sampler, const MisoPolicy& policy) {
  if (axis != "antenna" && axis != "user")
    throw std::invalid_argument("spsd_check: axis must be antenna or user");
  if (samples < 1) throw std::invalid_argument("spsd_check: bad sample count");
  Rng rng(seed);
  int64_t agree = 0;
  double worst = 0.0;
  for (int64_t s = 0; s < samples; ++s) {
    MisoInstance in = sampler(rng);
    if (axis == "antenna") {
      MisoInstance dup = in;
      const size_t last = dup.h.front().size() - 1;
      for (CVec& row : dup.h) row.push_back(row[last]);
      CMat w = policy(dup);
      double dev = 0.0;
      for (const CVec& wk : w) dev = std::max(dev, std::abs(wk[last] - wk[last + 1]));
      worst = std::max(worst, dev);
      if (dev <= tol) ++agree;
    } else {
      const double gap = duplicate_user_gap(in.h.front(), in.p.front(), in.sigma2);
      worst = std::max(worst, gap);
      if (gap <= tol) ++agree;
    }
  }
  SpsdReport r;
  r.axis = axis;
  r.samples = samples;
  r.agreement_rate = static_cast<double>(agree) / static_cast<double>(samples);
  r.max_deviation = worst;
  return r;
}

}  // namespace wbgnn
