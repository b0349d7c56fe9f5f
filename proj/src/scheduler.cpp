#include "wbgnn/scheduler.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace wbgnn {

namespace {

// One equivariant update: self plus four neighbor means (other RBs, other
// users' antennas, same user's other antennas, other BS antennas), each with
// its own weight matrix. Means are scaled by the full axis length.
ad::Var update5(ad::Var x, const std::vector<ad::Var>& w, int64_t n_r) {
  const Shape& s = x.shape();
  const int64_t m = s.d[1], knr = s.d[2], nt = s.d[3];
  ad::Var sum_m = ad::broadcast(ad::axis_sum(x, 1), 1, m);
  ad::Var sum_kr = ad::broadcast(ad::axis_sum(x, 2), 2, knr);
  ad::Var grp = ad::group_broadcast(ad::group_sum(x, 2, n_r), 2, n_r);
  ad::Var sum_n = ad::broadcast(ad::axis_sum(x, 3), 3, nt);

  ad::Var y = ad::matmul(x, w[0]);
  y = ad::add(y, ad::matmul(ad::scalar_mul(ad::sub(sum_m, x), 1.0 / m), w[1]));
  y = ad::add(y, ad::matmul(ad::scalar_mul(ad::sub(sum_kr, grp), 1.0 / knr), w[2]));
  y = ad::add(y, ad::matmul(ad::scalar_mul(ad::sub(grp, x), 1.0 / n_r), w[3]));
  y = ad::add(y, ad::matmul(ad::scalar_mul(ad::sub(sum_n, x), 1.0 / nt), w[4]));
  return y;
}

// lift a per-user map (B, M, K) onto the (B, M, K*N_R, N_T, 1) grid
ad::Var lift_user(ad::Tape&, ad::Var u, int64_t n_r, int64_t nt) {
  const Shape& s = u.shape();
  ad::Var e = ad::reshape(u, Shape{s.d[0], s.d[1], s.d[2], 1, 1});
  e = ad::group_broadcast(e, 2, n_r);
  return ad::broadcast(e, 3, nt);
}

}  // namespace

ad::Var scheduler_scores(ad::Tape& t, GnnStack& stack, const TapedStack& tw,
                         const BatchLeaves& in, int k, int n_r, bool train_mode,
                         bool update_stats, const ad::Var* extra) {
  const Shape& hs = in.h_re.shape();
  const int64_t b = hs.d[0], m = hs.d[1], knr = hs.d[2], nt = hs.d[3];
  if (knr != static_cast<int64_t>(k) * n_r)
    throw std::invalid_argument("scheduler_scores: user axis disagrees with k * n_r");
  const int want = 4 + (extra ? 1 : 0);
  if (stack.widths.front() != want)
    throw std::invalid_argument("scheduler_scores: input width mismatch");

  ad::Var fs = ad::broadcast(ad::group_broadcast(in.f_s, 2, n_r), 3, nt);
  ad::Var fo = ad::broadcast(in.f_o, 3, nt);
  std::vector<ad::Var> chans{in.h_re, in.h_im, fs, fo};
  if (extra) chans.push_back(lift_user(t, *extra, n_r, nt));
  ad::Var x = ad::concat_axis(chans, 4);

  for (int l = 0; l < stack.depth(); ++l) {
    x = update5(x, tw.w[static_cast<size_t>(l)], n_r);
    if (stack.hidden(l)) {
      x = ad::batch_standardize(x, stack.layers[static_cast<size_t>(l)].bn, train_mode,
                                update_stats);
      x = ad::relu(x);
    }
  }
  if (x.shape().d[4] != 1)
    throw std::invalid_argument("scheduler_scores: final width must be 1");

  ad::Var z = ad::axis_sum(ad::group_sum(x, 2, n_r), 3);
  z = ad::scalar_mul(z, 1.0 / (static_cast<double>(n_r) * nt));
  return ad::reshape(z, Shape{b, m, static_cast<int64_t>(k)});
}

std::vector<ScheduleBasis> hard_top(const Tensor& z, int kp) {
  if (z.shape.rank != 3) throw std::invalid_argument("hard_top: scores must be (B,M,K)");
  const int64_t b = z.shape.d[0], m = z.shape.d[1], k = z.shape.d[2];
  if (kp < 1 || kp > k) throw std::invalid_argument("hard_top: bad stream count");
  std::vector<ScheduleBasis> out;
  out.reserve(static_cast<size_t>(b));
  std::vector<int> order(static_cast<size_t>(k));
  for (int64_t bi = 0; bi < b; ++bi) {
    std::vector<std::vector<int>> sel(static_cast<size_t>(m));
    for (int64_t mi = 0; mi < m; ++mi) {
      for (int64_t u = 0; u < k; ++u) order[static_cast<size_t>(u)] = static_cast<int>(u);
      const double* row = z.v.data() + (bi * m + mi) * k;
      std::stable_sort(order.begin(), order.end(),
                       [&](int a, int c) { return row[a] > row[c]; });
      sel[static_cast<size_t>(mi)].assign(order.begin(), order.begin() + kp);
    }
    out.push_back(ScheduleBasis::from_selection(static_cast<int>(m), static_cast<int>(k), sel));
  }
  return out;
}

std::vector<ad::Var> soft_top(ad::Tape& t, ad::Var z, int kp, double tau) {
  if (z.shape().rank != 3) throw std::invalid_argument("soft_top: scores must be (B,M,K)");
  if (kp < 1 || kp > z.shape().d[2]) throw std::invalid_argument("soft_top: bad stream count");
  if (!(tau > 0.0)) throw std::invalid_argument("soft_top: tau must be positive");
  const double floor = 1e-12;
  ad::Var ones = t.constant(Tensor::full(z.shape(), 1.0));
  ad::Var eps = t.constant(Tensor::full(z.shape(), floor));
  std::vector<ad::Var> rows;
  rows.reserve(static_cast<size_t>(kp));
  for (int j = 0; j < kp; ++j) {
    ad::Var b = ad::softmax_tau(z, 2, tau);
    rows.push_back(b);
    if (j + 1 == kp) break;
    ad::Var rem = ad::add(ad::relu(ad::sub(ad::sub(ones, b), eps)), eps);
    z = ad::add(z, ad::log_(rem));
  }
  return rows;
}

std::vector<ad::Var> sgnn_soft_rows(ad::Tape& t, Checkpoint& c,
                                    const std::vector<TapedStack>& tw,
                                    const BatchLeaves& in, int k, int n_r, double tau,
                                    bool train_mode, bool update_stats) {
  if (c.kind != NetKind::per_stream)
    throw std::invalid_argument("sgnn_soft_rows: wrong network kind");
  if (tw.size() != c.stacks.size())
    throw std::invalid_argument("sgnn_soft_rows: taped stack count mismatch");
  const Shape& hs = in.h_re.shape();
  ad::Var acc = t.constant(Tensor(Shape{hs.d[0], hs.d[1], static_cast<int64_t>(k)}));
  std::vector<ad::Var> rows;
  rows.reserve(c.stacks.size());
  for (size_t j = 0; j < c.stacks.size(); ++j) {
    ad::Var z = scheduler_scores(t, c.stacks[j], tw[j], in, k, n_r, train_mode,
                                 update_stats, &acc);
    ad::Var b = ad::softmax_tau(z, 2, tau);
    rows.push_back(b);
    if (j + 1 < c.stacks.size()) acc = ad::add(acc, b);
  }
  return rows;
}

std::vector<ScheduleBasis> sgnn_hard(ad::Tape& t, Checkpoint& c, const BatchLeaves& in,
                                     int k, int n_r) {
  if (c.kind != NetKind::per_stream)
    throw std::invalid_argument("sgnn_hard: wrong network kind");
  const Shape& hs = in.h_re.shape();
  const int64_t b = hs.d[0], m = hs.d[1];
  const int kp = static_cast<int>(c.stacks.size());
  if (kp > k) throw std::invalid_argument("sgnn_hard: more streams than users");
  Tensor acc(Shape{b, m, static_cast<int64_t>(k)});
  std::vector<std::vector<std::vector<int>>> sel(
      static_cast<size_t>(b), std::vector<std::vector<int>>(static_cast<size_t>(m)));
  std::vector<TapedStack> tw = tape_checkpoint(t, c, false);
  for (int j = 0; j < kp; ++j) {
    ad::Var accv = t.constant(acc);
    ad::Var zv = scheduler_scores(t, c.stacks[static_cast<size_t>(j)],
                                  tw[static_cast<size_t>(j)], in, k, n_r, false, false,
                                  &accv);
    const Tensor& z = zv.val();
    for (int64_t bi = 0; bi < b; ++bi)
      for (int64_t mi = 0; mi < m; ++mi) {
        const double* row = z.v.data() + (bi * m + mi) * k;
        double* taken = acc.v.data() + (bi * m + mi) * k;
        int best = -1;
        for (int64_t u = 0; u < k; ++u) {
          if (taken[u] != 0.0) continue;
          if (best < 0 || row[u] > row[best]) best = static_cast<int>(u);
        }
        taken[best] = 1.0;
        sel[static_cast<size_t>(bi)][static_cast<size_t>(mi)].push_back(best);
      }
  }
  std::vector<ScheduleBasis> out;
  out.reserve(static_cast<size_t>(b));
  for (int64_t bi = 0; bi < b; ++bi)
    out.push_back(ScheduleBasis::from_selection(static_cast<int>(m), k,
                                                sel[static_cast<size_t>(bi)]));
  return out;
}

double tau_schedule(int64_t epoch) { return 0.1 + 0.4 * std::exp(-0.02 * static_cast<double>(epoch)); }

}  // namespace wbgnn
