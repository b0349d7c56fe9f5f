#include "wbgnn/precoder.hpp"

#include <stdexcept>

namespace wbgnn {

namespace {

// Self, other-RB, same-user, and other-BS-antenna terms as in the scheduler
// update, plus a per-user term built from antenna-mean embeddings: target k'
// aggregates every other user's w[2] map gated by a pairwise attention
// weight (w[5] on the source, w[6] on the target). With attention off the
// gate is a constant one on the same code path.
ad::Var update7(ad::Tape& t, ad::Var x, const std::vector<ad::Var>& w, int kp,
                int64_t n_r, bool use_attention) {
  const Shape& s = x.shape();
  const int64_t m = s.d[1], nt = s.d[3];
  ad::Var sum_m = ad::broadcast(ad::axis_sum(x, 1), 1, m);
  ad::Var grp = ad::group_broadcast(ad::group_sum(x, 2, n_r), 2, n_r);
  ad::Var sum_n = ad::broadcast(ad::axis_sum(x, 3), 3, nt);

  ad::Var y = ad::matmul(x, w[0]);
  y = ad::add(y, ad::matmul(ad::scalar_mul(ad::sub(sum_m, x), 1.0 / m), w[1]));
  y = ad::add(y, ad::matmul(ad::scalar_mul(ad::sub(grp, x), 1.0 / n_r), w[3]));
  y = ad::add(y, ad::matmul(ad::scalar_mul(ad::sub(sum_n, x), 1.0 / nt), w[4]));
  if (kp < 2) return y;

  ad::Var ybar = ad::scalar_mul(ad::group_sum(x, 2, n_r), 1.0 / n_r);  // (B,M,K',NT,C)
  std::vector<ad::Var> q3, q6, q7;
  q3.reserve(static_cast<size_t>(kp));
  for (int u = 0; u < kp; ++u) {
    ad::Var yu = ad::slice_axis(ybar, 2, u, 1);
    q3.push_back(ad::matmul(yu, w[2]));
    q6.push_back(ad::matmul(yu, w[5]));
    q7.push_back(ad::matmul(yu, w[6]));
  }
  const Shape& qs = q3.front().shape();
  Tensor one_gate = Tensor::full(Shape{qs.d[0], qs.d[1], 1, 1, qs.d[4]}, 1.0);
  std::vector<ad::Var> per_target;
  per_target.reserve(static_cast<size_t>(kp));
  for (int kk = 0; kk < kp; ++kk) {
    ad::Var acc;
    bool first = true;
    for (int tt = 0; tt < kp; ++tt) {
      if (tt == kk) continue;
      ad::Var gate = use_attention
                         ? ad::tanh_(ad::scalar_mul(
                               ad::axis_sum(ad::mul(q6[static_cast<size_t>(tt)],
                                                    q7[static_cast<size_t>(kk)]),
                                            3),
                               1.0 / nt))
                         : t.constant(one_gate);
      ad::Var term = ad::mul(ad::broadcast(gate, 3, nt), q3[static_cast<size_t>(tt)]);
      acc = first ? term : ad::add(acc, term);
      first = false;
    }
    per_target.push_back(ad::scalar_mul(acc, 1.0 / kp));
  }
  ad::Var user_term = ad::concat_axis(per_target, 2);
  return ad::add(y, ad::group_broadcast(user_term, 2, n_r));
}

cg::CVar unit_modulus(ad::Var re, ad::Var im, int64_t* perturbed) {
  ad::Var pre = ad::perturb_small_real(re, im, 1e-12, perturbed);
  ad::Var inv = ad::reciprocal(ad::sqrt_(ad::add(ad::square(pre), ad::square(im))));
  return {ad::mul(pre, inv), ad::mul(im, inv)};
}

}  // namespace

PrecoderOut precoder_forward(ad::Tape& t, Checkpoint& c, const TapedStack& tw,
                             cg::CVar hp, int kp, int n_r, double p_tot,
                             bool train_mode, bool update_stats) {
  if (c.kind != NetKind::precoder)
    throw std::invalid_argument("precoder_forward: wrong network kind");
  GnnStack& stack = c.stacks.front();
  if (stack.widths.front() != 2)
    throw std::invalid_argument("precoder_forward: input width must be 2");
  const Shape& hs = hp.re.shape();
  const int64_t b = hs.d[0], m = hs.d[1], nt = hs.d[3];
  if (hs.d[2] != static_cast<int64_t>(kp) * n_r)
    throw std::invalid_argument("precoder_forward: user axis disagrees with kp * n_r");
  if (!(p_tot > 0.0)) throw std::invalid_argument("precoder_forward: bad power budget");

  ad::Var x = ad::concat_axis({hp.re, hp.im}, 4);
  for (int l = 0; l < stack.depth(); ++l) {
    x = update7(t, x, tw.w[static_cast<size_t>(l)], kp, n_r, c.use_attention);
    if (stack.hidden(l)) {
      x = ad::batch_standardize(x, stack.layers[static_cast<size_t>(l)].bn, train_mode,
                                update_stats);
      x = ad::relu(x);
    }
  }
  const int nrf = c.n_rf;
  if (x.shape().d[4] != 4 * nrf + 2)
    throw std::invalid_argument("precoder_forward: head width mismatch");

  PrecoderOut out;

  ad::Var rf = ad::axis_mean(ad::axis_mean(ad::slice_axis(x, 4, 0, 2 * nrf), 1), 2);
  out.wrf = unit_modulus(ad::slice_axis(rf, 4, 0, nrf), ad::slice_axis(rf, 4, nrf, nrf),
                         &out.perturbed);

  ad::Var bb = ad::scalar_mul(
      ad::axis_mean(ad::group_sum(ad::slice_axis(x, 4, 2 * nrf, 2 * nrf), 2, n_r), 3),
      1.0 / n_r);  // (B,M,K',1,2*nrf)
  ad::Var bb_im = ad::slice_axis(bb, 4, nrf, nrf);
  ad::Var bb_re = ad::perturb_small_real(ad::slice_axis(bb, 4, 0, nrf), bb_im, 1e-12,
                                         &out.perturbed);

  // per-sample transmit power of the composed precoder, then a global scale
  cg::CVar wrf_e{ad::broadcast(ad::broadcast(out.wrf.re, 1, m), 2, kp),
                 ad::broadcast(ad::broadcast(out.wrf.im, 1, m), 2, kp)};
  cg::CVar bb_e{ad::broadcast(bb_re, 3, nt), ad::broadcast(bb_im, 3, nt)};
  cg::CVar prod = cg::cmul(wrf_e, bb_e);
  ad::Var used = ad::axis_sum(
      ad::axis_sum(ad::axis_sum(cg::abs2({ad::axis_sum(prod.re, 4), ad::axis_sum(prod.im, 4)}),
                                1),
                   2),
      3);  // (B,1,1,1,1)
  ad::Var scale = ad::sqrt_(ad::scalar_mul(ad::reciprocal(used), p_tot));
  ad::Var scale_e = ad::broadcast(ad::broadcast(ad::broadcast(scale, 1, m), 3, kp), 4, nrf);
  const Shape bbs{b, m, 1, static_cast<int64_t>(kp), static_cast<int64_t>(nrf)};
  out.wbb = {ad::mul(ad::reshape(bb_re, bbs), scale_e),
             ad::mul(ad::reshape(bb_im, bbs), scale_e)};

  ad::Var vh = ad::axis_mean(ad::axis_mean(ad::slice_axis(x, 4, 4 * nrf, 2), 1), 3);
  out.v = unit_modulus(ad::slice_axis(vh, 4, 0, 1), ad::slice_axis(vh, 4, 1, 1),
                       &out.perturbed);
  return out;
}

}  // namespace wbgnn
