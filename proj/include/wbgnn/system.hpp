#pragma once

#include <complex>
#include <vector>

#include "wbgnn/autodiff.hpp"
#include "wbgnn/channel.hpp"
#include "wbgnn/tensor.hpp"

namespace wbgnn {

// Per-RB user selection expressed as K' basis rows over the K users. Hard
// bases have one-hot rows; soft bases carry simplex weights.
struct ScheduleBasis {
  int m = 0, kp = 0, k = 0;
  bool hard = true;
  Tensor rows;  // (M, K', K)

  static ScheduleBasis from_selection(int m, int k,
                                      const std::vector<std::vector<int>>& users_per_rb);
  // hard basis only: selected user index of row kp on rb
  int selected(int rb, int row) const;
  void validate() const;
};

// Shared analog precoder, per-RB baseband, per-scheduled-user combiners.
struct HybridSolution {
  int m = 0, kp = 0, n_rf = 0, n_t = 0, n_r = 0;
  std::vector<std::complex<double>> w_rf;  // (n_t, n_rf)
  std::vector<std::complex<double>> w_bb;  // (m, n_rf, kp)
  std::vector<std::complex<double>> v_rf;  // (kp * n_r)

  std::complex<double>& rf(int n, int j) { return w_rf[static_cast<size_t>(n * n_rf + j)]; }
  std::complex<double> rf(int n, int j) const { return w_rf[static_cast<size_t>(n * n_rf + j)]; }
  std::complex<double>& bb(int rb, int j, int i) {
    return w_bb[static_cast<size_t>((rb * n_rf + j) * kp + i)];
  }
  std::complex<double> bb(int rb, int j, int i) const {
    return w_bb[static_cast<size_t>((rb * n_rf + j) * kp + i)];
  }
};

// H'_m = (B_m kron I_NR) H_m: per-RB basis-weighted user-block mixture
ChannelSample extract_scheduled(const ChannelSample& h, const ScheduleBasis& b);

// Spectral efficiency (1/M) sum_m sum_k' log2(1 + SINR); per_stream, when
// given, receives the (M, K') per-stream rates.
double sum_rate(const ChannelSample& h, const ScheduleBasis& b,
                const HybridSolution& sol, double sigma2,
                Tensor* per_stream = nullptr);

struct ConstraintReport {
  double rf_modulus = 0.0;    // max | |entry| - 1 | over the analog precoder
  double comb_modulus = 0.0;  // same over combiner entries
  double power_rel = 0.0;     // | used - p_tot | / p_tot
};
ConstraintReport check_constraints(const HybridSolution& sol, double p_tot);

// Scheduler input features: per-user channel norms and own-correlation
// means, standardized per RB (population std; std under 1e-15 zeroes the
// row). Zero-norm vectors contribute zero correlation and are counted.
struct Features {
  Tensor f_s;  // (M, K)
  Tensor f_o;  // (M, K*N_R)
  int64_t zero_norm_count = 0;
};
Features compute_features(const ChannelSample& h);

// permutation helpers (each validates the permutation)
ChannelSample permute_rbs(const ChannelSample& h, const std::vector<int>& perm);
ChannelSample permute_users(const ChannelSample& h, const std::vector<int>& perm);
ChannelSample permute_user_antennas(const ChannelSample& h, int user,
                                    const std::vector<int>& perm);
ChannelSample permute_bs_antennas(const ChannelSample& h, const std::vector<int>& perm);

// ---- tape-side compositions ----

namespace cg {

// complex tensor on the tape as a (re, im) pair
struct CVar {
  ad::Var re, im;
};

CVar cmul(CVar a, CVar b);
CVar cconj_mul(CVar a, CVar b);  // conj(a) * b
CVar cadd(CVar a, CVar b);
ad::Var abs2(CVar a);

}  // namespace cg

// Batched rate graph on extracted channels.
//   hp:  (B, M, K'*N_R, N_T, 1)
//   wrf: (B, 1, 1, N_T, N_RF)
//   wbb: (B, M, 1, K', N_RF)
//   v:   (B, 1, K'*N_R, 1, 1)
// Returns per-sample SE, shape (B,1,1,1,1).
ad::Var sum_rate_graph(ad::Tape& t, cg::CVar hp, cg::CVar wrf, cg::CVar wbb,
                       cg::CVar v, int kp, int n_r, double sigma2);

// Pack samples (and features) into batch leaves on a tape.
struct BatchLeaves {
  ad::Var h_re, h_im;  // (B, M, K*N_R, N_T, 1)
  ad::Var f_s;         // (B, M, K, 1, 1)
  ad::Var f_o;         // (B, M, K*N_R, 1, 1)
};
BatchLeaves make_batch_leaves(ad::Tape& t, const Dataset& ds,
                              const std::vector<int64_t>& idx,
                              const std::vector<Features>& feats);

// Extract a single sample's solution from head outputs (values only).
HybridSolution solution_from_graph(const Tensor& wrf_re, const Tensor& wrf_im,
                                   const Tensor& wbb_re, const Tensor& wbb_im,
                                   const Tensor& v_re, const Tensor& v_im,
                                   int64_t batch_index, int m, int kp, int n_rf,
                                   int n_t, int n_r);

}  // namespace wbgnn
