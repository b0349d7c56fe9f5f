#pragma once

#include <complex>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "wbgnn/rng.hpp"
#include "wbgnn/system.hpp"

namespace wbgnn {

using CVec = std::vector<std::complex<double>>;
using CMat = std::vector<CVec>;

// top-kp users by wideband energy, one shared selection for every RB
ScheduleBasis schedule_strongest(const ChannelSample& h, int kp);

// single-RB copy
ChannelSample rb_slice(const ChannelSample& h, int rb);

// Fully digital per-RB zero forcing on combiner-reduced rows; the combiner is
// the principal left singular vector per user (a bare 1 when N_R = 1), noise
// after combining is sigma2 * ||v||^2. Equal power per RB and stream.
double digital_zf_se(const ChannelSample& hp, double p_tot, double sigma2);

// Hybrid baseline: one matched-phase analog column per scheduled user from
// the RB- and antenna-summed channel, combiners re-phased once against the
// own-beam response, per-RB ZF baseband on the effective channel.
HybridSolution matched_phase(const ChannelSample& hp, double p_tot, double sigma2);

// identity selection over an already extracted channel
ScheduleBasis identity_basis(int m, int kp);

// extracted channel + per-search power budget -> achieved spectral efficiency
using PrecodeFn = std::function<double(const ChannelSample& hp, double p_tot)>;
PrecodeFn digital_zf_fn(double sigma2);
PrecodeFn matched_phase_fn(double sigma2);

struct SearchResult {
  ScheduleBasis basis;
  double se = 0.0;
};

// per-RB incremental selection; each RB gets p_tot / M
SearchResult greedy_schedule(const ChannelSample& h, int kp, const PrecodeFn& fn,
                             double p_tot);
// per-RB full enumeration; shared_analog enumerates the cross-RB product and
// hands fn the full channel (product capped at 1e6 candidates)
SearchResult exhaustive_schedule(const ChannelSample& h, int kp, const PrecodeFn& fn,
                                 double p_tot, bool shared_analog = false);

// ---- closed-form references ----

struct MisoInstance {
  CMat h;                   // K rows of N_T entries
  std::vector<double> lam;  // per-user weights in the regularizer
  std::vector<double> p;    // per-user transmit powers
  double sigma2 = 1.0;
};

// w_k = sqrt(p_k) w'_k / ||w'_k|| with w'_k = (I + sum_j lam_j/sigma2 h_j h_j^H)^-1 h_k;
// woodbury routes the inverse through the K x K Gram form instead of N_T x N_T
CMat miso_precoder(const MisoInstance& in, bool woodbury);
double miso_sum_rate(const CMat& h, const CMat& w, double sigma2);

// sum-rate advantage of (sqrt(2) w, 0) over (w, w) for two users sharing the
// channel h, total power p split evenly in the second case
double duplicate_user_gap(const CVec& h, double p, double sigma2);

// symmetric two-link power control: full power on both sides is optimal
// exactly when the threshold exceeds p_max / sigma2
double pair_threshold(double h_t, double h_i);
double pair_sum_rate(double h_t, double h_i, double p1, double p2, double sigma2);
std::pair<double, double> power_control_2pair(double h_t, double h_i, double p_max,
                                              double sigma2);
std::pair<double, double> pair_grid_best(double h_t, double h_i, double p_max,
                                         double sigma2, int grid);

// ---- duplicate-element probes ----

using MisoSampler = std::function<MisoInstance(Rng&)>;
using MisoPolicy = std::function<CMat(const MisoInstance&)>;

MisoSampler default_miso_sampler(int k, int n_t);
MisoPolicy miso_policy(bool woodbury);

struct SpsdReport {
  std::string axis;
  int64_t samples = 0;
  double agreement_rate = 0.0;
  double max_deviation = 0.0;
};

// axis "antenna": duplicate the last antenna and ask whether the policy's
// decision treats the two copies identically (within tol).
// axis "user": duplicate the sampler's first user and ask whether the even
// split is at least as good as the lopsided one; the deviation is the gap.
SpsdReport spsd_check(const std::string& axis, int64_t samples, uint64_t seed,
                      double tol, const MisoSampler& sampler, const MisoPolicy& policy);

}  // namespace wbgnn
