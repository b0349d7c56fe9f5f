#pragma once

#include <vector>

#include "wbgnn/gnn.hpp"
#include "wbgnn/system.hpp"

namespace wbgnn {

// Joint user scores, shape (B, M, K). `extra`, when given, is an additional
// per-user input channel (B, M, K) appended after the base four (the
// sequential variant's allocation accumulator). BN stats in `stack` are
// updated in place when update_stats is set.
ad::Var scheduler_scores(ad::Tape& t, GnnStack& stack, const TapedStack& tw,
                         const BatchLeaves& in, int k, int n_r, bool train_mode,
                         bool update_stats, const ad::Var* extra = nullptr);

// Per-RB top selection on raw scores (B, M, K), one basis per batch sample.
// Rows come out strongest first; ties go to the lower user index.
std::vector<ScheduleBasis> hard_top(const Tensor& z, int kp);

// Differentiable sequential relaxation: kp simplex rows (B, M, K). Row j is
// a tempered softmax of the scores with previously picked mass logged out.
std::vector<ad::Var> soft_top(ad::Tape& t, ad::Var z, int kp, double tau);

// Sequential per-stream scheduler, soft rows for training. One stack per
// stream; stream j sees the accumulated earlier rows as its extra channel.
std::vector<ad::Var> sgnn_soft_rows(ad::Tape& t, Checkpoint& c,
                                    const std::vector<TapedStack>& tw,
                                    const BatchLeaves& in, int k, int n_r, double tau,
                                    bool train_mode, bool update_stats);

// Hard sequential decode (eval stats, no gradients). Users already taken on
// an RB are excluded from later argmaxes.
std::vector<ScheduleBasis> sgnn_hard(ad::Tape& t, Checkpoint& c, const BatchLeaves& in,
                                     int k, int n_r);

// annealed relaxation temperature
double tau_schedule(int64_t epoch);

}  // namespace wbgnn
