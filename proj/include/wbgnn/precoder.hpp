#pragma once

#include "wbgnn/gnn.hpp"
#include "wbgnn/system.hpp"

namespace wbgnn {

struct PrecoderOut {
  cg::CVar wrf;  // (B, 1, 1, N_T, N_RF), unit modulus
  cg::CVar wbb;  // (B, M, 1, K', N_RF), scaled to the power budget per sample
  cg::CVar v;    // (B, 1, K'*N_R, 1, 1), unit modulus
  int64_t perturbed = 0;  // near-zero head outputs nudged before normalizing
};

// Hybrid solution heads from an extracted channel hp (B, M, K'*N_R, N_T, 1).
// BN stats in `c` are updated in place when update_stats is set.
PrecoderOut precoder_forward(ad::Tape& t, Checkpoint& c, const TapedStack& tw,
                             cg::CVar hp, int kp, int n_r, double p_tot,
                             bool train_mode, bool update_stats);

}  // namespace wbgnn
