#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace wbgnn {

// Problem dimensions a forward pass runs over. `kp` is the number of
// scheduled users (streams), `k` the candidate pool.
struct FlopsDims {
  int64_t m = 1;
  int64_t k = 1;
  int64_t kp = 1;
  int64_t n_r = 1;
  int64_t n_t = 1;
};

// Exact FLOP count of one scheduler update layer mapping c_l to c_l1
// channels on an (m, k*n_r, n_t) vertex grid: the five matrix products,
// the aggregate sums they consume, and the per-channel epilogue.
int64_t scheduler_layer_flops(int64_t m, int64_t k, int64_t n_r, int64_t n_t,
                              int64_t c_l, int64_t c_l1);

// Exact FLOP count of one precoder update layer mapping d_l to d_l1
// channels on an (m, kp*n_r, n_t) grid, including the gated cross-user
// term (gate products, tanh, weighted combination).
int64_t precoder_layer_flops(int64_t m, int64_t kp, int64_t n_r, int64_t n_t,
                             int64_t d_l, int64_t d_l1);

// Whole-network totals: sum the layer counts over consecutive width pairs.
int64_t scheduler_network_flops(const FlopsDims& d, const std::vector<int>& widths);
// Sequential scheduler: kp stacks, each a full pass at the same widths.
int64_t sgnn_network_flops(const FlopsDims& d, const std::vector<int>& widths);
int64_t precoder_network_flops(const FlopsDims& d, const std::vector<int>& widths);

struct AsymptoticRow {
  std::string method;
  std::string order;
};

// Leading-order complexity of the methods implemented in this repo.
// L = number of layers, C/D = hidden width, Cpre = cost of the inner
// precoding routine invoked per candidate schedule.
std::vector<AsymptoticRow> asymptotic_table();

}  // namespace wbgnn
