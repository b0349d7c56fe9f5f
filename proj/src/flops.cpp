#include "wbgnn/flops.hpp"

#include <stdexcept>

namespace wbgnn {

namespace {

void check_positive(std::initializer_list<int64_t> dims) {
  for (int64_t d : dims)
    if (d < 1) throw std::invalid_argument("flops: dimensions must be positive");
}

int64_t network_sum(const FlopsDims& d, const std::vector<int>& widths, bool precoder) {
  if (widths.size() < 2) throw std::invalid_argument("flops: need at least one layer");
  int64_t total = 0;
  for (size_t l = 0; l + 1 < widths.size(); ++l) {
    int64_t cl = widths[l], cl1 = widths[l + 1];
    total += precoder ? precoder_layer_flops(d.m, d.kp, d.n_r, d.n_t, cl, cl1)
                      : scheduler_layer_flops(d.m, d.k, d.n_r, d.n_t, cl, cl1);
  }
  return total;
}

}  // namespace

int64_t scheduler_layer_flops(int64_t m, int64_t k, int64_t n_r, int64_t n_t,
                              int64_t c_l, int64_t c_l1) {
  check_positive({m, k, n_r, n_t, c_l, c_l1});
  int64_t v = m * k * n_r * n_t;
  int64_t products = c_l1 * (2 * c_l - 1) * v;
  int64_t lifts = 2 * c_l1 * c_l * (k * n_r * n_t + m * n_t + m * k * n_t + m * k * n_r);
  int64_t sums = c_l * ((m - 1) * k * n_r * n_t + (k * n_r - 1) * m * n_t +
                        (n_r - 1) * m * k * n_t + (n_t - 1) * m * k * n_r);
  int64_t epilogue = 4 * c_l1;
  return products + lifts + sums + epilogue;
}

int64_t precoder_layer_flops(int64_t m, int64_t kp, int64_t n_r, int64_t n_t,
                             int64_t d_l, int64_t d_l1) {
  check_positive({m, kp, n_r, n_t, d_l, d_l1});
  int64_t v = m * kp * n_r * n_t;
  int64_t products = d_l1 * (2 * d_l - 1) * v;
  int64_t lifts = 2 * d_l1 * d_l * (kp * n_r * n_t + 4 * m * kp * n_t + m * kp * n_r);
  int64_t sums = d_l * ((m - 1) * kp * n_r * n_t + (n_r - 1) * m * kp * n_t +
                        (n_t - 1) * m * kp * n_r);
  int64_t attention = d_l1 * m * n_t * (4 * kp * kp + 4 * kp * n_r - kp + 1);
  return products + lifts + sums + attention;
}

int64_t scheduler_network_flops(const FlopsDims& d, const std::vector<int>& widths) {
  check_positive({d.m, d.k, d.n_r, d.n_t});
  return network_sum(d, widths, false);
}

int64_t sgnn_network_flops(const FlopsDims& d, const std::vector<int>& widths) {
  check_positive({d.m, d.k, d.kp, d.n_r, d.n_t});
  return d.kp * network_sum(d, widths, false);
}

int64_t precoder_network_flops(const FlopsDims& d, const std::vector<int>& widths) {
  check_positive({d.m, d.kp, d.n_r, d.n_t});
  return network_sum(d, widths, true);
}

std::vector<AsymptoticRow> asymptotic_table() {
  return {
      {"scheduler-gnn", "O(M K N_R N_T L C^2)"},
      {"scheduler-sgnn", "O(M K K' N_R N_T L C^2)"},
      {"strongest", "O(M K (N_R N_T + log K'))"},
      {"precoder-gnn", "O(M K' N_R N_T L D (K' + D))"},
      {"greedy", "O(M K K' Cpre)"},
      {"exhaustive", "O(C(K,K')^M Cpre)"},
  };
}

}  // namespace wbgnn
