#pragma once

#include <functional>
#include <vector>

#include "wbgnn/tensor.hpp"

// Reverse-mode autodiff on a tape of VJP closures. All forward arithmetic
// routes through the kernel layer; accumulation order is fixed, so runs are
// deterministic and lane-independent. Every op validates that its output is
// finite and throws otherwise.

namespace wbgnn::ad {

class Tape;

struct Var {
  Tape* tape = nullptr;
  int32_t id = -1;

  bool defined() const { return tape != nullptr; }
  const Tensor& val() const;
  const Shape& shape() const;
  bool requires_grad() const;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value, bool requires_grad);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  // Seeds d(loss)/d(loss) = 1 and sweeps the tape once; loss must have one
  // element. A tape can only be swept once.
  void backward(Var loss);

  bool swept() const { return swept_; }
  Tensor grad(Var v) const;  // zeros if nothing accumulated
  size_t size() const { return nodes_.size(); }

  // --- internals used by op implementations ---
  using Vjp = std::function<void(Tape&, const Tensor&)>;
  int record(Tensor value, bool requires_grad, Vjp vjp, const char* op);
  const Tensor& value_of(int id) const { return nodes_[static_cast<size_t>(id)].value; }
  bool rg_of(int id) const { return nodes_[static_cast<size_t>(id)].requires_grad; }
  void accum(int id, const Tensor& g);
  void accum_scaled(int id, const Tensor& g, double c);

 private:
  struct Node {
    Tensor value;
    bool requires_grad;
    Vjp vjp;
  };
  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
  std::vector<uint8_t> has_grad_;
  bool swept_ = false;
};

// arithmetic
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scalar_mul(Var a, double c);
inline Var neg(Var a) { return scalar_mul(a, -1.0); }

// x (..., Cin) times w (Cout, Cin) contracting the channel axis -> (..., Cout)
Var matmul(Var x, Var w);

// reductions / broadcasts; reduced axes are kept with size 1
Var axis_sum(Var x, int axis);
Var axis_mean(Var x, int axis);
Var broadcast(Var x, int axis, int64_t n);
// axis of size k*group -> k (sum over each contiguous block) and back
Var group_sum(Var x, int axis, int64_t group);
Var group_broadcast(Var x, int axis, int64_t group);

// structure
Var concat_axis(const std::vector<Var>& xs, int axis);
Var slice_axis(Var x, int axis, int64_t start, int64_t len);
Var reshape(Var x, const Shape& s);  // layout-preserving, same numel

// elementwise
Var relu(Var x);
Var tanh_(Var x);
Var log_(Var x);   // domain x > 0
Var exp_(Var x);
Var square(Var x);
Var sqrt_(Var x);  // domain x >= 0
Var reciprocal(Var x);  // domain x != 0
Var abs_(Var x);

Var softmax_tau(Var x, int axis, double tau);

// Batch standardization over every non-channel position (channel = last
// axis). No learnable affine. Population variance; running stats with
// momentum 0.9 for inference.
struct BnStats {
  std::vector<double> mean, var;
  bool initialized = false;
  void init(int64_t channels);
};
Var batch_standardize(Var x, BnStats& stats, bool train_mode, bool update_stats,
                      double momentum = 0.9, double eps = 1e-5);

// out[b,m,(kp,r),n,c] = sum_k rows[kp][b,m,k] * h[b,m,(k,r),n,c]
// rows: k' vars of shape (B,M,K); h: (B,M,K*NR,NT,C)
Var schedule_apply(const std::vector<Var>& rows, Var h, int64_t n_r);

// Where hypot(re,im) < eps, add eps to re (gradient passes through
// unchanged); counts affected entries into *count if given.
Var perturb_small_real(Var re, Var im, double eps, int64_t* count);

double scalar_value(Var v);

// Max over all coordinates of |ad - fd| / max(1, |fd|), central differences.
// build must construct a scalar loss from leaves made of `point` (and must
// not update any BN running stats).
double grad_check(const std::function<Var(Tape&, std::vector<Var>&)>& build,
                  const std::vector<Tensor>& point, double eps);

}  // namespace wbgnn::ad
