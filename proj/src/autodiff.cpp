#include "wbgnn/autodiff.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>
#include <string>

#include "wbgnn/kernels.hpp"

namespace wbgnn::ad {
namespace {

const Tensor& V(Var v) { return v.tape->value_of(v.id); }

Tape& same_tape(Var a, Var b) {
  if (a.tape == nullptr || a.tape != b.tape)
    throw std::invalid_argument("vars on different tapes");
  return *a.tape;
}

void need_same_shape(Var a, Var b, const char* op) {
  if (V(a).shape != V(b).shape)
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                V(a).shape.str() + " vs " + V(b).shape.str());
}

void check_axis(const Shape& s, int axis, const char* op) {
  if (axis < 0 || axis >= s.rank)
    throw std::invalid_argument(std::string(op) + ": axis out of range");
}

}  // namespace

const Tensor& Var::val() const { return tape->value_of(id); }
const Shape& Var::shape() const { return tape->value_of(id).shape; }
bool Var::requires_grad() const { return tape->rg_of(id); }

void BnStats::init(int64_t channels) {
  mean.assign(static_cast<size_t>(channels), 0.0);
  var.assign(static_cast<size_t>(channels), 1.0);
  initialized = true;
}

int Tape::record(Tensor value, bool requires_grad, Vjp vjp, const char* op) {
  if (swept_) throw std::runtime_error("tape already consumed");
  if (!value.all_finite())
    throw std::runtime_error(std::string("non-finite output of ") + op);
  nodes_.push_back({std::move(value), requires_grad,
                    requires_grad ? std::move(vjp) : Vjp{}});
  return static_cast<int>(nodes_.size()) - 1;
}

Var Tape::leaf(Tensor value, bool requires_grad) {
  const int id = record(std::move(value), requires_grad, Vjp{}, "leaf");
  return {this, id};
}

void Tape::accum(int id, const Tensor& g) {
  auto& n = nodes_[static_cast<size_t>(id)];
  if (!n.requires_grad) return;
  if (g.shape != n.value.shape)
    throw std::runtime_error("grad shape mismatch");
  auto& slot = grads_[static_cast<size_t>(id)];
  if (!has_grad_[static_cast<size_t>(id)]) {
    slot = g;
    has_grad_[static_cast<size_t>(id)] = 1;
  } else {
    kern::active().ew_add(slot.data(), g.data(), slot.data(), g.numel());
  }
}

void Tape::accum_scaled(int id, const Tensor& g, double c) {
  auto& n = nodes_[static_cast<size_t>(id)];
  if (!n.requires_grad) return;
  auto& slot = grads_[static_cast<size_t>(id)];
  if (!has_grad_[static_cast<size_t>(id)]) {
    slot = Tensor(g.shape);
    kern::active().scale(g.data(), c, slot.data(), g.numel());
    has_grad_[static_cast<size_t>(id)] = 1;
  } else {
    kern::active().axpy(c, g.data(), slot.data(), g.numel());
  }
}

void Tape::backward(Var loss) {
  if (swept_) throw std::runtime_error("tape already consumed");
  if (loss.tape != this) throw std::invalid_argument("loss not on this tape");
  if (value_of(loss.id).numel() != 1)
    throw std::invalid_argument("backward: loss must have one element");
  swept_ = true;
  grads_.assign(nodes_.size(), Tensor{});
  has_grad_.assign(nodes_.size(), 0);
  grads_[static_cast<size_t>(loss.id)] = Tensor::full(value_of(loss.id).shape, 1.0);
  has_grad_[static_cast<size_t>(loss.id)] = 1;
  for (int i = loss.id; i >= 0; --i) {
    if (!has_grad_[static_cast<size_t>(i)]) continue;
    auto& n = nodes_[static_cast<size_t>(i)];
    if (n.vjp) n.vjp(*this, grads_[static_cast<size_t>(i)]);
  }
}

Tensor Tape::grad(Var v) const {
  if (!swept_) throw std::runtime_error("grad before backward");
  if (v.tape != this) throw std::invalid_argument("var not on this tape");
  if (!has_grad_[static_cast<size_t>(v.id)])
    return Tensor::zeros(value_of(v.id).shape);
  return grads_[static_cast<size_t>(v.id)];
}

// ---- arithmetic ----

Var add(Var a, Var b) {
  Tape& t = same_tape(a, b);
  need_same_shape(a, b, "add");
  Tensor out(V(a).shape);
  kern::active().ew_add(V(a).data(), V(b).data(), out.data(), out.numel());
  const int aid = a.id, bid = b.id;
  const int id = t.record(std::move(out), a.requires_grad() || b.requires_grad(),
                          [aid, bid](Tape& tp, const Tensor& g) {
                            tp.accum(aid, g);
                            tp.accum(bid, g);
                          },
                          "add");
  return {&t, id};
}

Var sub(Var a, Var b) {
  Tape& t = same_tape(a, b);
  need_same_shape(a, b, "sub");
  Tensor out(V(a).shape);
  kern::active().ew_sub(V(a).data(), V(b).data(), out.data(), out.numel());
  const int aid = a.id, bid = b.id;
  const int id = t.record(std::move(out), a.requires_grad() || b.requires_grad(),
                          [aid, bid](Tape& tp, const Tensor& g) {
                            tp.accum(aid, g);
                            tp.accum_scaled(bid, g, -1.0);
                          },
                          "sub");
  return {&t, id};
}

Var mul(Var a, Var b) {
  Tape& t = same_tape(a, b);
  need_same_shape(a, b, "mul");
  Tensor out(V(a).shape);
  kern::active().ew_mul(V(a).data(), V(b).data(), out.data(), out.numel());
  const int aid = a.id, bid = b.id;
  const int id = t.record(
      std::move(out), a.requires_grad() || b.requires_grad(),
      [aid, bid](Tape& tp, const Tensor& g) {
        if (tp.rg_of(aid)) {
          Tensor da(g.shape);
          kern::active().ew_mul(g.data(), tp.value_of(bid).data(), da.data(), g.numel());
          tp.accum(aid, da);
        }
        if (tp.rg_of(bid)) {
          Tensor db(g.shape);
          kern::active().ew_mul(g.data(), tp.value_of(aid).data(), db.data(), g.numel());
          tp.accum(bid, db);
        }
      },
      "mul");
  return {&t, id};
}

Var scalar_mul(Var a, double c) {
  Tape& t = *a.tape;
  Tensor out(V(a).shape);
  kern::active().scale(V(a).data(), c, out.data(), out.numel());
  const int aid = a.id;
  const int id = t.record(std::move(out), a.requires_grad(),
                          [aid, c](Tape& tp, const Tensor& g) {
                            tp.accum_scaled(aid, g, c);
                          },
                          "scalar_mul");
  return {&t, id};
}

Var matmul(Var x, Var w) {
  Tape& t = same_tape(x, w);
  const Shape& xs = V(x).shape;
  const Shape& ws = V(w).shape;
  if (ws.rank != 2) throw std::invalid_argument("matmul: weight must be rank 2");
  const int64_t cin = xs[xs.rank - 1];
  if (ws[1] != cin) throw std::invalid_argument("matmul: channel mismatch");
  const int64_t cout = ws[0];
  const int64_t p = xs.numel() / cin;

  // kernel wants (Cin, Cout); weights are stored (Cout, Cin)
  Tensor wt(Shape{cin, cout});
  for (int64_t i = 0; i < cout; ++i)
    for (int64_t j = 0; j < cin; ++j) wt[j * cout + i] = V(w)[i * cin + j];

  Tensor out(xs.with_axis(xs.rank - 1, cout));
  kern::active().matxw(V(x).data(), wt.data(), out.data(), p, cin, cout);

  const int xid = x.id, wid = w.id;
  const int id = t.record(
      std::move(out), x.requires_grad() || w.requires_grad(),
      [xid, wid, p, cin, cout](Tape& tp, const Tensor& g) {
        if (tp.rg_of(xid)) {
          Tensor dx(tp.value_of(xid).shape);
          kern::active().matxw(g.data(), tp.value_of(wid).data(), dx.data(), p, cout, cin);
          tp.accum(xid, dx);
        }
        if (tp.rg_of(wid)) {
          Tensor dw(Shape{cout, cin});
          kern::active().outer_acc(g.data(), tp.value_of(xid).data(), dw.data(), p, cout, cin);
          tp.accum(wid, dw);
        }
      },
      "matmul");
  return {&t, id};
}

// ---- reductions / broadcasts ----

Var axis_sum(Var x, int axis) {
  Tape& t = *x.tape;
  const Shape& xs = V(x).shape;
  check_axis(xs, axis, "axis_sum");
  const int64_t outer = xs.outer(axis), n = xs[axis], inner = xs.inner(axis);
  Tensor out(xs.with_axis(axis, 1));
  kern::active().strided_sum(V(x).data(), out.data(), outer, n, inner);
  const int xid = x.id;
  const int id = t.record(std::move(out), x.requires_grad(),
                          [xid, outer, n, inner](Tape& tp, const Tensor& g) {
                            Tensor dx(tp.value_of(xid).shape);
                            kern::active().tile(g.data(), dx.data(), outer, n, inner);
                            tp.accum(xid, dx);
                          },
                          "axis_sum");
  return {&t, id};
}

Var axis_mean(Var x, int axis) {
  const int64_t n = V(x).shape[axis];
  return scalar_mul(axis_sum(x, axis), 1.0 / static_cast<double>(n));
}

Var broadcast(Var x, int axis, int64_t n) {
  Tape& t = *x.tape;
  const Shape& xs = V(x).shape;
  check_axis(xs, axis, "broadcast");
  if (xs[axis] != 1) throw std::invalid_argument("broadcast: axis must have size 1");
  const int64_t outer = xs.outer(axis), inner = xs.inner(axis);
  Tensor out(xs.with_axis(axis, n));
  kern::active().tile(V(x).data(), out.data(), outer, n, inner);
  const int xid = x.id;
  const int id = t.record(std::move(out), x.requires_grad(),
                          [xid, outer, n, inner](Tape& tp, const Tensor& g) {
                            Tensor dx(tp.value_of(xid).shape);
                            kern::active().strided_sum(g.data(), dx.data(), outer, n, inner);
                            tp.accum(xid, dx);
                          },
                          "broadcast");
  return {&t, id};
}

Var group_sum(Var x, int axis, int64_t group) {
  Tape& t = *x.tape;
  const Shape& xs = V(x).shape;
  check_axis(xs, axis, "group_sum");
  if (group <= 0 || xs[axis] % group != 0)
    throw std::invalid_argument("group_sum: axis not divisible by group");
  const int64_t k = xs[axis] / group;
  const int64_t outer = xs.outer(axis) * k, inner = xs.inner(axis);
  Tensor out(xs.with_axis(axis, k));
  kern::active().strided_sum(V(x).data(), out.data(), outer, group, inner);
  const int xid = x.id;
  const int id = t.record(std::move(out), x.requires_grad(),
                          [xid, outer, group, inner](Tape& tp, const Tensor& g) {
                            Tensor dx(tp.value_of(xid).shape);
                            kern::active().tile(g.data(), dx.data(), outer, group, inner);
                            tp.accum(xid, dx);
                          },
                          "group_sum");
  return {&t, id};
}

Var group_broadcast(Var x, int axis, int64_t group) {
  Tape& t = *x.tape;
  const Shape& xs = V(x).shape;
  check_axis(xs, axis, "group_broadcast");
  const int64_t k = xs[axis];
  const int64_t outer = xs.outer(axis) * k, inner = xs.inner(axis);
  Tensor out(xs.with_axis(axis, k * group));
  kern::active().tile(V(x).data(), out.data(), outer, group, inner);
  const int xid = x.id;
  const int id = t.record(std::move(out), x.requires_grad(),
                          [xid, outer, group, inner](Tape& tp, const Tensor& g) {
                            Tensor dx(tp.value_of(xid).shape);
                            kern::active().strided_sum(g.data(), dx.data(), outer, group, inner);
                            tp.accum(xid, dx);
                          },
                          "group_broadcast");
  return {&t, id};
}

// ---- structure ----

Var concat_axis(const std::vector<Var>& xs, int axis) {
  if (xs.empty()) throw std::invalid_argument("concat_axis: no inputs");
  Tape& t = *xs[0].tape;
  const Shape& s0 = V(xs[0]).shape;
  check_axis(s0, axis, "concat_axis");
  int64_t total = 0;
  bool rg = false;
  for (const Var& v : xs) {
    if (v.tape != &t) throw std::invalid_argument("concat_axis: tape mismatch");
    const Shape& s = V(v).shape;
    if (s.rank != s0.rank) throw std::invalid_argument("concat_axis: rank mismatch");
    for (int i = 0; i < s.rank; ++i)
      if (i != axis && s[i] != s0[i])
        throw std::invalid_argument("concat_axis: dim mismatch");
    total += s[axis];
    rg = rg || v.requires_grad();
  }
  const int64_t outer = s0.outer(axis), inner = s0.inner(axis);
  Tensor out(s0.with_axis(axis, total));
  std::vector<int> ids;
  std::vector<int64_t> lens, offs;
  int64_t off = 0;
  for (const Var& v : xs) {
    const int64_t len = V(v).shape[axis];
    for (int64_t o = 0; o < outer; ++o)
      std::memcpy(out.data() + (o * total + off) * inner,
                  V(v).data() + o * len * inner, sizeof(double) * len * inner);
    ids.push_back(v.id);
    lens.push_back(len);
    offs.push_back(off);
    off += len;
  }
  const int id = t.record(
      std::move(out), rg,
      [ids, lens, offs, outer, inner, total](Tape& tp, const Tensor& g) {
        for (size_t i = 0; i < ids.size(); ++i) {
          if (!tp.rg_of(ids[i])) continue;
          Tensor dx(tp.value_of(ids[i]).shape);
          for (int64_t o = 0; o < outer; ++o)
            std::memcpy(dx.data() + o * lens[i] * inner,
                        g.data() + (o * total + offs[i]) * inner,
                        sizeof(double) * lens[i] * inner);
          tp.accum(ids[i], dx);
        }
      },
      "concat_axis");
  return {&t, id};
}

Var slice_axis(Var x, int axis, int64_t start, int64_t len) {
  Tape& t = *x.tape;
  const Shape& xs = V(x).shape;
  check_axis(xs, axis, "slice_axis");
  if (start < 0 || len <= 0 || start + len > xs[axis])
    throw std::invalid_argument("slice_axis: range out of bounds");
  const int64_t outer = xs.outer(axis), n = xs[axis], inner = xs.inner(axis);
  Tensor out(xs.with_axis(axis, len));
  for (int64_t o = 0; o < outer; ++o)
    std::memcpy(out.data() + o * len * inner,
                V(x).data() + (o * n + start) * inner, sizeof(double) * len * inner);
  const int xid = x.id;
  const int id = t.record(std::move(out), x.requires_grad(),
                          [xid, outer, n, inner, start, len](Tape& tp, const Tensor& g) {
                            Tensor dx(tp.value_of(xid).shape);
                            for (int64_t o = 0; o < outer; ++o)
                              std::memcpy(dx.data() + (o * n + start) * inner,
                                          g.data() + o * len * inner,
                                          sizeof(double) * len * inner);
                            tp.accum(xid, dx);
                          },
                          "slice_axis");
  return {&t, id};
}

Var reshape(Var x, const Shape& s) {
  Tape& t = *x.tape;
  if (s.numel() != V(x).numel())
    throw std::invalid_argument("reshape: numel mismatch");
  Tensor out(s);
  out.v = V(x).v;
  const int xid = x.id;
  const int id = t.record(std::move(out), x.requires_grad(),
                          [xid](Tape& tp, const Tensor& g) {
                            Tensor dx(tp.value_of(xid).shape);
                            dx.v = g.v;
                            tp.accum(xid, dx);
                          },
                          "reshape");
  return {&t, id};
}

// ---- elementwise ----

Var relu(Var x) {
  Tape& t = *x.tape;
  Tensor out(V(x).shape);
  kern::active().relu_fwd(V(x).data(), out.data(), out.numel());
  const int xid = x.id;
  const int id = t.record(std::move(out), x.requires_grad(),
                          [xid](Tape& tp, const Tensor& g) {
                            Tensor dx(g.shape);
                            kern::active().relu_bwd(tp.value_of(xid).data(), g.data(),
                                                    dx.data(), g.numel());
                            tp.accum(xid, dx);
                          },
                          "relu");
  return {&t, id};
}

namespace {

template <typename F, typename B>
Var unary_op(Var x, const char* name, F fwd, B bwd_factor) {
  // bwd_factor(xv, outv) = d out / d x
  Tape& t = *x.tape;
  const Tensor& xv = V(x);
  Tensor out(xv.shape);
  for (int64_t i = 0; i < xv.numel(); ++i) out[i] = fwd(xv[i]);
  const int xid = x.id;
  const int id = t.record(std::move(out), x.requires_grad(),
                          [xid, bwd_factor](Tape& tp, const Tensor& g) {
                            const Tensor& xv2 = tp.value_of(xid);
                            Tensor dx(g.shape);
                            for (int64_t i = 0; i < g.numel(); ++i)
                              dx[i] = g[i] * bwd_factor(xv2[i]);
                            tp.accum(xid, dx);
                          },
                          name);
  return {&t, id};
}

}  // namespace

Var tanh_(Var x) {
  return unary_op(
      x, "tanh", [](double v) { return std::tanh(v); },
      [](double v) {
        const double th = std::tanh(v);
        return 1.0 - th * th;
      });
}

Var log_(Var x) {
  for (int64_t i = 0; i < V(x).numel(); ++i)
    if (V(x)[i] <= 0.0) throw std::domain_error("log: input <= 0");
  return unary_op(
      x, "log", [](double v) { return std::log(v); },
      [](double v) { return 1.0 / v; });
}

Var exp_(Var x) {
  return unary_op(
      x, "exp", [](double v) { return std::exp(v); },
      [](double v) { return std::exp(v); });
}

Var square(Var x) {
  return unary_op(
      x, "square", [](double v) { return v * v; },
      [](double v) { return 2.0 * v; });
}

Var sqrt_(Var x) {
  for (int64_t i = 0; i < V(x).numel(); ++i)
    if (V(x)[i] < 0.0) throw std::domain_error("sqrt: input < 0");
  return unary_op(
      x, "sqrt", [](double v) { return std::sqrt(v); },
      [](double v) { return 0.5 / std::sqrt(v); });
}

Var reciprocal(Var x) {
  for (int64_t i = 0; i < V(x).numel(); ++i)
    if (V(x)[i] == 0.0) throw std::domain_error("reciprocal: input == 0");
  return unary_op(
      x, "reciprocal", [](double v) { return 1.0 / v; },
      [](double v) { return -1.0 / (v * v); });
}

Var abs_(Var x) {
  return unary_op(
      x, "abs", [](double v) { return std::fabs(v); },
      [](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Var softmax_tau(Var x, int axis, double tau) {
  if (tau <= 0.0) throw std::invalid_argument("softmax_tau: tau must be positive");
  Tape& t = *x.tape;
  const Shape& xs = V(x).shape;
  check_axis(xs, axis, "softmax_tau");
  const int64_t outer = xs.outer(axis), n = xs[axis], inner = xs.inner(axis);
  Tensor out(xs);
  const double* xv = V(x).data();
  double* ov = out.data();
  for (int64_t o = 0; o < outer; ++o) {
    for (int64_t i = 0; i < inner; ++i) {
      const int64_t base = o * n * inner + i;
      double m = xv[base];
      for (int64_t a = 1; a < n; ++a) m = std::max(m, xv[base + a * inner]);
      double s = 0.0;
      for (int64_t a = 0; a < n; ++a) {
        const double e = std::exp((xv[base + a * inner] - m) / tau);
        ov[base + a * inner] = e;
        s += e;
      }
      const double inv = 1.0 / s;
      for (int64_t a = 0; a < n; ++a) ov[base + a * inner] *= inv;
    }
  }
  const int xid = x.id;
  const int id = t.record(
      std::move(out), x.requires_grad(),
      [xid, outer, n, inner, tau](Tape& tp, const Tensor& g) {
        // read probabilities from our own output: it is the node right after
        // xid's consumers; recompute instead to stay self-contained
        const Tensor& xv2 = tp.value_of(xid);
        Tensor dx(xv2.shape);
        const double* xp = xv2.data();
        const double* gp = g.data();
        double* dp = dx.data();
        std::vector<double> prob(static_cast<size_t>(n));
        for (int64_t o = 0; o < outer; ++o) {
          for (int64_t i = 0; i < inner; ++i) {
            const int64_t base = o * n * inner + i;
            double m = xp[base];
            for (int64_t a = 1; a < n; ++a) m = std::max(m, xp[base + a * inner]);
            double s = 0.0;
            for (int64_t a = 0; a < n; ++a) {
              prob[static_cast<size_t>(a)] = std::exp((xp[base + a * inner] - m) / tau);
              s += prob[static_cast<size_t>(a)];
            }
            const double inv = 1.0 / s;
            double dot = 0.0;
            for (int64_t a = 0; a < n; ++a) {
              prob[static_cast<size_t>(a)] *= inv;
              dot += gp[base + a * inner] * prob[static_cast<size_t>(a)];
            }
            for (int64_t a = 0; a < n; ++a)
              dp[base + a * inner] =
                  (gp[base + a * inner] - dot) * prob[static_cast<size_t>(a)] / tau;
          }
        }
        tp.accum(xid, dx);
      },
      "softmax_tau");
  return {&t, id};
}

Var batch_standardize(Var x, BnStats& stats, bool train_mode, bool update_stats,
                      double momentum, double eps) {
  if (update_stats && !train_mode)
    throw std::invalid_argument("batch_standardize: stats update needs train mode");
  Tape& t = *x.tape;
  const Shape& xs = V(x).shape;
  const int64_t c = xs[xs.rank - 1];
  const int64_t p = xs.numel() / c;
  if (!stats.initialized) stats.init(c);
  if (static_cast<int64_t>(stats.mean.size()) != c)
    throw std::invalid_argument("batch_standardize: channel count mismatch");

  std::vector<double> mu(static_cast<size_t>(c), 0.0), sd(static_cast<size_t>(c), 0.0);
  const double* xv = V(x).data();
  if (train_mode) {
    for (int64_t i = 0; i < p; ++i)
      for (int64_t j = 0; j < c; ++j) mu[static_cast<size_t>(j)] += xv[i * c + j];
    for (int64_t j = 0; j < c; ++j) mu[static_cast<size_t>(j)] /= static_cast<double>(p);
    std::vector<double> var(static_cast<size_t>(c), 0.0);
    for (int64_t i = 0; i < p; ++i)
      for (int64_t j = 0; j < c; ++j) {
        const double d = xv[i * c + j] - mu[static_cast<size_t>(j)];
        var[static_cast<size_t>(j)] += d * d;
      }
    for (int64_t j = 0; j < c; ++j) {
      var[static_cast<size_t>(j)] /= static_cast<double>(p);
      sd[static_cast<size_t>(j)] = std::sqrt(var[static_cast<size_t>(j)] + eps);
    }
    if (update_stats) {
      for (int64_t j = 0; j < c; ++j) {
        stats.mean[static_cast<size_t>(j)] =
            momentum * stats.mean[static_cast<size_t>(j)] +
            (1.0 - momentum) * mu[static_cast<size_t>(j)];
        stats.var[static_cast<size_t>(j)] =
            momentum * stats.var[static_cast<size_t>(j)] +
            (1.0 - momentum) * var[static_cast<size_t>(j)];
      }
    }
  } else {
    for (int64_t j = 0; j < c; ++j) {
      mu[static_cast<size_t>(j)] = stats.mean[static_cast<size_t>(j)];
      sd[static_cast<size_t>(j)] = std::sqrt(stats.var[static_cast<size_t>(j)] + eps);
    }
  }

  Tensor out(xs);
  double* ov = out.data();
  for (int64_t i = 0; i < p; ++i)
    for (int64_t j = 0; j < c; ++j)
      ov[i * c + j] = (xv[i * c + j] - mu[static_cast<size_t>(j)]) / sd[static_cast<size_t>(j)];

  const int xid = x.id;
  if (train_mode) {
    // capture normalized output by value for the VJP
    Tensor y = out;
    const int id = t.record(
        std::move(out), x.requires_grad(),
        [xid, y = std::move(y), sd, p, c](Tape& tp, const Tensor& g) {
          std::vector<double> mg(static_cast<size_t>(c), 0.0),
              mgy(static_cast<size_t>(c), 0.0);
          const double* gp = g.data();
          const double* yp = y.data();
          for (int64_t i = 0; i < p; ++i)
            for (int64_t j = 0; j < c; ++j) {
              mg[static_cast<size_t>(j)] += gp[i * c + j];
              mgy[static_cast<size_t>(j)] += gp[i * c + j] * yp[i * c + j];
            }
          for (int64_t j = 0; j < c; ++j) {
            mg[static_cast<size_t>(j)] /= static_cast<double>(p);
            mgy[static_cast<size_t>(j)] /= static_cast<double>(p);
          }
          Tensor dx(g.shape);
          double* dp = dx.data();
          for (int64_t i = 0; i < p; ++i)
            for (int64_t j = 0; j < c; ++j)
              dp[i * c + j] = (gp[i * c + j] - mg[static_cast<size_t>(j)] -
                               yp[i * c + j] * mgy[static_cast<size_t>(j)]) /
                              sd[static_cast<size_t>(j)];
          tp.accum(xid, dx);
        },
        "batch_standardize");
    return {&t, id};
  }
  const int id = t.record(std::move(out), x.requires_grad(),
                          [xid, sd, p, c](Tape& tp, const Tensor& g) {
                            Tensor dx(g.shape);
                            const double* gp = g.data();
                            double* dp = dx.data();
                            for (int64_t i = 0; i < p; ++i)
                              for (int64_t j = 0; j < c; ++j)
                                dp[i * c + j] = gp[i * c + j] / sd[static_cast<size_t>(j)];
                            tp.accum(xid, dx);
                          },
                          "batch_standardize");
  return {&t, id};
}

Var schedule_apply(const std::vector<Var>& rows, Var h, int64_t n_r) {
  if (rows.empty()) throw std::invalid_argument("schedule_apply: no rows");
  Tape& t = *h.tape;
  const Shape& hs = V(h).shape;
  if (hs.rank != 5) throw std::invalid_argument("schedule_apply: h must be rank 5");
  const int64_t b = hs[0], m = hs[1], kr = hs[2], nt = hs[3], ch = hs[4];
  if (kr % n_r != 0) throw std::invalid_argument("schedule_apply: bad n_r");
  const int64_t k = kr / n_r;
  const int64_t kp = static_cast<int64_t>(rows.size());
  const Shape row_shape{b, m, k};
  bool rg = h.requires_grad();
  std::vector<int> row_ids;
  for (const Var& r : rows) {
    if (r.tape != &t) throw std::invalid_argument("schedule_apply: tape mismatch");
    if (V(r).shape != row_shape)
      throw std::invalid_argument("schedule_apply: row shape must be (B,M,K)");
    rg = rg || r.requires_grad();
    row_ids.push_back(r.id);
  }

  const int64_t blk = nt * ch;  // contiguous (n, c) block
  Tensor out(Shape{b, m, kp * n_r, nt, ch});
  const auto& kk = kern::active();
  for (int64_t ib = 0; ib < b; ++ib)
    for (int64_t im = 0; im < m; ++im) {
      const double* hbase = V(h).data() + ((ib * m + im) * kr) * blk;
      for (int64_t ikp = 0; ikp < kp; ++ikp) {
        const double* rv = V(rows[static_cast<size_t>(ikp)]).data() + (ib * m + im) * k;
        for (int64_t ir = 0; ir < n_r; ++ir) {
          double* ob = out.data() + (((ib * m + im) * (kp * n_r)) + ikp * n_r + ir) * blk;
          for (int64_t ik = 0; ik < k; ++ik)
            kk.axpy(rv[ik], hbase + (ik * n_r + ir) * blk, ob, blk);
        }
      }
    }

  const int hid = h.id;
  const int id = t.record(
      std::move(out), rg,
      [row_ids, hid, b, m, k, kp, n_r, blk](Tape& tp, const Tensor& g) {
        const Tensor& hv = tp.value_of(hid);
        const int64_t kr2 = k * n_r;
        for (int64_t ikp = 0; ikp < kp; ++ikp) {
          const int rid = row_ids[static_cast<size_t>(ikp)];
          if (!tp.rg_of(rid)) continue;
          Tensor dr(Shape{b, m, k});
          for (int64_t ib = 0; ib < b; ++ib)
            for (int64_t im = 0; im < m; ++im) {
              const double* hbase = hv.data() + ((ib * m + im) * kr2) * blk;
              double* drv = dr.data() + (ib * m + im) * k;
              for (int64_t ik = 0; ik < k; ++ik) {
                double acc = 0.0;
                for (int64_t ir = 0; ir < n_r; ++ir) {
                  const double* gb =
                      g.data() + (((ib * m + im) * (kp * n_r)) + ikp * n_r + ir) * blk;
                  const double* hb = hbase + (ik * n_r + ir) * blk;
                  for (int64_t j = 0; j < blk; ++j) acc += gb[j] * hb[j];
                }
                drv[ik] = acc;
              }
            }
          tp.accum(rid, dr);
        }
        if (tp.rg_of(hid)) {
          Tensor dh(hv.shape);
          const auto& kk2 = kern::active();
          for (int64_t ib = 0; ib < b; ++ib)
            for (int64_t im = 0; im < m; ++im) {
              double* dhbase = dh.data() + ((ib * m + im) * kr2) * blk;
              for (int64_t ikp = 0; ikp < kp; ++ikp) {
                const double* rv =
                    tp.value_of(row_ids[static_cast<size_t>(ikp)]).data() + (ib * m + im) * k;
                for (int64_t ir = 0; ir < n_r; ++ir) {
                  const double* gb =
                      g.data() + (((ib * m + im) * (kp * n_r)) + ikp * n_r + ir) * blk;
                  for (int64_t ik = 0; ik < k; ++ik)
                    kk2.axpy(rv[ik], gb, dhbase + (ik * n_r + ir) * blk, blk);
                }
              }
            }
          tp.accum(hid, dh);
        }
      },
      "schedule_apply");
  return {&t, id};
}

Var perturb_small_real(Var re, Var im, double eps, int64_t* count) {
  Tape& t = same_tape(re, im);
  need_same_shape(re, im, "perturb_small_real");
  const Tensor& rv = V(re);
  const Tensor& iv = V(im);
  Tensor out = rv;
  int64_t hits = 0;
  for (int64_t i = 0; i < out.numel(); ++i) {
    if (std::hypot(rv[i], iv[i]) < eps) {
      out[i] += eps;
      ++hits;
    }
  }
  if (count) *count += hits;
  const int rid = re.id;
  const int id = t.record(std::move(out), re.requires_grad(),
                          [rid](Tape& tp, const Tensor& g) { tp.accum(rid, g); },
                          "perturb_small_real");
  return {&t, id};
}

double scalar_value(Var v) {
  if (V(v).numel() != 1) throw std::invalid_argument("scalar_value: not a scalar");
  return V(v)[0];
}

double grad_check(const std::function<Var(Tape&, std::vector<Var>&)>& build,
                  const std::vector<Tensor>& point, double eps) {
  Tape t;
  std::vector<Var> vars;
  vars.reserve(point.size());
  for (const Tensor& p : point) vars.push_back(t.leaf(p, true));
  Var loss = build(t, vars);
  const double base [[maybe_unused]] = scalar_value(loss);
  t.backward(loss);
  std::vector<Tensor> ad;
  ad.reserve(vars.size());
  for (Var v : vars) ad.push_back(t.grad(v));

  auto eval = [&](const std::vector<Tensor>& pt) {
    Tape tt;
    std::vector<Var> vv;
    vv.reserve(pt.size());
    for (const Tensor& p : pt) vv.push_back(tt.leaf(p, false));
    return scalar_value(build(tt, vv));
  };

  double worst = 0.0;
  std::vector<Tensor> pt = point;
  for (size_t i = 0; i < point.size(); ++i) {
    for (int64_t j = 0; j < point[i].numel(); ++j) {
      const double orig = pt[i][j];
      pt[i][j] = orig + eps;
      const double fp = eval(pt);
      pt[i][j] = orig - eps;
      const double fm = eval(pt);
      pt[i][j] = orig;
      const double fd = (fp - fm) / (2.0 * eps);
      const double err = std::fabs(ad[i][j] - fd) / std::max(1.0, std::fabs(fd));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace wbgnn::ad
