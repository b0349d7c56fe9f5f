#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wbgnn/autodiff.hpp"
#include "wbgnn/rng.hpp"
#include "wbgnn/tensor.hpp"

namespace wbgnn {

// One update layer: a fixed set of weight matrices, each (c_out, c_in).
// Hidden layers also carry running standardization stats.
struct GnnLayer {
  std::vector<Tensor> w;
  ad::BnStats bn;
};

struct GnnStack {
  std::vector<int> widths;       // channel counts, size depth+1
  std::vector<GnnLayer> layers;  // size depth

  int depth() const { return static_cast<int>(layers.size()); }
  bool hidden(int l) const { return l + 1 < depth(); }
};

inline constexpr int kSchedulerWpl = 5;
inline constexpr int kPrecoderWpl = 7;

enum class NetKind : uint32_t {
  scheduler = 1,   // one stack scoring all users jointly
  precoder = 2,    // one stack emitting the hybrid solution heads
  per_stream = 3,  // independent stacks, one per scheduled stream
};

struct Checkpoint {
  NetKind kind = NetKind::scheduler;
  bool use_attention = true;
  int n_rf = 0;  // precoder only; 0 otherwise
  int64_t trained_epochs = 0;
  std::vector<GnnStack> stacks;

  int wpl() const { return kind == NetKind::precoder ? kPrecoderWpl : kSchedulerWpl; }
};

// weights uniform in (-a, a) with a = sqrt(1 / c_in); stats start at (0, 1)
GnnStack make_stack(const std::vector<int>& widths, int wpl, Rng& rng);

Checkpoint make_scheduler(const std::vector<int>& widths, Rng& rng);
Checkpoint make_precoder(const std::vector<int>& widths, int n_rf, bool use_attention,
                         Rng& rng);
Checkpoint make_per_stream(const std::vector<int>& widths, int kp, Rng& rng);

void write_wbnn(const std::string& path, const Checkpoint& c);
Checkpoint read_wbnn(const std::string& path);

// every weight matrix in a fixed traversal order (stack, layer, matrix)
std::vector<Tensor*> trainable(Checkpoint& c);

// weight matrices as tape leaves; flat order matches trainable()
struct TapedStack {
  std::vector<std::vector<ad::Var>> w;  // [layer][matrix]
  std::vector<ad::Var> flat;
};
TapedStack tape_stack(ad::Tape& t, const GnnStack& s, bool requires_grad);
std::vector<TapedStack> tape_checkpoint(ad::Tape& t, const Checkpoint& c,
                                        bool requires_grad);

}  // namespace wbgnn
