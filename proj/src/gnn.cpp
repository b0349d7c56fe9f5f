#include "wbgnn/gnn.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace wbgnn {

namespace {

void check_widths(const std::vector<int>& widths, int wpl) {
  if (widths.size() < 2) throw std::invalid_argument("gnn: need at least one layer");
  for (int w : widths)
    if (w < 1 || w > 1 << 16) throw std::invalid_argument("gnn: bad width");
  if (wpl != kSchedulerWpl && wpl != kPrecoderWpl)
    throw std::invalid_argument("gnn: bad weights-per-layer count");
}

void check(const Checkpoint& c) {
  if (c.stacks.empty()) throw std::invalid_argument("checkpoint: no stacks");
  const std::vector<int>& widths = c.stacks.front().widths;
  check_widths(widths, c.wpl());
  for (const GnnStack& s : c.stacks) {
    if (s.widths != widths) throw std::invalid_argument("checkpoint: stack width mismatch");
    if (s.depth() + 1 != static_cast<int>(widths.size()))
      throw std::invalid_argument("checkpoint: layer count mismatch");
    for (int l = 0; l < s.depth(); ++l) {
      const GnnLayer& lay = s.layers[static_cast<size_t>(l)];
      if (static_cast<int>(lay.w.size()) != c.wpl())
        throw std::invalid_argument("checkpoint: matrix count mismatch");
      for (const Tensor& w : lay.w) {
        if (w.shape.rank != 2 || w.shape.d[0] != widths[static_cast<size_t>(l) + 1] ||
            w.shape.d[1] != widths[static_cast<size_t>(l)])
          throw std::invalid_argument("checkpoint: matrix shape mismatch");
      }
      if (s.hidden(l) != lay.bn.initialized)
        throw std::invalid_argument("checkpoint: stats presence mismatch");
    }
  }
  switch (c.kind) {
    case NetKind::scheduler:
    case NetKind::precoder:
      if (c.stacks.size() != 1) throw std::invalid_argument("checkpoint: expected one stack");
      break;
    case NetKind::per_stream:
      break;
    default:
      throw std::invalid_argument("checkpoint: bad kind");
  }
  if (c.kind == NetKind::precoder) {
    if (c.n_rf < 1 || widths.back() != 4 * c.n_rf + 2)
      throw std::invalid_argument("checkpoint: output width disagrees with n_rf");
  } else if (c.n_rf != 0) {
    throw std::invalid_argument("checkpoint: n_rf set on a scheduler");
  }
}

}  // namespace

GnnStack make_stack(const std::vector<int>& widths, int wpl, Rng& rng) {
  check_widths(widths, wpl);
  GnnStack s;
  s.widths = widths;
  s.layers.resize(widths.size() - 1);
  for (size_t l = 0; l + 1 < widths.size(); ++l) {
    GnnLayer& lay = s.layers[l];
    const int c_in = widths[l], c_out = widths[l + 1];
    const double a = std::sqrt(1.0 / c_in);
    lay.w.reserve(static_cast<size_t>(wpl));
    for (int j = 0; j < wpl; ++j) {
      Tensor w(Shape{c_out, c_in});
      for (double& x : w.v) x = rng.uniform(-a, a);
      lay.w.push_back(std::move(w));
    }
    // The within-group matrix (index 3) multiplies an input that is exactly
    // zero whenever the group has a single element, so it gets no gradient
    // at N_R = 1 and whatever it holds leaks into larger-group evaluation.
    // Start it at zero: untrained means inert.
    for (double& x : lay.w[3].v) x = 0.0;
    if (l + 2 < widths.size()) lay.bn.init(c_out);
  }
  return s;
}

Checkpoint make_scheduler(const std::vector<int>& widths, Rng& rng) {
  Checkpoint c;
  c.kind = NetKind::scheduler;
  c.use_attention = false;
  c.stacks.push_back(make_stack(widths, kSchedulerWpl, rng));
  check(c);
  return c;
}

Checkpoint make_precoder(const std::vector<int>& widths, int n_rf, bool use_attention,
                         Rng& rng) {
  Checkpoint c;
  c.kind = NetKind::precoder;
  c.use_attention = use_attention;
  c.n_rf = n_rf;
  c.stacks.push_back(make_stack(widths, kPrecoderWpl, rng));
  check(c);
  return c;
}

Checkpoint make_per_stream(const std::vector<int>& widths, int kp, Rng& rng) {
  if (kp < 1) throw std::invalid_argument("make_per_stream: bad stream count");
  Checkpoint c;
  c.kind = NetKind::per_stream;
  c.use_attention = false;
  for (int i = 0; i < kp; ++i) c.stacks.push_back(make_stack(widths, kSchedulerWpl, rng));
  check(c);
  return c;
}

void write_wbnn(const std::string& path, const Checkpoint& c) {
  check(c);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path);
  auto w32 = [&](uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
  out.write("WBNN", 4);
  w32(1);
  w32(static_cast<uint32_t>(c.kind));
  w32(c.use_attention ? 1u : 0u);
  w32(static_cast<uint32_t>(c.n_rf));
  w32(static_cast<uint32_t>(c.trained_epochs));
  w32(static_cast<uint32_t>(c.stacks.size()));
  const std::vector<int>& widths = c.stacks.front().widths;
  w32(static_cast<uint32_t>(widths.size()));
  for (int w : widths) w32(static_cast<uint32_t>(w));
  w32(static_cast<uint32_t>(c.wpl()));
  for (const GnnStack& s : c.stacks)
    for (int l = 0; l < s.depth(); ++l) {
      const GnnLayer& lay = s.layers[static_cast<size_t>(l)];
      for (const Tensor& w : lay.w)
        out.write(reinterpret_cast<const char*>(w.v.data()),
                  static_cast<std::streamsize>(w.v.size() * sizeof(double)));
      if (s.hidden(l)) {
        out.write(reinterpret_cast<const char*>(lay.bn.mean.data()),
                  static_cast<std::streamsize>(lay.bn.mean.size() * sizeof(double)));
        out.write(reinterpret_cast<const char*>(lay.bn.var.data()),
                  static_cast<std::streamsize>(lay.bn.var.size() * sizeof(double)));
      }
    }
  if (!out) throw std::runtime_error("write failed: " + path);
}

Checkpoint read_wbnn(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "WBNN", 4) != 0)
    throw std::runtime_error(path + ": not a WBNN file");
  auto r32 = [&]() {
    uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 4);
    if (!in) throw std::runtime_error(path + ": truncated header");
    return v;
  };
  const uint32_t version = r32();
  if (version != 1) throw std::runtime_error(path + ": unsupported version");
  Checkpoint c;
  const uint32_t kind = r32();
  if (kind < 1 || kind > 3) throw std::runtime_error(path + ": bad network kind");
  c.kind = static_cast<NetKind>(kind);
  c.use_attention = (r32() & 1u) != 0;
  c.n_rf = static_cast<int>(r32());
  c.trained_epochs = r32();
  const uint32_t n_stacks = r32();
  const uint32_t n_widths = r32();
  if (n_stacks < 1 || n_stacks > 1024 || n_widths < 2 || n_widths > 64)
    throw std::runtime_error(path + ": implausible geometry");
  std::vector<int> widths(n_widths);
  for (uint32_t i = 0; i < n_widths; ++i) widths[i] = static_cast<int>(r32());
  const uint32_t wpl = r32();
  c.stacks.resize(n_stacks);
  for (GnnStack& s : c.stacks) {
    s.widths = widths;
    s.layers.resize(n_widths - 1);
    for (int l = 0; l + 1 < static_cast<int>(n_widths); ++l) {
      GnnLayer& lay = s.layers[static_cast<size_t>(l)];
      const int c_in = widths[static_cast<size_t>(l)];
      const int c_out = widths[static_cast<size_t>(l) + 1];
      for (uint32_t j = 0; j < wpl; ++j) {
        Tensor w(Shape{c_out, c_in});
        in.read(reinterpret_cast<char*>(w.v.data()),
                static_cast<std::streamsize>(w.v.size() * sizeof(double)));
        lay.w.push_back(std::move(w));
      }
      if (s.hidden(l)) {
        lay.bn.init(c_out);
        in.read(reinterpret_cast<char*>(lay.bn.mean.data()),
                static_cast<std::streamsize>(lay.bn.mean.size() * sizeof(double)));
        in.read(reinterpret_cast<char*>(lay.bn.var.data()),
                static_cast<std::streamsize>(lay.bn.var.size() * sizeof(double)));
      }
      if (!in) throw std::runtime_error(path + ": truncated payload");
    }
  }
  in.peek();
  if (!in.eof()) throw std::runtime_error(path + ": trailing bytes");
  if (static_cast<int>(wpl) != c.wpl())
    throw std::runtime_error(path + ": weight count disagrees with kind");
  for (const GnnStack& s : c.stacks)
    for (const GnnLayer& lay : s.layers)
      for (const Tensor& w : lay.w)
        if (!w.all_finite()) throw std::runtime_error(path + ": non-finite weight");
  check(c);
  return c;
}

std::vector<Tensor*> trainable(Checkpoint& c) {
  std::vector<Tensor*> out;
  for (GnnStack& s : c.stacks)
    for (GnnLayer& lay : s.layers)
      for (Tensor& w : lay.w) out.push_back(&w);
  return out;
}

TapedStack tape_stack(ad::Tape& t, const GnnStack& s, bool requires_grad) {
  TapedStack ts;
  ts.w.resize(s.layers.size());
  for (size_t l = 0; l < s.layers.size(); ++l)
    for (const Tensor& w : s.layers[l].w) {
      ad::Var v = t.leaf(w, requires_grad);
      ts.w[l].push_back(v);
      ts.flat.push_back(v);
    }
  return ts;
}

std::vector<TapedStack> tape_checkpoint(ad::Tape& t, const Checkpoint& c,
                                        bool requires_grad) {
  std::vector<TapedStack> out;
  out.reserve(c.stacks.size());
  for (const GnnStack& s : c.stacks) out.push_back(tape_stack(t, s, requires_grad));
  return out;
}

}  // namespace wbgnn
