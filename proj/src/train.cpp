#include "wbgnn/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <thread>

#include "wbgnn/flops.hpp"
#include "wbgnn/precoder.hpp"
#include "wbgnn/scheduler.hpp"

namespace wbgnn {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();
constexpr uint64_t kSeedStride = 0x9E3779B97F4A7C15ULL;

void fisher_yates(std::vector<int64_t>& v, Rng& rng) {
  for (int64_t i = static_cast<int64_t>(v.size()) - 1; i > 0; --i) {
    const int64_t j = rng.uniform_int(i + 1);
    std::swap(v[static_cast<size_t>(i)], v[static_cast<size_t>(j)]);
  }
}

std::vector<int64_t> iota_idx(int64_t n) {
  std::vector<int64_t> v(static_cast<size_t>(n));
  std::iota(v.begin(), v.end(), int64_t{0});
  return v;
}

// extracted channels of the chosen users as complex batch constants
cg::CVar pack_extracted(ad::Tape& t, const Dataset& ds,
                        const std::vector<int64_t>& idx,
                        const std::vector<const ScheduleBasis*>& bases) {
  const int64_t b = static_cast<int64_t>(idx.size());
  const int m = ds.cfg.m, nr = ds.cfg.n_r, nt = ds.cfg.n_t;
  const int kp = bases.front()->kp;
  const int64_t per = static_cast<int64_t>(m) * kp * nr * nt;
  Tensor re(Shape{b, m, static_cast<int64_t>(kp) * nr, nt, 1});
  Tensor im(Shape{b, m, static_cast<int64_t>(kp) * nr, nt, 1});
  for (int64_t i = 0; i < b; ++i) {
    const ChannelSample hp =
        extract_scheduled(ds.sample(idx[static_cast<size_t>(i)]), *bases[static_cast<size_t>(i)]);
    for (int64_t j = 0; j < per; ++j) {
      re[i * per + j] = hp.h[static_cast<size_t>(j)].real();
      im[i * per + j] = hp.h[static_cast<size_t>(j)].imag();
    }
  }
  return {t.constant(std::move(re)), t.constant(std::move(im))};
}

std::vector<const ScheduleBasis*> basis_ptrs(const std::vector<ScheduleBasis>& all,
                                             const std::vector<int64_t>& idx) {
  std::vector<const ScheduleBasis*> p(idx.size());
  for (size_t i = 0; i < idx.size(); ++i) p[i] = &all[static_cast<size_t>(idx[i])];
  return p;
}

struct PreGraph {
  ad::Var loss;
  std::vector<TapedStack> tw;
};

// fixed-basis precoder loss over one batch
PreGraph precoder_loss_graph(ad::Tape& t, Checkpoint& prec, const Dataset& ds,
                             const std::vector<int64_t>& idx,
                             const std::vector<const ScheduleBasis*>& bases,
                             bool train_bn, bool train_weights) {
  PreGraph g;
  g.tw = tape_checkpoint(t, prec, train_weights);
  cg::CVar hp = pack_extracted(t, ds, idx, bases);
  const int kp = bases.front()->kp;
  PrecoderOut out = precoder_forward(t, prec, g.tw[0], hp, kp, ds.cfg.n_r,
                                     ds.cfg.p_tot_w(), train_bn, train_bn);
  ad::Var se = sum_rate_graph(t, hp, out.wrf, out.wbb, out.v, kp, ds.cfg.n_r,
                              ds.cfg.noise_power_w());
  g.loss = ad::neg(ad::axis_mean(se, 0));
  return g;
}

struct SoftGraph {
  ad::Var loss;
  std::vector<TapedStack> sched_tw;
  std::vector<TapedStack> prec_tw;
};

// SoftTop scheduling flows through the extraction so both modules get gradients
SoftGraph soft_loss_graph(ad::Tape& t, Checkpoint& sched, Checkpoint& prec,
                          const Dataset& ds, const std::vector<int64_t>& idx,
                          const std::vector<Features>& feats, double tau,
                          bool train_sched, bool train_prec, bool sched_bn_train,
                          bool prec_bn_train) {
  SoftGraph g;
  g.sched_tw = tape_checkpoint(t, sched, train_sched);
  g.prec_tw = tape_checkpoint(t, prec, train_prec);
  BatchLeaves leaves = make_batch_leaves(t, ds, idx, feats);
  const int k = ds.cfg.k, nr = ds.cfg.n_r, kp = ds.cfg.k_sched;
  std::vector<ad::Var> rows;
  if (sched.kind == NetKind::scheduler) {
    ad::Var z = scheduler_scores(t, sched.stacks[0], g.sched_tw[0], leaves, k, nr,
                                 sched_bn_train, sched_bn_train);
    rows = soft_top(t, z, kp, tau);
  } else {
    rows = sgnn_soft_rows(t, sched, g.sched_tw, leaves, k, nr, tau, sched_bn_train,
                          sched_bn_train);
  }
  cg::CVar hp{ad::schedule_apply(rows, leaves.h_re, nr),
              ad::schedule_apply(rows, leaves.h_im, nr)};
  PrecoderOut out = precoder_forward(t, prec, g.prec_tw[0], hp, kp, nr,
                                     ds.cfg.p_tot_w(), prec_bn_train, prec_bn_train);
  ad::Var se = sum_rate_graph(t, hp, out.wrf, out.wbb, out.v, kp, nr,
                              ds.cfg.noise_power_w());
  g.loss = ad::neg(ad::axis_mean(se, 0));
  return g;
}

double checked_loss_value(ad::Var loss, const char* phase, int epoch, double tau) {
  const double v = ad::scalar_value(loss);
  if (!std::isfinite(v))
    throw std::runtime_error(std::string("train: non-finite loss in ") + phase +
                             " epoch " + std::to_string(epoch) + " (tau=" +
                             format_double(tau) + ")");
  return v;
}

std::vector<Tensor> collect_grads(ad::Tape& t, const std::vector<TapedStack>& tw) {
  std::vector<Tensor> g;
  for (const TapedStack& s : tw)
    for (const ad::Var& v : s.flat) g.push_back(t.grad(v));
  return g;
}

std::vector<ScheduleBasis> hard_bases_chunk(Checkpoint& sched, const Dataset& ds,
                                            const std::vector<int64_t>& idx,
                                            const std::vector<Features>& feats,
                                            int kp) {
  ad::Tape t;
  if (sched.kind == NetKind::scheduler) {
    auto tw = tape_checkpoint(t, sched, false);
    BatchLeaves leaves = make_batch_leaves(t, ds, idx, feats);
    ad::Var z = scheduler_scores(t, sched.stacks[0], tw[0], leaves, ds.cfg.k,
                                 ds.cfg.n_r, false, false);
    return hard_top(z.val(), kp);
  }
  BatchLeaves leaves = make_batch_leaves(t, ds, idx, feats);
  return sgnn_hard(t, sched, leaves, ds.cfg.k, ds.cfg.n_r);
}

struct ChunkSe {
  std::vector<double> se;
  double rf = 0.0, comb = 0.0, pw = 0.0;
};

ChunkSe precoder_se_chunk(Checkpoint& prec, const Dataset& ds,
                          const std::vector<int64_t>& idx,
                          const std::vector<const ScheduleBasis*>& bases) {
  ad::Tape t;
  auto tw = tape_checkpoint(t, prec, false);
  cg::CVar hp = pack_extracted(t, ds, idx, bases);
  const int kp = bases.front()->kp, nr = ds.cfg.n_r;
  const double p_tot = ds.cfg.p_tot_w(), s2 = ds.cfg.noise_power_w();
  PrecoderOut out = precoder_forward(t, prec, tw[0], hp, kp, nr, p_tot, false, false);
  ChunkSe r;
  r.se.resize(idx.size());
  for (size_t i = 0; i < idx.size(); ++i) {
    HybridSolution sol = solution_from_graph(
        out.wrf.re.val(), out.wrf.im.val(), out.wbb.re.val(), out.wbb.im.val(),
        out.v.re.val(), out.v.im.val(), static_cast<int64_t>(i), ds.cfg.m, kp,
        prec.n_rf, ds.cfg.n_t, nr);
    const ConstraintReport c = check_constraints(sol, p_tot);
    r.rf = std::max(r.rf, c.rf_modulus);
    r.comb = std::max(r.comb, c.comb_modulus);
    r.pw = std::max(r.pw, c.power_rel);
    r.se[i] = sum_rate(ds.sample(idx[i]), *bases[i], sol, s2);
  }
  return r;
}

void check_checkpoints(const Checkpoint* sched, const Checkpoint& prec) {
  if (prec.kind != NetKind::precoder)
    throw std::invalid_argument("evaluate: precoder checkpoint expected");
  if (sched && sched->kind != NetKind::scheduler && sched->kind != NetKind::per_stream)
    throw std::invalid_argument("evaluate: scheduler checkpoint expected");
}

struct EvalAccum {
  std::vector<double> se;
  std::vector<double> strongest_prec, strongest_zf, greedy_zf, exhaustive_zf, matched;
  std::vector<double> rf, comb, pw;  // per worker maxima
};

// chunk-striped hard-path evaluation; every write goes to a slot owned by
// exactly one worker, so thread count never changes a number
void eval_worker(int tid, int nthreads, const Checkpoint* sched_in,
                 const Checkpoint& prec_in, const Dataset& ds, const EvalOptions& opt,
                 int kp, bool bypass, const std::vector<ScheduleBasis>* fixed,
                 std::vector<Features>* feats, EvalAccum* acc) {
  Checkpoint prec = prec_in;
  Checkpoint sched;
  const bool use_gnn = sched_in != nullptr && !bypass;
  if (use_gnn) sched = *sched_in;
  const double p_tot = ds.cfg.p_tot_w(), s2 = ds.cfg.noise_power_w();
  const int64_t n = ds.count;
  const int64_t chunk = std::max<int64_t>(1, opt.chunk);
  const int64_t nchunks = (n + chunk - 1) / chunk;
  for (int64_t c = tid; c < nchunks; c += nthreads) {
    const int64_t lo = c * chunk, hi = std::min<int64_t>(n, lo + chunk);
    std::vector<int64_t> idx(static_cast<size_t>(hi - lo));
    std::iota(idx.begin(), idx.end(), lo);

    std::vector<ScheduleBasis> local;
    std::vector<const ScheduleBasis*> bp;
    if (use_gnn) {
      for (int64_t s = lo; s < hi; ++s)
        (*feats)[static_cast<size_t>(s)] = compute_features(ds.sample(s));
      local = hard_bases_chunk(sched, ds, idx, *feats, kp);
      bp.resize(local.size());
      for (size_t i = 0; i < local.size(); ++i) bp[i] = &local[i];
    } else {
      bp = basis_ptrs(*fixed, idx);
    }

    ChunkSe main = precoder_se_chunk(prec, ds, idx, bp);
    for (size_t i = 0; i < idx.size(); ++i) acc->se[static_cast<size_t>(idx[i])] = main.se[i];
    acc->rf[static_cast<size_t>(tid)] = std::max(acc->rf[static_cast<size_t>(tid)], main.rf);
    acc->comb[static_cast<size_t>(tid)] = std::max(acc->comb[static_cast<size_t>(tid)], main.comb);
    acc->pw[static_cast<size_t>(tid)] = std::max(acc->pw[static_cast<size_t>(tid)], main.pw);

    if (opt.strongest_precoder) {
      std::vector<ScheduleBasis> sb;
      std::vector<const ScheduleBasis*> sp(idx.size());
      sb.reserve(idx.size());
      for (size_t i = 0; i < idx.size(); ++i) {
        sb.push_back(schedule_strongest(ds.sample(idx[i]), kp));
        sp[i] = &sb.back();
      }
      ChunkSe st = precoder_se_chunk(prec, ds, idx, sp);
      for (size_t i = 0; i < idx.size(); ++i)
        acc->strongest_prec[static_cast<size_t>(idx[i])] = st.se[i];
    }

    for (int64_t s = lo; s < hi; ++s) {
      const ChannelSample h = ds.sample(s);
      if (opt.strongest_zf)
        acc->strongest_zf[static_cast<size_t>(s)] =
            digital_zf_se(extract_scheduled(h, schedule_strongest(h, kp)), p_tot, s2);
      if (opt.greedy_zf)
        acc->greedy_zf[static_cast<size_t>(s)] =
            greedy_schedule(h, kp, digital_zf_fn(s2), p_tot).se;
      if (opt.exhaustive_zf)
        acc->exhaustive_zf[static_cast<size_t>(s)] =
            exhaustive_schedule(h, kp, digital_zf_fn(s2), p_tot).se;
      if (opt.matched_phase)
        acc->matched[static_cast<size_t>(s)] = matched_phase_fn(s2)(
            extract_scheduled(h, schedule_strongest(h, kp)), p_tot);
    }
  }
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

struct EvalRun {
  int kp = 0;
  bool bypass = false;
  EvalAccum acc;
};

EvalRun run_eval(const Checkpoint* sched, const Checkpoint& prec, const Dataset& ds,
                 const EvalOptions& opt) {
  check_checkpoints(sched, prec);
  if (ds.count < 1) throw std::invalid_argument("evaluate: empty dataset");
  EvalRun run;
  const int k = ds.cfg.k;
  run.bypass = k <= ds.cfg.k_sched;
  run.kp = run.bypass ? k : ds.cfg.k_sched;
  if (sched && !run.bypass && sched->kind == NetKind::per_stream &&
      static_cast<int>(sched->stacks.size()) != run.kp)
    throw std::invalid_argument("evaluate: sequential scheduler stack count != K'");

  std::vector<ScheduleBasis> fixed;
  if (run.bypass) {
    fixed.assign(static_cast<size_t>(ds.count), identity_basis(ds.cfg.m, k));
  } else if (!sched) {
    fixed = strongest_bases(ds, run.kp);
  }

  const int nthreads = std::max(1, opt.threads);
  std::vector<Features> feats(static_cast<size_t>(ds.count));
  EvalAccum& acc = run.acc;
  acc.se.assign(static_cast<size_t>(ds.count), 0.0);
  if (opt.strongest_precoder) acc.strongest_prec.assign(static_cast<size_t>(ds.count), 0.0);
  if (opt.strongest_zf) acc.strongest_zf.assign(static_cast<size_t>(ds.count), 0.0);
  if (opt.greedy_zf) acc.greedy_zf.assign(static_cast<size_t>(ds.count), 0.0);
  if (opt.exhaustive_zf) acc.exhaustive_zf.assign(static_cast<size_t>(ds.count), 0.0);
  if (opt.matched_phase) acc.matched.assign(static_cast<size_t>(ds.count), 0.0);
  acc.rf.assign(static_cast<size_t>(nthreads), 0.0);
  acc.comb.assign(static_cast<size_t>(nthreads), 0.0);
  acc.pw.assign(static_cast<size_t>(nthreads), 0.0);

  if (nthreads == 1) {
    eval_worker(0, 1, sched, prec, ds, opt, run.kp, run.bypass, &fixed, &feats, &acc);
  } else {
    std::vector<std::thread> pool;
    for (int tid = 0; tid < nthreads; ++tid)
      pool.emplace_back(eval_worker, tid, nthreads, sched, std::cref(prec),
                        std::cref(ds), std::cref(opt), run.kp, run.bypass, &fixed,
                        &feats, &acc);
    for (std::thread& th : pool) th.join();
  }
  return run;
}

std::string csv_cell(double v) { return std::isnan(v) ? std::string() : format_double(v); }

void write_lines(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("csv: cannot open " + path);
  f << text;
  f.flush();
  if (!f) throw std::runtime_error("csv: write failed for " + path);
}

void require_same_scenario(const Dataset& a, const Dataset& b) {
  const ScenarioConfig &x = a.cfg, &y = b.cfg;
  if (x.m != y.m || x.k != y.k || x.n_r != y.n_r || x.n_t != y.n_t ||
      x.k_sched != y.k_sched || x.n_rf != y.n_rf)
    throw std::invalid_argument("train: train/validation scenario mismatch");
}

}  // namespace

void Adam::init(const std::vector<Tensor*>& params) {
  steps = 0;
  m.clear();
  v.clear();
  for (const Tensor* p : params) {
    m.emplace_back(p->shape);
    v.emplace_back(p->shape);
  }
}

void Adam::step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads) {
  if (params.size() != m.size() || grads.size() != m.size())
    throw std::invalid_argument("adam: parameter list changed size");
  ++steps;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(steps));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(steps));
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor& w = *params[i];
    const Tensor& g = grads[i];
    if (g.numel() != w.numel()) throw std::invalid_argument("adam: gradient shape mismatch");
    for (int64_t j = 0; j < w.numel(); ++j) {
      const double gj = g[j];
      m[i][j] = beta1 * m[i][j] + (1.0 - beta1) * gj;
      v[i][j] = beta2 * v[i][j] + (1.0 - beta2) * gj * gj;
      const double mh = m[i][j] / c1;
      const double vh = v[i][j] / c2;
      w[j] -= lr * mh / (std::sqrt(vh) + eps);
    }
  }
}

double TrainConfig::tau(int64_t epoch) const {
  return tau0 + tau_amp * std::exp(-tau_decay * static_cast<double>(epoch));
}

void TrainConfig::validate() const {
  if (batch < 1) throw std::invalid_argument("train config: batch size must be >= 1");
  if (!(lr_precoder > 0.0) || !(lr_scheduler > 0.0))
    throw std::invalid_argument("train config: learning rates must be positive");
  if (epochs_pretrain < 1 || epochs_sched < 1 || epochs_joint < 1)
    throw std::invalid_argument("train config: epochs must be positive");
  if (!(tau0 > 0.0) || tau_amp < 0.0 || tau_decay < 0.0)
    throw std::invalid_argument("train config: bad temperature schedule");
  if (init_rule != "fan-in")
    throw std::invalid_argument("train config: unknown init rule " + init_rule);
  if (variant != "ngnn" && variant != "sgnn")
    throw std::invalid_argument("train config: variant must be ngnn or sgnn");
  if (sched_widths.size() < 2 || sched_widths.front() != 4 || sched_widths.back() != 1)
    throw std::invalid_argument("train config: scheduler widths must run 4 -> ... -> 1");
  if (prec_hidden.empty())
    throw std::invalid_argument("train config: precoder needs a hidden layer");
}

TrainConfig TrainConfig::from_config(const Config& c) {
  TrainConfig t;
  t.batch = static_cast<int>(c.get_int("batch", t.batch));
  t.lr_precoder = c.get_double("lr_precoder", t.lr_precoder);
  t.lr_scheduler = c.get_double("lr_scheduler", t.lr_scheduler);
  t.epochs_pretrain = static_cast<int>(c.get_int("epochs_pretrain", t.epochs_pretrain));
  t.epochs_sched = static_cast<int>(c.get_int("epochs_sched", t.epochs_sched));
  t.epochs_joint = static_cast<int>(c.get_int("epochs_joint", t.epochs_joint));
  t.tau0 = c.get_double("tau0", t.tau0);
  t.tau_amp = c.get_double("tau_amp", t.tau_amp);
  t.tau_decay = c.get_double("tau_decay", t.tau_decay);
  t.init_rule = c.get_str("init_rule", t.init_rule);
  t.seed = static_cast<uint64_t>(c.get_int("seed", static_cast<int64_t>(t.seed)));
  t.variant = c.get_str("variant", t.variant);
  t.use_attention = c.get_bool("use_attention", t.use_attention);
  auto widths = [&c](const std::string& key, std::vector<int> dflt) {
    if (!c.has(key)) return dflt;
    std::vector<int> w;
    std::string s = c.get_str(key);
    size_t pos = 0;
    while (pos < s.size()) {
      size_t next = s.find(',', pos);
      if (next == std::string::npos) next = s.size();
      w.push_back(std::stoi(s.substr(pos, next - pos)));
      pos = next + 1;
    }
    return w;
  };
  t.sched_widths = widths("sched_widths", t.sched_widths);
  t.prec_hidden = widths("prec_hidden", t.prec_hidden);
  t.train_path = c.get_str("train_path", t.train_path);
  t.val_path = c.get_str("val_path", t.val_path);
  t.precoder_out = c.get_str("precoder_out", t.precoder_out);
  t.scheduler_out = c.get_str("scheduler_out", t.scheduler_out);
  t.validate();
  return t;
}

Config TrainConfig::to_config() const {
  Config c;
  c.set_int("batch", batch);
  c.set_double("lr_precoder", lr_precoder);
  c.set_double("lr_scheduler", lr_scheduler);
  c.set_int("epochs_pretrain", epochs_pretrain);
  c.set_int("epochs_sched", epochs_sched);
  c.set_int("epochs_joint", epochs_joint);
  c.set_double("tau0", tau0);
  c.set_double("tau_amp", tau_amp);
  c.set_double("tau_decay", tau_decay);
  c.set_str("init_rule", init_rule);
  c.set_int("seed", static_cast<int64_t>(seed));
  c.set_str("variant", variant);
  c.set_bool("use_attention", use_attention);
  auto join = [](const std::vector<int>& w) {
    std::string s;
    for (size_t i = 0; i < w.size(); ++i) {
      if (i) s += ',';
      s += std::to_string(w[i]);
    }
    return s;
  };
  c.set_str("sched_widths", join(sched_widths));
  c.set_str("prec_hidden", join(prec_hidden));
  c.set_str("train_path", train_path);
  c.set_str("val_path", val_path);
  c.set_str("precoder_out", precoder_out);
  c.set_str("scheduler_out", scheduler_out);
  return c;
}

std::vector<Features> dataset_features(const Dataset& ds) {
  std::vector<Features> f(static_cast<size_t>(ds.count));
  for (int64_t i = 0; i < ds.count; ++i)
    f[static_cast<size_t>(i)] = compute_features(ds.sample(i));
  return f;
}

std::vector<ScheduleBasis> strongest_bases(const Dataset& ds, int kp) {
  std::vector<ScheduleBasis> b;
  b.reserve(static_cast<size_t>(ds.count));
  for (int64_t i = 0; i < ds.count; ++i)
    b.push_back(schedule_strongest(ds.sample(i), kp));
  return b;
}

double batch_loss(const Checkpoint* sched, const Checkpoint& prec, const Dataset& ds,
                  const std::vector<int64_t>& idx, double tau, bool soft) {
  if (idx.empty()) throw std::invalid_argument("batch_loss: empty batch");
  check_checkpoints(sched, prec);
  Checkpoint prec_l = prec;
  const int k = ds.cfg.k;
  const int kp = std::min(ds.cfg.k_sched, k);
  if (!sched || k <= kp) {
    std::vector<ScheduleBasis> bases;
    bases.reserve(idx.size());
    for (int64_t s : idx)
      bases.push_back(k <= kp ? identity_basis(ds.cfg.m, k)
                              : schedule_strongest(ds.sample(s), kp));
    std::vector<const ScheduleBasis*> bp(idx.size());
    for (size_t i = 0; i < idx.size(); ++i) bp[i] = &bases[i];
    ad::Tape t;
    PreGraph g = precoder_loss_graph(t, prec_l, ds, idx, bp, false, false);
    return ad::scalar_value(g.loss);
  }
  Checkpoint sched_l = *sched;
  std::vector<Features> feats(static_cast<size_t>(ds.count));
  for (int64_t s : idx) feats[static_cast<size_t>(s)] = compute_features(ds.sample(s));
  if (soft) {
    ad::Tape t;
    SoftGraph g = soft_loss_graph(t, sched_l, prec_l, ds, idx, feats, tau, false,
                                  false, false, false);
    return ad::scalar_value(g.loss);
  }
  std::vector<ScheduleBasis> bases = hard_bases_chunk(sched_l, ds, idx, feats, kp);
  std::vector<const ScheduleBasis*> bp(bases.size());
  for (size_t i = 0; i < bases.size(); ++i) bp[i] = &bases[i];
  ChunkSe r = precoder_se_chunk(prec_l, ds, idx, bp);
  return -mean_of(r.se);
}

Checkpoint pretrain_precoder(const TrainConfig& cfg, const Dataset& train,
                             const Dataset& val, std::vector<EpochRow>* log) {
  cfg.validate();
  require_same_scenario(train, val);
  const int kp = train.cfg.k_sched;
  Rng wrng(cfg.seed * kSeedStride + 1);
  std::vector<int> pw;
  pw.push_back(2);
  for (int h : cfg.prec_hidden) pw.push_back(h);
  pw.push_back(4 * train.cfg.n_rf + 2);
  Checkpoint prec = make_precoder(pw, train.cfg.n_rf, cfg.use_attention, wrng);

  std::vector<ScheduleBasis> bases = strongest_bases(train, kp);
  Adam adam;
  adam.lr = cfg.lr_precoder;
  adam.init(trainable(prec));
  Rng srng(cfg.seed * kSeedStride + 2);
  std::vector<int64_t> order = iota_idx(train.count);
  EvalOptions eo;
  double best = -std::numeric_limits<double>::infinity();
  Checkpoint best_ck = prec;
  for (int epoch = 0; epoch < cfg.epochs_pretrain; ++epoch) {
    fisher_yates(order, srng);
    double loss_sum = 0.0;
    int steps = 0;
    for (int64_t lo = 0; lo < train.count; lo += cfg.batch) {
      const int64_t hi = std::min<int64_t>(train.count, lo + cfg.batch);
      std::vector<int64_t> idx(order.begin() + lo, order.begin() + hi);
      ad::Tape t;
      PreGraph g = precoder_loss_graph(t, prec, train, idx, basis_ptrs(bases, idx),
                                       true, true);
      loss_sum += checked_loss_value(g.loss, "pretrain", epoch, 0.0);
      t.backward(g.loss);
      adam.step(trainable(prec), collect_grads(t, g.tw));
      ++steps;
    }
    prec.trained_epochs++;
    const double vse = evaluate(nullptr, prec, val, eo).mean_se;
    if (vse > best) {
      best = vse;
      best_ck = prec;
    }
    if (log) log->push_back({"pretrain", epoch, 0.0, loss_sum / steps, vse, best});
  }
  return best_ck;
}

Checkpoint train_scheduler(const TrainConfig& cfg, const Checkpoint& precoder,
                           const Dataset& train, const Dataset& val,
                           std::vector<EpochRow>* log) {
  cfg.validate();
  require_same_scenario(train, val);
  if (precoder.kind != NetKind::precoder)
    throw std::invalid_argument("train_scheduler: precoder checkpoint expected");
  const int kp = train.cfg.k_sched;
  std::vector<int> widths = cfg.sched_widths;
  Rng wrng(cfg.seed * kSeedStride + 3);
  Checkpoint sched;
  if (cfg.variant == "ngnn") {
    sched = make_scheduler(widths, wrng);
  } else {
    widths.front() = 5;
    sched = make_per_stream(widths, kp, wrng);
  }
  Checkpoint prec = precoder;  // frozen weights and statistics

  std::vector<Features> feats = dataset_features(train);
  Adam adam;
  adam.lr = cfg.lr_scheduler;
  adam.init(trainable(sched));
  Rng srng(cfg.seed * kSeedStride + 4);
  std::vector<int64_t> order = iota_idx(train.count);
  EvalOptions eo;
  double best = -std::numeric_limits<double>::infinity();
  Checkpoint best_ck = sched;
  for (int epoch = 0; epoch < cfg.epochs_sched; ++epoch) {
    const double tau = cfg.tau(sched.trained_epochs);
    fisher_yates(order, srng);
    double loss_sum = 0.0;
    int steps = 0;
    for (int64_t lo = 0; lo < train.count; lo += cfg.batch) {
      const int64_t hi = std::min<int64_t>(train.count, lo + cfg.batch);
      std::vector<int64_t> idx(order.begin() + lo, order.begin() + hi);
      ad::Tape t;
      SoftGraph g = soft_loss_graph(t, sched, prec, train, idx, feats, tau, true,
                                    false, true, false);
      loss_sum += checked_loss_value(g.loss, "scheduler", epoch, tau);
      t.backward(g.loss);
      adam.step(trainable(sched), collect_grads(t, g.sched_tw));
      ++steps;
    }
    sched.trained_epochs++;
    const double vse = evaluate(&sched, prec, val, eo).mean_se;
    if (vse > best) {
      best = vse;
      best_ck = sched;
    }
    if (log) log->push_back({"scheduler", epoch, tau, loss_sum / steps, vse, best});
  }
  return best_ck;
}

JointResult train_joint(const TrainConfig& cfg, const Checkpoint& sched0,
                        const Checkpoint& prec0, const Dataset& train,
                        const Dataset& val, std::vector<EpochRow>* log) {
  cfg.validate();
  require_same_scenario(train, val);
  check_checkpoints(&sched0, prec0);
  Checkpoint sched = sched0, prec = prec0;

  std::vector<Features> feats = dataset_features(train);
  Adam adam_s, adam_p;
  adam_s.lr = cfg.lr_scheduler;
  adam_p.lr = cfg.lr_precoder;
  adam_s.init(trainable(sched));
  adam_p.init(trainable(prec));
  Rng srng(cfg.seed * kSeedStride + 5);
  std::vector<int64_t> order = iota_idx(train.count);
  EvalOptions eo;

  JointResult out;
  out.scheduler = sched;
  out.precoder = prec;
  out.best_val_se = evaluate(&sched, prec, val, eo).mean_se;

  for (int epoch = 0; epoch < cfg.epochs_joint; ++epoch) {
    const double tau = cfg.tau(sched.trained_epochs);
    fisher_yates(order, srng);
    double loss_sum = 0.0;
    int steps = 0;
    for (int64_t lo = 0; lo < train.count; lo += cfg.batch) {
      const int64_t hi = std::min<int64_t>(train.count, lo + cfg.batch);
      std::vector<int64_t> idx(order.begin() + lo, order.begin() + hi);
      ad::Tape t;
      SoftGraph g = soft_loss_graph(t, sched, prec, train, idx, feats, tau, true,
                                    true, true, true);
      loss_sum += checked_loss_value(g.loss, "joint", epoch, tau);
      t.backward(g.loss);
      adam_s.step(trainable(sched), collect_grads(t, g.sched_tw));
      adam_p.step(trainable(prec), collect_grads(t, g.prec_tw));
      ++steps;
    }
    sched.trained_epochs++;
    prec.trained_epochs++;
    const double vse = evaluate(&sched, prec, val, eo).mean_se;
    if (vse > out.best_val_se) {
      out.best_val_se = vse;
      out.scheduler = sched;
      out.precoder = prec;
    }
    if (log) log->push_back({"joint", epoch, tau, loss_sum / steps, vse, out.best_val_se});
  }
  return out;
}

std::vector<double> per_sample_se(const Checkpoint* sched, const Checkpoint& prec,
                                  const Dataset& ds, const EvalOptions& opt) {
  return run_eval(sched, prec, ds, opt).acc.se;
}

EvalReport evaluate(const Checkpoint* sched, const Checkpoint& prec,
                    const Dataset& ds, const EvalOptions& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  EvalRun run = run_eval(sched, prec, ds, opt);
  const EvalAccum& acc = run.acc;
  const int nthreads = std::max(1, opt.threads);

  EvalReport r;
  r.m = ds.cfg.m;
  r.k = ds.cfg.k;
  r.kp = run.kp;
  r.n_t = ds.cfg.n_t;
  r.n_r = ds.cfg.n_r;
  r.samples = ds.count;
  r.mean_se = mean_of(acc.se);
  r.se_strongest_precoder = opt.strongest_precoder ? mean_of(acc.strongest_prec) : kNan;
  r.se_strongest_zf = opt.strongest_zf ? mean_of(acc.strongest_zf) : kNan;
  r.se_greedy_zf = opt.greedy_zf ? mean_of(acc.greedy_zf) : kNan;
  r.se_exhaustive_zf = opt.exhaustive_zf ? mean_of(acc.exhaustive_zf) : kNan;
  r.se_matched_phase = opt.matched_phase ? mean_of(acc.matched) : kNan;
  for (int tid = 0; tid < nthreads; ++tid) {
    r.max_rf_modulus = std::max(r.max_rf_modulus, acc.rf[static_cast<size_t>(tid)]);
    r.max_comb_modulus = std::max(r.max_comb_modulus, acc.comb[static_cast<size_t>(tid)]);
    r.max_power_rel = std::max(r.max_power_rel, acc.pw[static_cast<size_t>(tid)]);
  }

  FlopsDims d;
  d.m = ds.cfg.m;
  d.k = ds.cfg.k;
  d.kp = run.kp;
  d.n_r = ds.cfg.n_r;
  d.n_t = ds.cfg.n_t;
  int64_t fl = precoder_network_flops(d, prec.stacks[0].widths);
  if (sched && !run.bypass)
    fl += sched->kind == NetKind::scheduler
              ? scheduler_network_flops(d, sched->stacks[0].widths)
              : sgnn_network_flops(d, sched->stacks[0].widths);
  r.flops_forward = fl;
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

std::vector<EvalReport> sweep(const Checkpoint* sched, const Checkpoint& prec,
                              const ScenarioConfig& base, const std::string& axis,
                              const std::vector<int>& values, int64_t count,
                              uint64_t base_seed, const EvalOptions& opt) {
  if (values.empty()) throw std::invalid_argument("sweep: no values");
  if (count < 1) throw std::invalid_argument("sweep: bad sample count");
  std::vector<EvalReport> out;
  for (size_t i = 0; i < values.size(); ++i) {
    ScenarioConfig c = base;
    if (axis == "M")
      c.m = values[i];
    else if (axis == "K")
      c.k = values[i];
    else if (axis == "NT")
      c.n_t = values[i];
    else if (axis == "NR")
      c.n_r = values[i];
    else
      throw std::invalid_argument("sweep: axis must be one of M, K, NT, NR");
    c.validate();
    Dataset ds = generate_dataset(c, count, base_seed + i, std::max(1, opt.threads));
    out.push_back(evaluate(sched, prec, ds, opt));
  }
  return out;
}

void write_train_log_csv(const std::string& path, const std::vector<EpochRow>& rows) {
  std::string s = "#schema wbgnn.train-log.1\n";
  s += "phase,epoch,tau,train_loss,val_se,best_val_se\n";
  for (const EpochRow& r : rows) {
    s += r.phase;
    s += ',' + std::to_string(r.epoch);
    s += ',' + format_double(r.tau);
    s += ',' + format_double(r.train_loss);
    s += ',' + format_double(r.val_se);
    s += ',' + format_double(r.best_val_se);
    s += '\n';
  }
  write_lines(path, s);
}

void write_eval_csv(const std::string& path, const std::vector<EvalReport>& rows) {
  std::string s = "#schema wbgnn.eval.1\n";
  s +=
      "m,k,kp,n_t,n_r,samples,se_gnn,se_strongest_precoder,se_strongest_zf,"
      "se_greedy_zf,se_exhaustive_zf,se_matched_phase,max_rf_modulus,"
      "max_comb_modulus,max_power_rel,flops_forward\n";
  for (const EvalReport& r : rows) {
    s += std::to_string(r.m);
    s += ',' + std::to_string(r.k);
    s += ',' + std::to_string(r.kp);
    s += ',' + std::to_string(r.n_t);
    s += ',' + std::to_string(r.n_r);
    s += ',' + std::to_string(r.samples);
    s += ',' + format_double(r.mean_se);
    s += ',' + csv_cell(r.se_strongest_precoder);
    s += ',' + csv_cell(r.se_strongest_zf);
    s += ',' + csv_cell(r.se_greedy_zf);
    s += ',' + csv_cell(r.se_exhaustive_zf);
    s += ',' + csv_cell(r.se_matched_phase);
    s += ',' + format_double(r.max_rf_modulus);
    s += ',' + format_double(r.max_comb_modulus);
    s += ',' + format_double(r.max_power_rel);
    s += ',' + std::to_string(r.flops_forward);
    s += '\n';
  }
  write_lines(path, s);
}

void write_spsd_csv(const std::string& path, const std::vector<SpsdReport>& rows) {
  std::string s = "#schema wbgnn.spsd.1\n";
  s += "axis,samples,agreement_rate,max_deviation\n";
  for (const SpsdReport& r : rows) {
    s += r.axis;
    s += ',' + std::to_string(r.samples);
    s += ',' + format_double(r.agreement_rate);
    s += ',' + format_double(r.max_deviation);
    s += '\n';
  }
  write_lines(path, s);
}

}  // namespace wbgnn
