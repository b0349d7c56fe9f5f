#include <chrono>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "wbgnn/flops.hpp"
#include "wbgnn/train.hpp"

using namespace wbgnn;

namespace {

// declared outputs of the running command; removed if it fails partway
struct OutputGuard {
  std::vector<std::string> paths;
  bool armed = false;

  void add(const std::string& p) {
    if (!p.empty()) paths.push_back(p);
  }
  void sweep_away() {
    for (const std::string& p : paths) std::remove(p.c_str());
  }
};

double now_s() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

Config load_cfg(const std::string& path) { return Config::parse_file(path); }

struct EvalFlags {
  bool strongest_precoder = false;
  bool strongest_zf = false;
  bool greedy_zf = false;
  bool exhaustive_zf = false;
  bool matched_phase = false;
};

void add_eval_flags(CLI::App* cmd, EvalFlags& f) {
  cmd->add_flag("--strongest-precoder", f.strongest_precoder,
                "also run the strongest schedule through the same precoder");
  cmd->add_flag("--strongest-zf", f.strongest_zf,
                "also run strongest schedule + digital ZF");
  cmd->add_flag("--greedy-zf", f.greedy_zf, "also run greedy schedule + digital ZF");
  cmd->add_flag("--exhaustive-zf", f.exhaustive_zf,
                "also run exhaustive schedule + digital ZF");
  cmd->add_flag("--matched-phase", f.matched_phase,
                "also run the matched-phase hybrid baseline");
}

EvalOptions make_options(const EvalFlags& f, int threads) {
  EvalOptions o;
  o.threads = threads;
  o.strongest_precoder = f.strongest_precoder;
  o.strongest_zf = f.strongest_zf;
  o.greedy_zf = f.greedy_zf;
  o.exhaustive_zf = f.exhaustive_zf;
  o.matched_phase = f.matched_phase;
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"wideband MU-MIMO scheduling and hybrid precoding lab"};
  app.require_subcommand(1);

  std::string config, out, data_path, precoder_path, scheduler_path;
  std::string axis = "M";
  std::string spsd_axis = "antenna";
  uint64_t seed = 1;
  bool seed_given = false;
  int threads = 1;
  int64_t count = 1000, samples = 1000;
  int miso_k = 4, miso_nt = 8;
  double tol = 1e-10;
  bool woodbury = false;
  std::vector<int> values;
  EvalFlags eflags;

  CLI::App* gen = app.add_subcommand("gen-data", "sample a channel dataset");
  gen->add_option("--config", config, "scenario config file")->required();
  gen->add_option("--count", count, "number of samples")->required();
  gen->add_option("--seed", seed, "base seed");
  gen->add_option("--out", out, "output .wbch path")->required();
  gen->add_option("--threads", threads, "worker threads across samples");

  CLI::App* pre = app.add_subcommand("pretrain", "pretrain the precoder network");
  pre->add_option("--config", config, "training config file")->required();
  pre->add_option("--seed", seed, "seed override")->each([&](const std::string&) {
    seed_given = true;
  });
  pre->add_option("--out", out, "epoch log CSV path");

  CLI::App* tsc = app.add_subcommand("train-sched", "train the scheduler network");
  tsc->add_option("--config", config, "training config file")->required();
  tsc->add_option("--precoder", precoder_path, "pretrained precoder checkpoint")
      ->required();
  tsc->add_option("--seed", seed, "seed override")->each([&](const std::string&) {
    seed_given = true;
  });
  tsc->add_option("--out", out, "epoch log CSV path");

  CLI::App* tjo = app.add_subcommand("train-joint", "train both modules jointly");
  tjo->add_option("--config", config, "training config file")->required();
  tjo->add_option("--precoder", precoder_path, "precoder checkpoint")->required();
  tjo->add_option("--scheduler", scheduler_path, "scheduler checkpoint")->required();
  tjo->add_option("--seed", seed, "seed override")->each([&](const std::string&) {
    seed_given = true;
  });
  tjo->add_option("--out", out, "epoch log CSV path");

  CLI::App* ev = app.add_subcommand("eval", "hard-path evaluation on a dataset");
  ev->add_option("--precoder", precoder_path, "precoder checkpoint")->required();
  ev->add_option("--scheduler", scheduler_path, "scheduler checkpoint (optional)");
  ev->add_option("--data", data_path, "dataset .wbch path")->required();
  ev->add_option("--out", out, "report CSV path")->required();
  ev->add_option("--threads", threads, "worker threads across samples");
  add_eval_flags(ev, eflags);

  CLI::App* sw = app.add_subcommand("sweep", "evaluate across one scenario axis");
  sw->add_option("--axis", axis, "axis: M, K, NT or NR")->required();
  sw->add_option("--values", values, "axis values")->required()->delimiter(',');
  sw->add_option("--config", config, "base scenario config file")->required();
  sw->add_option("--count", count, "samples per value");
  sw->add_option("--seed", seed, "base seed (value i uses seed + i)");
  sw->add_option("--precoder", precoder_path, "precoder checkpoint")->required();
  sw->add_option("--scheduler", scheduler_path, "scheduler checkpoint (optional)");
  sw->add_option("--out", out, "report CSV path")->required();
  sw->add_option("--threads", threads, "worker threads across samples");
  add_eval_flags(sw, eflags);

  CLI::App* sp = app.add_subcommand("spsd", "duplicate-element probes of the MISO rule");
  sp->add_option("--axis", spsd_axis, "antenna or user");
  sp->add_option("--samples", samples, "instances to draw");
  sp->add_option("--seed", seed, "base seed");
  sp->add_option("--tol", tol, "agreement tolerance");
  sp->add_option("--k", miso_k, "users per instance");
  sp->add_option("--nt", miso_nt, "transmit antennas per instance");
  sp->add_flag("--woodbury", woodbury, "route the inverse through the Gram form");
  sp->add_option("--out", out, "report CSV path")->required();

  CLI::App* fl = app.add_subcommand("flops", "layer and network flop counts");
  fl->add_option("--config", config,
                 "dims config (m,k,kp,n_r,n_t,sched_widths,prec_widths); "
                 "defaults are all ones");

  CLI11_PARSE(app, argc, argv);

  OutputGuard guard;
  try {
    if (gen->parsed()) {
      guard.add(out);
      guard.add(out + ".cfg");
      ScenarioConfig sc = ScenarioConfig::from_config(load_cfg(config));
      const double t0 = now_s();
      Dataset ds = generate_dataset(sc, count, seed, std::max(1, threads));
      write_wbch(out, ds);
      std::fprintf(stderr, "gen-data: %lld samples in %.2fs\n",
                   static_cast<long long>(count), now_s() - t0);
    } else if (pre->parsed() || tsc->parsed() || tjo->parsed()) {
      TrainConfig tc = TrainConfig::from_config(load_cfg(config));
      if (seed_given) tc.seed = seed;
      if (tc.train_path.empty() || tc.val_path.empty())
        throw std::invalid_argument("train config: train_path and val_path required");
      Dataset train = read_wbch(tc.train_path);
      Dataset val = read_wbch(tc.val_path);
      std::vector<EpochRow> log;
      const double t0 = now_s();
      if (pre->parsed()) {
        if (tc.precoder_out.empty())
          throw std::invalid_argument("train config: precoder_out required");
        guard.add(tc.precoder_out);
        guard.add(out);
        Checkpoint p = pretrain_precoder(tc, train, val, &log);
        write_wbnn(tc.precoder_out, p);
        std::fprintf(stderr, "pretrain: best val SE %s in %.1fs\n",
                     format_double(log.empty() ? 0.0 : log.back().best_val_se).c_str(),
                     now_s() - t0);
      } else if (tsc->parsed()) {
        if (tc.scheduler_out.empty())
          throw std::invalid_argument("train config: scheduler_out required");
        guard.add(tc.scheduler_out);
        guard.add(out);
        Checkpoint prec = read_wbnn(precoder_path);
        Checkpoint s = train_scheduler(tc, prec, train, val, &log);
        write_wbnn(tc.scheduler_out, s);
        std::fprintf(stderr, "train-sched: best val SE %s in %.1fs\n",
                     format_double(log.empty() ? 0.0 : log.back().best_val_se).c_str(),
                     now_s() - t0);
      } else {
        if (tc.precoder_out.empty() || tc.scheduler_out.empty())
          throw std::invalid_argument(
              "train config: precoder_out and scheduler_out required");
        guard.add(tc.precoder_out);
        guard.add(tc.scheduler_out);
        guard.add(out);
        Checkpoint prec = read_wbnn(precoder_path);
        Checkpoint sched = read_wbnn(scheduler_path);
        JointResult j = train_joint(tc, sched, prec, train, val, &log);
        write_wbnn(tc.precoder_out, j.precoder);
        write_wbnn(tc.scheduler_out, j.scheduler);
        std::fprintf(stderr, "train-joint: best val SE %s in %.1fs\n",
                     format_double(j.best_val_se).c_str(), now_s() - t0);
      }
      if (!out.empty()) write_train_log_csv(out, log);
    } else if (ev->parsed()) {
      guard.add(out);
      Checkpoint prec = read_wbnn(precoder_path);
      std::optional<Checkpoint> sched;
      if (!scheduler_path.empty()) sched = read_wbnn(scheduler_path);
      Dataset ds = read_wbch(data_path);
      EvalReport r = evaluate(sched ? &*sched : nullptr, prec, ds,
                              make_options(eflags, threads));
      write_eval_csv(out, {r});
      std::fprintf(stderr, "eval: mean SE %s over %lld samples in %.1fs\n",
                   format_double(r.mean_se).c_str(),
                   static_cast<long long>(r.samples), r.seconds);
    } else if (sw->parsed()) {
      guard.add(out);
      ScenarioConfig base = ScenarioConfig::from_config(load_cfg(config));
      Checkpoint prec = read_wbnn(precoder_path);
      std::optional<Checkpoint> sched;
      if (!scheduler_path.empty()) sched = read_wbnn(scheduler_path);
      const double t0 = now_s();
      std::vector<EvalReport> rows =
          sweep(sched ? &*sched : nullptr, prec, base, axis, values, count, seed,
                make_options(eflags, threads));
      write_eval_csv(out, rows);
      std::fprintf(stderr, "sweep: %zu rows in %.1fs\n", rows.size(), now_s() - t0);
    } else if (sp->parsed()) {
      guard.add(out);
      const double t0 = now_s();
      SpsdReport r = spsd_check(spsd_axis, samples, seed, tol,
                                default_miso_sampler(miso_k, miso_nt),
                                miso_policy(woodbury));
      write_spsd_csv(out, {r});
      std::fprintf(stderr, "spsd: %s agreement %s in %.1fs\n", r.axis.c_str(),
                   format_double(r.agreement_rate).c_str(), now_s() - t0);
    } else if (fl->parsed()) {
      Config c = config.empty() ? Config() : load_cfg(config);
      FlopsDims d;
      d.m = c.get_int("m", 1);
      d.k = c.get_int("k", 1);
      d.kp = c.get_int("kp", 1);
      d.n_r = c.get_int("n_r", 1);
      d.n_t = c.get_int("n_t", 1);
      auto widths = [&c](const std::string& key) {
        std::vector<int> w;
        std::string s = c.get_str(key, "1,1");
        size_t pos = 0;
        while (pos < s.size()) {
          size_t next = s.find(',', pos);
          if (next == std::string::npos) next = s.size();
          w.push_back(std::stoi(s.substr(pos, next - pos)));
          pos = next + 1;
        }
        return w;
      };
      const std::vector<int> sw_w = widths("sched_widths");
      const std::vector<int> pw_w = widths("prec_widths");
      std::printf("scheduler-layer %lld\n",
                  static_cast<long long>(scheduler_layer_flops(
                      d.m, d.k, d.n_r, d.n_t, sw_w[0], sw_w[1])));
      std::printf("precoder-layer %lld\n",
                  static_cast<long long>(precoder_layer_flops(
                      d.m, d.kp, d.n_r, d.n_t, pw_w[0], pw_w[1])));
      std::printf("scheduler-network %lld\n",
                  static_cast<long long>(scheduler_network_flops(d, sw_w)));
      std::printf("sgnn-network %lld\n",
                  static_cast<long long>(sgnn_network_flops(d, sw_w)));
      std::printf("precoder-network %lld\n",
                  static_cast<long long>(precoder_network_flops(d, pw_w)));
      for (const AsymptoticRow& row : asymptotic_table())
        std::printf("%s %s\n", row.method.c_str(), row.order.c_str());
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    guard.sweep_away();
    return 1;
  }
  return 0;
}
