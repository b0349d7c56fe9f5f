#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "wbgnn/train.hpp"

using namespace wbgnn;

namespace {

ScenarioConfig tiny_scenario() {
  ScenarioConfig sc;
  sc.m = 1;
  sc.k = 4;
  sc.n_r = 1;
  sc.n_t = 2;
  sc.k_sched = 2;
  sc.n_rf = 2;
  return sc;
}

TrainConfig tiny_train_config() {
  TrainConfig cfg;
  cfg.batch = 20;
  cfg.epochs_pretrain = 3;
  cfg.epochs_sched = 2;
  cfg.epochs_joint = 2;
  cfg.seed = 11;
  cfg.sched_widths = {4, 8, 1};
  cfg.prec_hidden = {12};
  return cfg;
}

bool same_weights(const Checkpoint& a, const Checkpoint& b) {
  if (a.stacks.size() != b.stacks.size()) return false;
  Checkpoint ca = a, cb = b;
  auto pa = trainable(ca), pb = trainable(cb);
  if (pa.size() != pb.size()) return false;
  for (size_t i = 0; i < pa.size(); ++i) {
    if (pa[i]->numel() != pb[i]->numel()) return false;
    for (int64_t j = 0; j < pa[i]->numel(); ++j)
      if ((*pa[i])[j] != (*pb[i])[j]) return false;
  }
  return true;
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("adam descends a quadratic and matches the first-step size") {
  Tensor w(Shape{1, 1, 1, 1, 2});
  w[0] = 5.0;
  w[1] = -3.0;
  Adam a;
  a.lr = 0.1;
  a.init({&w});
  Tensor g(w.shape);
  for (int it = 0; it < 400; ++it) {
    g[0] = 2.0 * (w[0] - 3.0);
    g[1] = 2.0 * (w[1] + 1.0);
    a.step({&w}, {g});
    if (it == 0) {
      // bias-corrected first step moves by lr regardless of gradient scale
      CHECK(std::abs(5.0 - w[0] - 0.1) < 1e-6);
      CHECK(std::abs(w[1] + 3.0 - 0.1) < 1e-6);
    }
  }
  CHECK(std::abs(w[0] - 3.0) < 1e-2);
  CHECK(std::abs(w[1] + 1.0) < 1e-2);
}

TEST_CASE("adam rejects mismatched parameter lists") {
  Tensor w(Shape{1, 1, 1, 1, 2});
  Adam a;
  a.init({&w});
  Tensor bad(Shape{1, 1, 1, 1, 3});
  CHECK_THROWS_AS(a.step({&w}, {bad}), std::invalid_argument);
  Tensor w2(Shape{1, 1, 1, 1, 2});
  CHECK_THROWS_AS(a.step({&w, &w2}, {bad, bad}), std::invalid_argument);
}

TEST_CASE("train config round-trips through key-value form") {
  TrainConfig cfg = tiny_train_config();
  cfg.variant = "sgnn";
  cfg.use_attention = false;
  cfg.train_path = "a.wbch";
  cfg.precoder_out = "p.wbnn";
  Config c = cfg.to_config();
  TrainConfig back = TrainConfig::from_config(c);
  CHECK(back.batch == cfg.batch);
  CHECK(back.lr_precoder == cfg.lr_precoder);
  CHECK(back.lr_scheduler == cfg.lr_scheduler);
  CHECK(back.epochs_pretrain == cfg.epochs_pretrain);
  CHECK(back.tau0 == cfg.tau0);
  CHECK(back.seed == cfg.seed);
  CHECK(back.variant == "sgnn");
  CHECK(back.use_attention == false);
  CHECK(back.sched_widths == cfg.sched_widths);
  CHECK(back.prec_hidden == cfg.prec_hidden);
  CHECK(back.train_path == "a.wbch");
  CHECK(back.precoder_out == "p.wbnn");
}

TEST_CASE("train config validation rejects bad values") {
  TrainConfig cfg = tiny_train_config();
  cfg.batch = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = tiny_train_config();
  cfg.variant = "mlp";
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = tiny_train_config();
  cfg.sched_widths = {3, 8, 1};
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = tiny_train_config();
  cfg.init_rule = "xavier";
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("temperature schedule hits its endpoints") {
  TrainConfig cfg;
  CHECK(cfg.tau(0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(cfg.tau(1000000) == doctest::Approx(0.1).epsilon(1e-9));
  CHECK(cfg.tau(10) < cfg.tau(0));
}

TEST_CASE("single-sample hard loss equals the negative evaluated rate") {
  ScenarioConfig sc = tiny_scenario();
  Dataset ds = generate_dataset(sc, 12, 303, 1);
  TrainConfig cfg = tiny_train_config();
  cfg.epochs_pretrain = 1;
  Dataset val = generate_dataset(sc, 8, 404, 1);
  std::vector<EpochRow> log;
  Checkpoint prec = pretrain_precoder(cfg, ds, val, &log);
  Checkpoint sched = train_scheduler(cfg, prec, ds, val, nullptr);

  EvalOptions eo;
  std::vector<double> se = per_sample_se(&sched, prec, ds, eo);
  for (int64_t i : {int64_t{0}, int64_t{5}, int64_t{11}}) {
    const double l = batch_loss(&sched, prec, ds, {i}, 0.05, false);
    CHECK(l == doctest::Approx(-se[static_cast<size_t>(i)]).epsilon(1e-12));
  }
  const double l3 = batch_loss(&sched, prec, ds, {0, 5, 11}, 0.05, false);
  CHECK(l3 == doctest::Approx(-(se[0] + se[5] + se[11]) / 3.0).epsilon(1e-12));
}

TEST_CASE("soft loss approaches the hard loss as the temperature vanishes") {
  ScenarioConfig sc = tiny_scenario();
  Dataset ds = generate_dataset(sc, 10, 505, 1);
  Dataset val = generate_dataset(sc, 8, 606, 1);
  TrainConfig cfg = tiny_train_config();
  cfg.epochs_pretrain = 1;
  std::vector<EpochRow> log;
  Checkpoint prec = pretrain_precoder(cfg, ds, val, &log);
  Checkpoint sched = train_scheduler(cfg, prec, ds, val, nullptr);
  std::vector<int64_t> idx = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  const double hard = batch_loss(&sched, prec, ds, idx, 1e-4, false);
  const double soft = batch_loss(&sched, prec, ds, idx, 1e-4, true);
  CHECK(std::abs(soft - hard) / std::abs(hard) < 1e-3);
  const double warm = batch_loss(&sched, prec, ds, idx, 0.5, true);
  CHECK(std::isfinite(warm));
}

TEST_CASE("pretraining reduces the loss and tracks the best epoch") {
  ScenarioConfig sc = tiny_scenario();
  Dataset train = generate_dataset(sc, 60, 707, 1);
  Dataset val = generate_dataset(sc, 20, 808, 1);
  TrainConfig cfg = tiny_train_config();
  cfg.epochs_pretrain = 4;
  std::vector<EpochRow> log;
  Checkpoint prec = pretrain_precoder(cfg, train, val, &log);
  REQUIRE(log.size() == 4);
  CHECK(log.back().train_loss < log.front().train_loss);
  for (size_t i = 1; i < log.size(); ++i)
    CHECK(log[i].best_val_se >= log[i - 1].best_val_se);
  EvalOptions eo;
  CHECK(evaluate(nullptr, prec, val, eo).mean_se ==
        doctest::Approx(log.back().best_val_se).epsilon(1e-15));
}

TEST_CASE("emitted solutions respect the hardware constraints") {
  ScenarioConfig sc = tiny_scenario();
  Dataset train = generate_dataset(sc, 40, 909, 1);
  Dataset val = generate_dataset(sc, 12, 1010, 1);
  TrainConfig cfg = tiny_train_config();
  cfg.epochs_pretrain = 2;
  std::vector<EpochRow> log;
  Checkpoint prec = pretrain_precoder(cfg, train, val, &log);
  EvalOptions eo;
  EvalReport r = evaluate(nullptr, prec, val, eo);
  CHECK(r.max_rf_modulus < 1e-12);
  CHECK(r.max_comb_modulus < 1e-12);
  CHECK(r.max_power_rel < 1e-9);
  CHECK(r.mean_se > 0.0);
  CHECK(r.flops_forward > 0);
}

TEST_CASE("identical seeds give bit-identical training runs") {
  ScenarioConfig sc = tiny_scenario();
  Dataset train = generate_dataset(sc, 40, 111, 1);
  Dataset val = generate_dataset(sc, 12, 222, 1);
  TrainConfig cfg = tiny_train_config();
  cfg.epochs_pretrain = 2;
  std::vector<EpochRow> la, lb;
  Checkpoint a = pretrain_precoder(cfg, train, val, &la);
  Checkpoint b = pretrain_precoder(cfg, train, val, &lb);
  CHECK(same_weights(a, b));
  REQUIRE(la.size() == lb.size());
  for (size_t i = 0; i < la.size(); ++i) {
    CHECK(la[i].train_loss == lb[i].train_loss);
    CHECK(la[i].val_se == lb[i].val_se);
  }
  cfg.seed += 1;
  std::vector<EpochRow> lc;
  Checkpoint c = pretrain_precoder(cfg, train, val, &lc);
  CHECK(!same_weights(a, c));
}

TEST_CASE("joint training touches both modules and reproduces its best score") {
  ScenarioConfig sc = tiny_scenario();
  Dataset train = generate_dataset(sc, 40, 333, 1);
  Dataset val = generate_dataset(sc, 12, 444, 1);
  TrainConfig cfg = tiny_train_config();
  std::vector<EpochRow> log;
  Checkpoint prec = pretrain_precoder(cfg, train, val, &log);
  Checkpoint sched = train_scheduler(cfg, prec, train, val, &log);
  JointResult j = train_joint(cfg, sched, prec, train, val, &log);
  CHECK(!same_weights(j.scheduler, sched));
  CHECK(!same_weights(j.precoder, prec));
  EvalOptions eo;
  const double pre_joint = evaluate(&sched, prec, val, eo).mean_se;
  CHECK(j.best_val_se >= pre_joint);
  CHECK(evaluate(&j.scheduler, j.precoder, val, eo).mean_se ==
        doctest::Approx(j.best_val_se).epsilon(1e-15));
}

TEST_CASE("non-finite channels abort training with a diagnostic") {
  ScenarioConfig sc = tiny_scenario();
  Dataset train = generate_dataset(sc, 20, 555, 1);
  Dataset val = generate_dataset(sc, 8, 666, 1);
  const int64_t per = static_cast<int64_t>(sc.m) * sc.k * sc.n_r * sc.n_t;
  for (int64_t j = 0; j < per; ++j)
    train.data[static_cast<size_t>(j)] = std::numeric_limits<double>::quiet_NaN();
  TrainConfig cfg = tiny_train_config();
  cfg.epochs_pretrain = 1;
  std::vector<EpochRow> log;
  bool threw = false;
  try {
    pretrain_precoder(cfg, train, val, &log);
  } catch (const std::runtime_error& e) {
    threw = true;
    CHECK(std::string(e.what()).find("non-finite") != std::string::npos);
  }
  CHECK(threw);
}

TEST_CASE("scheduler bypass kicks in when every user fits") {
  ScenarioConfig sc = tiny_scenario();
  sc.k = 2;  // K == K'
  Dataset ds = generate_dataset(sc, 10, 777, 1);
  Dataset val = generate_dataset(sc, 8, 888, 1);
  TrainConfig cfg = tiny_train_config();
  cfg.epochs_pretrain = 1;
  cfg.epochs_sched = 1;
  std::vector<EpochRow> log;
  Checkpoint prec = pretrain_precoder(cfg, ds, val, &log);
  ScenarioConfig sc4 = tiny_scenario();
  Dataset ds4 = generate_dataset(sc4, 10, 999, 1);
  Checkpoint sched = train_scheduler(cfg, prec, ds4, ds4, nullptr);
  EvalOptions eo;
  EvalReport with = evaluate(&sched, prec, ds, eo);
  EvalReport without = evaluate(nullptr, prec, ds, eo);
  CHECK(with.mean_se == without.mean_se);
  CHECK(with.kp == 2);
}

TEST_CASE("thread count does not change evaluation numbers") {
  ScenarioConfig sc = tiny_scenario();
  sc.m = 2;
  Dataset ds = generate_dataset(sc, 30, 1212, 1);
  Dataset val = generate_dataset(sc, 8, 1313, 1);
  TrainConfig cfg = tiny_train_config();
  cfg.epochs_pretrain = 1;
  cfg.epochs_sched = 1;
  std::vector<EpochRow> log;
  Checkpoint prec = pretrain_precoder(cfg, ds, val, &log);
  Checkpoint sched = train_scheduler(cfg, prec, ds, val, nullptr);
  EvalOptions e1, e3;
  e1.threads = 1;
  e3.threads = 3;
  e3.chunk = 7;
  e1.strongest_zf = e3.strongest_zf = true;
  e1.greedy_zf = e3.greedy_zf = true;
  EvalReport a = evaluate(&sched, prec, ds, e1);
  EvalReport b = evaluate(&sched, prec, ds, e3);
  CHECK(a.mean_se == b.mean_se);
  CHECK(a.se_strongest_zf == b.se_strongest_zf);
  CHECK(a.se_greedy_zf == b.se_greedy_zf);
  CHECK(a.max_power_rel == b.max_power_rel);
}

TEST_CASE("relabeling users leaves the evaluated mean unchanged") {
  ScenarioConfig sc = tiny_scenario();
  Dataset ds = generate_dataset(sc, 10, 1414, 1);
  Dataset val = generate_dataset(sc, 8, 1515, 1);
  TrainConfig cfg = tiny_train_config();
  cfg.epochs_pretrain = 1;
  cfg.epochs_sched = 1;
  std::vector<EpochRow> log;
  Checkpoint prec = pretrain_precoder(cfg, ds, val, &log);
  Checkpoint sched = train_scheduler(cfg, prec, ds, val, nullptr);

  Dataset perm = ds;
  const std::vector<int> p = {2, 0, 3, 1};
  const int64_t per = static_cast<int64_t>(sc.m) * sc.k * sc.n_r * sc.n_t;
  for (int64_t i = 0; i < ds.count; ++i) {
    ChannelSample h = permute_users(ds.sample(i), p);
    for (int64_t j = 0; j < per; ++j)
      perm.data[static_cast<size_t>(i * per + j)] = h.h[static_cast<size_t>(j)];
  }
  EvalOptions eo;
  EvalReport a = evaluate(&sched, prec, ds, eo);
  EvalReport b = evaluate(&sched, prec, perm, eo);
  CHECK(a.mean_se == doctest::Approx(b.mean_se).epsilon(1e-9));
}

TEST_CASE("sgnn variant trains and evaluates end to end") {
  ScenarioConfig sc = tiny_scenario();
  Dataset ds = generate_dataset(sc, 20, 1616, 1);
  Dataset val = generate_dataset(sc, 8, 1717, 1);
  TrainConfig cfg = tiny_train_config();
  cfg.variant = "sgnn";
  cfg.epochs_pretrain = 1;
  cfg.epochs_sched = 1;
  cfg.epochs_joint = 1;
  std::vector<EpochRow> log;
  Checkpoint prec = pretrain_precoder(cfg, ds, val, &log);
  Checkpoint sched = train_scheduler(cfg, prec, ds, val, &log);
  CHECK(sched.kind == NetKind::per_stream);
  CHECK(sched.stacks.size() == 2);
  JointResult j = train_joint(cfg, sched, prec, ds, val, &log);
  EvalOptions eo;
  EvalReport r = evaluate(&j.scheduler, j.precoder, val, eo);
  CHECK(std::isfinite(r.mean_se));
  CHECK(r.mean_se > 0.0);
}

TEST_CASE("sweep produces one row per axis value and validates its axis") {
  ScenarioConfig sc = tiny_scenario();
  Dataset ds = generate_dataset(sc, 16, 1818, 1);
  Dataset val = generate_dataset(sc, 8, 1919, 1);
  TrainConfig cfg = tiny_train_config();
  cfg.epochs_pretrain = 1;
  cfg.epochs_sched = 1;
  std::vector<EpochRow> log;
  Checkpoint prec = pretrain_precoder(cfg, ds, val, &log);
  Checkpoint sched = train_scheduler(cfg, prec, ds, val, nullptr);
  EvalOptions eo;
  std::vector<EvalReport> rows = sweep(&sched, prec, sc, "K", {3, 5}, 6, 42, eo);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].k == 3);
  CHECK(rows[1].k == 5);
  CHECK(rows[0].samples == 6);
  CHECK_THROWS_AS(sweep(&sched, prec, sc, "Q", {2}, 4, 1, eo), std::invalid_argument);
  CHECK_THROWS_AS(sweep(&sched, prec, sc, "K", {}, 4, 1, eo), std::invalid_argument);
}

TEST_CASE("mismatched checkpoints and datasets are rejected") {
  ScenarioConfig sc = tiny_scenario();
  Dataset ds = generate_dataset(sc, 8, 2020, 1);
  Dataset val = generate_dataset(sc, 8, 2121, 1);
  TrainConfig cfg = tiny_train_config();
  cfg.epochs_pretrain = 1;
  std::vector<EpochRow> log;
  Checkpoint prec = pretrain_precoder(cfg, ds, val, &log);
  Checkpoint sched = train_scheduler(cfg, prec, ds, val, nullptr);

  EvalOptions eo;
  CHECK_THROWS_AS(evaluate(nullptr, sched, ds, eo), std::invalid_argument);
  CHECK_THROWS_AS(evaluate(&prec, prec, ds, eo), std::invalid_argument);
  CHECK_THROWS_AS(batch_loss(&sched, prec, ds, {}, 0.1, true), std::invalid_argument);

  ScenarioConfig other = tiny_scenario();
  other.k = 5;
  Dataset vd = generate_dataset(other, 8, 2222, 1);
  CHECK_THROWS_AS(pretrain_precoder(cfg, ds, vd, nullptr), std::invalid_argument);
}

TEST_CASE("csv writers emit byte-stable schema-tagged tables") {
  std::vector<EpochRow> rows = {{"pretrain", 0, 0.0, -1.5, 2.25, 2.25},
                                {"joint", 3, 0.25, -2.0, 3.5, 3.5}};
  const std::string p1 = "train_log_test.csv";
  write_train_log_csv(p1, rows);
  const std::string got = slurp(p1);
  CHECK(got ==
        "#schema wbgnn.train-log.1\n"
        "phase,epoch,tau,train_loss,val_se,best_val_se\n"
        "pretrain,0,0,-1.5,2.25,2.25\n"
        "joint,3,0.25,-2,3.5,3.5\n");
  write_train_log_csv(p1, rows);
  CHECK(slurp(p1) == got);

  EvalReport r;
  r.m = 2;
  r.k = 6;
  r.kp = 2;
  r.n_t = 4;
  r.n_r = 1;
  r.samples = 10;
  r.mean_se = 1.5;
  r.se_strongest_precoder = std::numeric_limits<double>::quiet_NaN();
  r.se_strongest_zf = 2.5;
  r.se_greedy_zf = std::numeric_limits<double>::quiet_NaN();
  r.se_exhaustive_zf = std::numeric_limits<double>::quiet_NaN();
  r.se_matched_phase = std::numeric_limits<double>::quiet_NaN();
  r.max_rf_modulus = 0.0;
  r.flops_forward = 1234;
  r.seconds = 99.0;  // must not appear anywhere
  const std::string p2 = "eval_test.csv";
  write_eval_csv(p2, {r});
  const std::string e = slurp(p2);
  CHECK(e.find("#schema wbgnn.eval.1\n") == 0);
  CHECK(e.find("2,6,2,4,1,10,1.5,,2.5,,,,0,0,0,1234\n") != std::string::npos);
  CHECK(e.find("99") == std::string::npos);

  SpsdReport s;
  s.axis = "antenna";
  s.samples = 1000;
  s.agreement_rate = 1.0;
  s.max_deviation = 1e-12;
  const std::string p3 = "spsd_test.csv";
  write_spsd_csv(p3, {s});
  const std::string sp = slurp(p3);
  CHECK(sp ==
        "#schema wbgnn.spsd.1\n"
        "axis,samples,agreement_rate,max_deviation\n"
        "antenna,1000,1,1e-12\n");
  std::remove(p1.c_str());
  std::remove(p2.c_str());
  std::remove(p3.c_str());
}

TEST_CASE("single-user pretraining approaches the matched-filter bound") {
  ScenarioConfig sc = tiny_scenario();
  sc.k = 1;
  sc.k_sched = 1;
  sc.n_rf = 1;
  Dataset train = generate_dataset(sc, 100, 2323, 1);
  Dataset val = generate_dataset(sc, 30, 2424, 1);
  TrainConfig cfg = tiny_train_config();
  cfg.epochs_pretrain = 6;
  std::vector<EpochRow> log;
  Checkpoint prec = pretrain_precoder(cfg, train, val, &log);
  EvalOptions eo;
  eo.strongest_zf = true;  // single user: digital ZF equals matched filtering
  EvalReport r = evaluate(nullptr, prec, val, eo);
  CHECK(r.mean_se >= 0.7 * r.se_strongest_zf);
}
