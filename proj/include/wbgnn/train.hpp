#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wbgnn/baselines.hpp"
#include "wbgnn/channel.hpp"
#include "wbgnn/gnn.hpp"
#include "wbgnn/system.hpp"

namespace wbgnn {

// Adam with bias correction, one moment pair per parameter tensor.
struct Adam {
  double lr = 0.001;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  int64_t steps = 0;
  std::vector<Tensor> m, v;

  void init(const std::vector<Tensor*>& params);
  void step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads);
};

struct TrainConfig {
  int batch = 50;
  double lr_precoder = 0.001;
  double lr_scheduler = 0.0003;
  int epochs_pretrain = 40;
  int epochs_sched = 10;
  int epochs_joint = 40;
  double tau0 = 0.1, tau_amp = 0.4, tau_decay = 0.02;
  std::string init_rule = "fan-in";  // only supported rule
  uint64_t seed = 1;
  std::string variant = "ngnn";  // "ngnn" | "sgnn"
  bool use_attention = true;
  std::vector<int> sched_widths = {4, 32, 32, 1};  // sgnn swaps the input width to 5
  std::vector<int> prec_hidden = {48, 48, 48};     // in/out widths are appended
  std::string train_path, val_path;
  std::string precoder_out, scheduler_out;

  double tau(int64_t epoch) const;
  void validate() const;
  static TrainConfig from_config(const Config& c);
  Config to_config() const;
};

struct EpochRow {
  std::string phase;
  int epoch = 0;
  double tau = 0.0;  // 0 in phases without a temperature
  double train_loss = 0.0;
  double val_se = 0.0;
  double best_val_se = 0.0;
};

// per-sample scheduling features / strongest-user bases for a whole dataset
std::vector<Features> dataset_features(const Dataset& ds);
std::vector<ScheduleBasis> strongest_bases(const Dataset& ds, int kp);

// Batch-mean negative scheduled rate over the given samples. Soft mode routes
// SoftTop rows through the extraction (the training path); hard mode applies
// one-hot decisions. sched == nullptr schedules the strongest users instead.
double batch_loss(const Checkpoint* sched, const Checkpoint& prec,
                  const Dataset& ds, const std::vector<int64_t>& idx, double tau,
                  bool soft);

// Training phases. Each runs Adam over its module(s), validates the hard path
// once per epoch, appends one EpochRow per epoch, and returns the checkpoint
// of the best validation epoch.
Checkpoint pretrain_precoder(const TrainConfig& cfg, const Dataset& train,
                             const Dataset& val, std::vector<EpochRow>* log);
Checkpoint train_scheduler(const TrainConfig& cfg, const Checkpoint& precoder,
                           const Dataset& train, const Dataset& val,
                           std::vector<EpochRow>* log);

struct JointResult {
  Checkpoint scheduler, precoder;
  double best_val_se = 0.0;
};
JointResult train_joint(const TrainConfig& cfg, const Checkpoint& sched0,
                        const Checkpoint& prec0, const Dataset& train,
                        const Dataset& val, std::vector<EpochRow>* log);

struct EvalOptions {
  int threads = 1;
  int chunk = 25;  // samples per forward
  bool strongest_precoder = false;  // strongest schedule through the same precoder
  bool strongest_zf = false;
  bool greedy_zf = false;
  bool exhaustive_zf = false;
  bool matched_phase = false;
};

// Baseline fields hold NaN when not requested; the CSV writer leaves those
// cells empty. Wall-clock stays out of the CSV so reports are byte-stable.
struct EvalReport {
  int m = 0, k = 0, kp = 0, n_t = 0, n_r = 0;
  int64_t samples = 0;
  double mean_se = 0.0;
  double se_strongest_precoder = 0.0;
  double se_strongest_zf = 0.0;
  double se_greedy_zf = 0.0;
  double se_exhaustive_zf = 0.0;
  double se_matched_phase = 0.0;
  double max_rf_modulus = 0.0, max_comb_modulus = 0.0, max_power_rel = 0.0;
  int64_t flops_forward = 0;
  double seconds = 0.0;
};

// Hard-path evaluation. sched == nullptr falls back to the strongest schedule;
// K <= K' bypasses scheduling and precodes every user. Thread count does not
// change any reported number.
EvalReport evaluate(const Checkpoint* sched, const Checkpoint& prec,
                    const Dataset& ds, const EvalOptions& opt);

// the per-sample SE vector behind evaluate (for paired comparisons)
std::vector<double> per_sample_se(const Checkpoint* sched, const Checkpoint& prec,
                                  const Dataset& ds, const EvalOptions& opt);

// One evaluation row per value of the swept axis in {"M","K","NT","NR"};
// dataset i is generated with seed base_seed + i.
std::vector<EvalReport> sweep(const Checkpoint* sched, const Checkpoint& prec,
                              const ScenarioConfig& base, const std::string& axis,
                              const std::vector<int>& values, int64_t count,
                              uint64_t base_seed, const EvalOptions& opt);

// CSV artifacts; line one is a schema tag, line two the column names.
void write_train_log_csv(const std::string& path, const std::vector<EpochRow>& rows);
void write_eval_csv(const std::string& path, const std::vector<EvalReport>& rows);
void write_spsd_csv(const std::string& path, const std::vector<SpsdReport>& rows);

}  // namespace wbgnn
