#pragma once

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "wbgnn/config.hpp"

namespace wbgnn {

// Wideband clustered-ray channel generator over M resource blocks for a
// single cell: BS with an N_T-element UPA serving K users with N_R-element
// ULAs. Per-RB channels share cluster geometry; RB variation comes from
// delay-dependent phase rotations.
struct ScenarioConfig {
  // sizes
  int m = 2;        // resource blocks
  int k = 6;        // users
  int n_r = 1;      // UE antennas
  int n_t = 4;      // BS antennas
  int k_sched = 2;  // users scheduled per RB (K')
  int n_rf = 2;     // RF chains

  // radio
  double fc_ghz = 28.0;
  double bw_hz = 400e6;
  int m_max = 264;  // RB count the noise budget is split over
  double p_tot_dbm = 46.0;
  double noise_dbm_hz = -174.0;
  double noise_figure_db = 7.0;
  double rb_spacing_hz = 1.44e6;

  // geometry
  double bs_height_m = 25.0;
  double ue_height_m = 1.5;
  double cell_radius_m = 250.0;
  double min_dist_m = 35.0;
  double shadow_sigma_db = 6.0;

  // propagation
  int n_clusters = 8;
  int n_rays = 10;
  double delay_spread_ns = 300.0;
  double angle_spread_deg = 10.0;

  enum class Placement { crowded_box, uma_sector };
  Placement placement = Placement::crowded_box;
  double box_size_m = 20.0;

  void validate() const;
  double noise_power_w() const;  // per-RB sigma^2 in watts
  double p_tot_w() const;

  static ScenarioConfig from_config(const Config& c);
  Config to_config() const;
};

// 3GPP-style UMa LOS pathloss, heights folded in via the UE-height term
double pathloss_db(double d3d_m, double fc_ghz, double ue_height_m);
// total noise power in dBm over bw, then split across m_max RBs
double noise_power_dbm_per_rb(double noise_dbm_hz, double bw_hz,
                              double noise_figure_db, int m_max);

struct ChannelSample {
  int m = 0, k = 0, n_r = 0, n_t = 0;
  std::vector<std::complex<double>> h;  // (rb, k*n_r, n_t) row-major

  std::complex<double>& at(int rb, int kr, int nt) {
    return h[static_cast<size_t>((rb * k * n_r + kr) * n_t + nt)];
  }
  std::complex<double> at(int rb, int kr, int nt) const {
    return h[static_cast<size_t>((rb * k * n_r + kr) * n_t + nt)];
  }
  int64_t entries() const { return static_cast<int64_t>(h.size()); }
};

ChannelSample generate_sample(const ScenarioConfig& cfg, uint64_t seed);

struct Dataset {
  ScenarioConfig cfg;
  int64_t count = 0;
  std::vector<std::complex<double>> data;  // (sample, rb, kr, nt)

  ChannelSample sample(int64_t i) const;
};

// per-sample seed = base_seed + index, so the result is independent of the
// thread count
Dataset generate_dataset(const ScenarioConfig& cfg, int64_t n, uint64_t base_seed,
                         int threads = 1);

// WBCH container: magic "WBCH", u32 version, u32 M,K,N_R,N_T, u64 count,
// then count*(M*K*N_R*N_T) little-endian f64 (re,im) pairs in (sample, rb,
// user-antenna, bs-antenna) order. A scenario sidecar goes to <path>.cfg.
void write_wbch(const std::string& path, const Dataset& ds);
Dataset read_wbch(const std::string& path);

}  // namespace wbgnn
