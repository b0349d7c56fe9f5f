#include "wbgnn/channel.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <thread>

#include "wbgnn/rng.hpp"

namespace wbgnn {
namespace {

constexpr double kPi = 3.14159265358979323846;

double dbm_to_w(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }

// largest vertical dim <= sqrt(n) that divides n
void upa_factor(int n, int& nh, int& nv) {
  nv = static_cast<int>(std::floor(std::sqrt(static_cast<double>(n))));
  while (nv > 1 && n % nv != 0) --nv;
  nh = n / nv;
}

}  // namespace

void ScenarioConfig::validate() const {
  if (m < 1) throw std::invalid_argument("scenario: m must be >= 1");
  if (k < 1) throw std::invalid_argument("scenario: k must be >= 1");
  if (n_r < 1 || n_t < 1) throw std::invalid_argument("scenario: antenna counts must be >= 1");
  if (k_sched < 1 || k_sched > k)
    throw std::invalid_argument("scenario: k_sched must be in [1, k]");
  if (n_rf < 1) throw std::invalid_argument("scenario: n_rf must be >= 1");
  if (bw_hz <= 0 || fc_ghz <= 0) throw std::invalid_argument("scenario: bad radio params");
  if (m_max < m) throw std::invalid_argument("scenario: m_max must be >= m");
  if (min_dist_m <= 0 || cell_radius_m < min_dist_m)
    throw std::invalid_argument("scenario: bad cell geometry");
  if (n_clusters < 1 || n_rays < 1)
    throw std::invalid_argument("scenario: need at least one cluster and ray");
  if (delay_spread_ns < 0) throw std::invalid_argument("scenario: negative delay spread");
  if (placement == Placement::crowded_box &&
      min_dist_m + box_size_m >= cell_radius_m)
    throw std::invalid_argument("scenario: box does not fit the cell");
}

double pathloss_db(double d3d_m, double fc_ghz, double ue_height_m) {
  return 13.54 + 39.08 * std::log10(d3d_m) + 20.0 * std::log10(fc_ghz) -
         0.6 * (ue_height_m - 1.5);
}

double noise_power_dbm_per_rb(double noise_dbm_hz, double bw_hz,
                              double noise_figure_db, int m_max) {
  return noise_dbm_hz + 10.0 * std::log10(bw_hz) + noise_figure_db -
         10.0 * std::log10(static_cast<double>(m_max));
}

double ScenarioConfig::noise_power_w() const {
  return dbm_to_w(noise_power_dbm_per_rb(noise_dbm_hz, bw_hz, noise_figure_db, m_max));
}

double ScenarioConfig::p_tot_w() const { return dbm_to_w(p_tot_dbm); }

ScenarioConfig ScenarioConfig::from_config(const Config& c) {
  ScenarioConfig s;
  s.m = static_cast<int>(c.get_int("m", s.m));
  s.k = static_cast<int>(c.get_int("k", s.k));
  s.n_r = static_cast<int>(c.get_int("n_r", s.n_r));
  s.n_t = static_cast<int>(c.get_int("n_t", s.n_t));
  s.k_sched = static_cast<int>(c.get_int("k_sched", s.k_sched));
  s.n_rf = static_cast<int>(c.get_int("n_rf", s.n_rf));
  s.fc_ghz = c.get_double("fc_ghz", s.fc_ghz);
  s.bw_hz = c.get_double("bw_hz", s.bw_hz);
  s.m_max = static_cast<int>(c.get_int("m_max", s.m_max));
  s.p_tot_dbm = c.get_double("p_tot_dbm", s.p_tot_dbm);
  s.noise_dbm_hz = c.get_double("noise_dbm_hz", s.noise_dbm_hz);
  s.noise_figure_db = c.get_double("noise_figure_db", s.noise_figure_db);
  s.rb_spacing_hz = c.get_double("rb_spacing_hz", s.rb_spacing_hz);
  s.bs_height_m = c.get_double("bs_height_m", s.bs_height_m);
  s.ue_height_m = c.get_double("ue_height_m", s.ue_height_m);
  s.cell_radius_m = c.get_double("cell_radius_m", s.cell_radius_m);
  s.min_dist_m = c.get_double("min_dist_m", s.min_dist_m);
  s.shadow_sigma_db = c.get_double("shadow_sigma_db", s.shadow_sigma_db);
  s.n_clusters = static_cast<int>(c.get_int("n_clusters", s.n_clusters));
  s.n_rays = static_cast<int>(c.get_int("n_rays", s.n_rays));
  s.delay_spread_ns = c.get_double("delay_spread_ns", s.delay_spread_ns);
  s.angle_spread_deg = c.get_double("angle_spread_deg", s.angle_spread_deg);
  const std::string pl = c.get_str("placement", "crowded_box");
  if (pl == "crowded_box") s.placement = Placement::crowded_box;
  else if (pl == "uma_sector") s.placement = Placement::uma_sector;
  else throw std::runtime_error("unknown placement: " + pl);
  s.box_size_m = c.get_double("box_size_m", s.box_size_m);
  s.validate();
  return s;
}

Config ScenarioConfig::to_config() const {
  Config c;
  c.set_int("m", m);
  c.set_int("k", k);
  c.set_int("n_r", n_r);
  c.set_int("n_t", n_t);
  c.set_int("k_sched", k_sched);
  c.set_int("n_rf", n_rf);
  c.set_double("fc_ghz", fc_ghz);
  c.set_double("bw_hz", bw_hz);
  c.set_int("m_max", m_max);
  c.set_double("p_tot_dbm", p_tot_dbm);
  c.set_double("noise_dbm_hz", noise_dbm_hz);
  c.set_double("noise_figure_db", noise_figure_db);
  c.set_double("rb_spacing_hz", rb_spacing_hz);
  c.set_double("bs_height_m", bs_height_m);
  c.set_double("ue_height_m", ue_height_m);
  c.set_double("cell_radius_m", cell_radius_m);
  c.set_double("min_dist_m", min_dist_m);
  c.set_double("shadow_sigma_db", shadow_sigma_db);
  c.set_int("n_clusters", n_clusters);
  c.set_int("n_rays", n_rays);
  c.set_double("delay_spread_ns", delay_spread_ns);
  c.set_double("angle_spread_deg", angle_spread_deg);
  c.set_str("placement",
            placement == Placement::crowded_box ? "crowded_box" : "uma_sector");
  c.set_double("box_size_m", box_size_m);
  return c;
}

ChannelSample generate_sample(const ScenarioConfig& cfg, uint64_t seed) {
  cfg.validate();
  Rng rng(seed);

  ChannelSample out;
  out.m = cfg.m;
  out.k = cfg.k;
  out.n_r = cfg.n_r;
  out.n_t = cfg.n_t;
  out.h.assign(static_cast<size_t>(cfg.m) * cfg.k * cfg.n_r * cfg.n_t, {0.0, 0.0});

  int nh = 1, nv = 1;
  upa_factor(cfg.n_t, nh, nv);
  const double spread = cfg.angle_spread_deg * kPi / 180.0;
  const double ds_s = cfg.delay_spread_ns * 1e-9;
  const double dz = cfg.bs_height_m - cfg.ue_height_m;

  // shared box center for the crowded placement
  double cx = 0.0, cy = 0.0;
  if (cfg.placement == ScenarioConfig::Placement::crowded_box) {
    const double lo = cfg.min_dist_m + 0.5 * cfg.box_size_m;
    const double hi = cfg.cell_radius_m - 0.5 * cfg.box_size_m;
    const double dc = rng.uniform(lo, hi);
    const double ac = rng.uniform(-kPi / 3.0, kPi / 3.0);
    cx = dc * std::cos(ac);
    cy = dc * std::sin(ac);
  }

  std::vector<std::complex<double>> a_bs(static_cast<size_t>(cfg.n_t));
  std::vector<std::complex<double>> a_ue(static_cast<size_t>(cfg.n_r));

  for (int k = 0; k < cfg.k; ++k) {
    double ux, uy;
    if (cfg.placement == ScenarioConfig::Placement::crowded_box) {
      ux = cx + rng.uniform(-0.5 * cfg.box_size_m, 0.5 * cfg.box_size_m);
      uy = cy + rng.uniform(-0.5 * cfg.box_size_m, 0.5 * cfg.box_size_m);
    } else {
      const double lo2 = cfg.min_dist_m * cfg.min_dist_m;
      const double hi2 = cfg.cell_radius_m * cfg.cell_radius_m;
      const double d = std::sqrt(rng.uniform(lo2, hi2));
      const double a = rng.uniform(-kPi / 3.0, kPi / 3.0);
      ux = d * std::cos(a);
      uy = d * std::sin(a);
    }
    const double d2d = std::max(1.0, std::hypot(ux, uy));
    const double d3d = std::hypot(d2d, dz);
    const double az = std::atan2(uy, ux);
    const double el = std::atan2(dz, d2d);

    const double shadow_db = rng.normal() * cfg.shadow_sigma_db;
    const double pl = pathloss_db(d3d, cfg.fc_ghz, cfg.ue_height_m);
    const double gain = std::pow(10.0, -(pl + shadow_db) / 10.0);

    // cluster geometry
    const int nc = cfg.n_clusters, nl = cfg.n_rays;
    std::vector<double> tau(static_cast<size_t>(nc)), wc(static_cast<size_t>(nc));
    std::vector<double> caz(static_cast<size_t>(nc)), cel(static_cast<size_t>(nc)),
        caoa(static_cast<size_t>(nc));
    double wsum = 0.0;
    for (int c = 0; c < nc; ++c) {
      tau[static_cast<size_t>(c)] = rng.exponential(ds_s);
      caz[static_cast<size_t>(c)] = az + rng.normal() * spread;
      cel[static_cast<size_t>(c)] = el + rng.normal() * spread * 0.25;
      caoa[static_cast<size_t>(c)] = rng.uniform(-kPi, kPi);
      wc[static_cast<size_t>(c)] =
          ds_s > 0.0 ? std::exp(-tau[static_cast<size_t>(c)] / ds_s) : 1.0;
      wsum += wc[static_cast<size_t>(c)];
    }

    // accumulate per-(cluster,ray) rank-one terms once, then rotate per RB
    const double amp = std::sqrt(gain);
    for (int c = 0; c < nc; ++c) {
      const double ray_pw = wc[static_cast<size_t>(c)] / (wsum * nl);
      const double ray_sd = std::sqrt(0.5 * ray_pw);
      for (int l = 0; l < nl; ++l) {
        const std::complex<double> alpha(rng.normal() * ray_sd, rng.normal() * ray_sd);
        const double raz = caz[static_cast<size_t>(c)] + rng.normal() * spread * 0.1;
        const double rel = cel[static_cast<size_t>(c)] + rng.normal() * spread * 0.05;
        const double raoa = caoa[static_cast<size_t>(c)] + rng.normal() * spread * 0.1;

        const double sh = std::sin(raz) * std::cos(rel);
        const double sv = std::sin(rel);
        for (int n = 0; n < cfg.n_t; ++n) {
          const int p = n % nh, q = n / nh;
          const double ph = kPi * (p * sh + q * sv);
          a_bs[static_cast<size_t>(n)] = {std::cos(ph), std::sin(ph)};
        }
        for (int r = 0; r < cfg.n_r; ++r) {
          const double ph = kPi * r * std::sin(raoa);
          a_ue[static_cast<size_t>(r)] = {std::cos(ph), std::sin(ph)};
        }

        for (int m = 0; m < cfg.m; ++m) {
          const double rot = -2.0 * kPi * (m * cfg.rb_spacing_hz) * tau[static_cast<size_t>(c)];
          const std::complex<double> ph(std::cos(rot), std::sin(rot));
          const std::complex<double> coef = amp * alpha * ph;
          for (int r = 0; r < cfg.n_r; ++r) {
            const std::complex<double> ue = coef * a_ue[static_cast<size_t>(r)];
            const int kr = k * cfg.n_r + r;
            for (int n = 0; n < cfg.n_t; ++n)
              out.at(m, kr, n) += ue * std::conj(a_bs[static_cast<size_t>(n)]);
          }
        }
      }
    }
  }
  return out;
}

ChannelSample Dataset::sample(int64_t i) const {
  if (i < 0 || i >= count) throw std::out_of_range("dataset sample index");
  ChannelSample s;
  s.m = cfg.m;
  s.k = cfg.k;
  s.n_r = cfg.n_r;
  s.n_t = cfg.n_t;
  const size_t per = static_cast<size_t>(cfg.m) * cfg.k * cfg.n_r * cfg.n_t;
  s.h.assign(data.begin() + static_cast<int64_t>(per) * i,
             data.begin() + static_cast<int64_t>(per) * (i + 1));
  return s;
}

Dataset generate_dataset(const ScenarioConfig& cfg, int64_t n, uint64_t base_seed,
                         int threads) {
  cfg.validate();
  if (n < 1) throw std::invalid_argument("generate_dataset: n must be >= 1");
  Dataset ds;
  ds.cfg = cfg;
  ds.count = n;
  const size_t per = static_cast<size_t>(cfg.m) * cfg.k * cfg.n_r * cfg.n_t;
  ds.data.assign(per * static_cast<size_t>(n), {0.0, 0.0});

  auto fill = [&](int64_t lo, int64_t hi) {
    for (int64_t i = lo; i < hi; ++i) {
      const ChannelSample s = generate_sample(cfg, base_seed + static_cast<uint64_t>(i));
      std::memcpy(ds.data.data() + per * static_cast<size_t>(i), s.h.data(),
                  per * sizeof(std::complex<double>));
    }
  };

  if (threads <= 1) {
    fill(0, n);
  } else {
    std::vector<std::thread> pool;
    const int64_t chunk = (n + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
      const int64_t lo = t * chunk, hi = std::min<int64_t>(n, lo + chunk);
      if (lo >= hi) break;
      pool.emplace_back(fill, lo, hi);
    }
    for (auto& th : pool) th.join();
  }
  return ds;
}

void write_wbch(const std::string& path, const Dataset& ds) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write dataset: " + path);
  const char magic[4] = {'W', 'B', 'C', 'H'};
  out.write(magic, 4);
  auto w32 = [&](uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
  w32(1);
  w32(static_cast<uint32_t>(ds.cfg.m));
  w32(static_cast<uint32_t>(ds.cfg.k));
  w32(static_cast<uint32_t>(ds.cfg.n_r));
  w32(static_cast<uint32_t>(ds.cfg.n_t));
  const uint64_t cnt = static_cast<uint64_t>(ds.count);
  out.write(reinterpret_cast<const char*>(&cnt), 8);
  out.write(reinterpret_cast<const char*>(ds.data.data()),
            static_cast<std::streamsize>(ds.data.size() * sizeof(std::complex<double>)));
  if (!out) throw std::runtime_error("dataset write failed: " + path);
  ds.cfg.to_config().write_file(path + ".cfg");
}

Dataset read_wbch(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open dataset: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "WBCH", 4) != 0)
    throw std::runtime_error("not a WBCH file: " + path);
  auto r32 = [&]() {
    uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 4);
    return v;
  };
  const uint32_t version = r32();
  if (version != 1) throw std::runtime_error("unsupported WBCH version");
  Dataset ds;
  ds.cfg = ScenarioConfig{};
  ds.cfg.m = static_cast<int>(r32());
  ds.cfg.k = static_cast<int>(r32());
  ds.cfg.n_r = static_cast<int>(r32());
  ds.cfg.n_t = static_cast<int>(r32());
  uint64_t cnt = 0;
  in.read(reinterpret_cast<char*>(&cnt), 8);
  if (!in) throw std::runtime_error("truncated WBCH header: " + path);
  ds.count = static_cast<int64_t>(cnt);
  const size_t per =
      static_cast<size_t>(ds.cfg.m) * ds.cfg.k * ds.cfg.n_r * ds.cfg.n_t;
  ds.data.assign(per * cnt, {0.0, 0.0});
  in.read(reinterpret_cast<char*>(ds.data.data()),
          static_cast<std::streamsize>(ds.data.size() * sizeof(std::complex<double>)));
  if (!in || in.gcount() !=
                 static_cast<std::streamsize>(ds.data.size() * sizeof(std::complex<double>)))
    throw std::runtime_error("truncated WBCH data: " + path);

  // sidecar restores the full scenario when present
  std::ifstream side(path + ".cfg");
  if (side) {
    const int m = ds.cfg.m, k = ds.cfg.k, nr = ds.cfg.n_r, nt = ds.cfg.n_t;
    ds.cfg = ScenarioConfig::from_config(Config::parse_file(path + ".cfg"));
    if (ds.cfg.m != m || ds.cfg.k != k || ds.cfg.n_r != nr || ds.cfg.n_t != nt)
      throw std::runtime_error("WBCH sidecar disagrees with header: " + path);
  }
  return ds;
}

}  // namespace wbgnn
