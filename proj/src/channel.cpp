#include "csialign/channel.hpp"

#include <algorithm>
#include <random>

#include "csialign/rng.hpp"

namespace csialign {

void ArrayGeometry::validate() const {
  if (n_h < 1 || n_v < 1 || n_c < 1) throw Error("geometry: antenna and subcarrier counts must be >= 1");
  if (!(bandwidth_hz > 0) || !std::isfinite(bandwidth_hz)) throw Error("geometry: bandwidth must be positive");
}

void ClusterSpec::validate() const {
  if (n_paths < 1) throw Error("cluster: n_paths must be >= 1");
  if (aod_spread_rad < 0 || delay_spread_s < 0) throw Error("cluster: spreads must be >= 0");
  if (!(power > 0)) throw Error("cluster: power must be > 0");
}

void EnvironmentConfig::validate() const {
  const auto ordered = [](const auto& r) { return r.first <= r.second; };
  if (cluster_count_range.first < 1 || !ordered(cluster_count_range)) {
    throw Error("environment '" + id + "': invalid cluster_count_range");
  }
  if (!ordered(aaod_sector_rad) || aaod_sector_rad.first < -kPi<double> || aaod_sector_rad.second > kPi<double>) {
    throw Error("environment '" + id + "': invalid aaod_sector");
  }
  if (!ordered(eaod_sector_rad) || eaod_sector_rad.first < 0 || eaod_sector_rad.second > kPi<double>) {
    throw Error("environment '" + id + "': invalid eaod_sector");
  }
  if (!ordered(delay_range_s) || delay_range_s.first < 0) {
    throw Error("environment '" + id + "': invalid delay_range");
  }
  if (aod_spread_rad < 0 || delay_spread_s < 0) throw Error("environment '" + id + "': negative spread");
  if (paths_per_cluster < 1) throw Error("environment '" + id + "': paths_per_cluster must be >= 1");
}

LeakageProfile leakage_profile(const ArrayGeometry& geom, std::span<const PathComponent> cluster_paths) {
  if (cluster_paths.empty()) throw Error("no paths");
  const auto id = cluster_paths.front().cluster_id;
  for (const auto& p : cluster_paths) {
    if (p.cluster_id != id) throw Error("leakage_profile: mixed cluster ids");
  }

  double wsum = 0;
  for (const auto& p : cluster_paths) wsum += std::norm(p.gain);
  const bool uniform = !(wsum > 0);
  const double n_paths = static_cast<double>(cluster_paths.size());

  double s_c = 0, c_c = 0, t_c = 0;
  for (const auto& p : cluster_paths) {
    const double w = uniform ? 1.0 / n_paths : std::norm(p.gain) / wsum;
    s_c += w * std::sin(p.aaod_rad) * std::sin(p.eaod_rad);
    c_c += w * std::cos(p.eaod_rad);
    t_c += w * p.delay_s;
  }

  LeakageProfile out;
  const double half_h = geom.n_h / 2.0;
  const double half_v = geom.n_v / 2.0;
  out.peak_h = static_cast<int>(round_half_away(half_h * s_c));
  out.peak_v = static_cast<int>(round_half_away(half_v * c_c));
  out.peak_d = static_cast<int>(round_half_away(geom.bandwidth_hz * t_c));
  out.center_misalignment = {half_h * s_c - out.peak_h, half_v * c_c - out.peak_v,
                             geom.bandwidth_hz * t_c - out.peak_d};
  out.residues.reserve(cluster_paths.size());
  for (const auto& p : cluster_paths) {
    out.residues.push_back({half_h * std::sin(p.aaod_rad) * std::sin(p.eaod_rad) - out.peak_h,
                            half_v * std::cos(p.eaod_rad) - out.peak_v,
                            geom.bandwidth_hz * p.delay_s - out.peak_d});
  }

  const Eigen::MatrixXcd x =
      AngularDelayTransform<double>(geom).forward(synthesize_channel<double>(geom, cluster_paths));
  const Eigen::MatrixXd power = x.cwiseAbs2();
  const double total = power.sum();
  out.offpeak_power_fraction = total > 0 ? std::clamp(1.0 - power.maxCoeff() / total, 0.0, 1.0) : 0.0;
  out.horizontal_power = Eigen::VectorXd::Zero(geom.n_h);
  for (Index n = 0; n < power.rows(); ++n) out.horizontal_power(n / geom.n_v) += power.row(n).sum();
  return out;
}

std::vector<PathComponent> draw_paths(const EnvironmentConfig& cfg, std::uint64_t sample_index) {
  auto rng = detail::seeded_engine(cfg.seed, sample_index);
  std::uniform_int_distribution<int> n_clusters(cfg.cluster_count_range.first, cfg.cluster_count_range.second);
  std::uniform_real_distribution<double> aaod(cfg.aaod_sector_rad.first, cfg.aaod_sector_rad.second);
  std::uniform_real_distribution<double> eaod(cfg.eaod_sector_rad.first, cfg.eaod_sector_rad.second);
  std::uniform_real_distribution<double> delay(cfg.delay_range_s.first, cfg.delay_range_s.second);
  std::normal_distribution<double> unit(0.0, 1.0);

  const int count = n_clusters(rng);
  std::vector<PathComponent> paths;
  paths.reserve(static_cast<std::size_t>(count) * cfg.paths_per_cluster);
  for (int l = 0; l < count; ++l) {
    const double phi_c = aaod(rng);
    const double theta_c = eaod(rng);
    const double tau_c = delay(rng);
    const double power = std::pow(10.0, -cfg.power_decay_db_per_cluster * l / 10.0);
    const double gain_std = std::sqrt(power / cfg.paths_per_cluster / 2.0);
    for (int i = 0; i < cfg.paths_per_cluster; ++i) {
      PathComponent p;
      p.cluster_id = static_cast<std::uint32_t>(l);
      p.aaod_rad = std::remainder(phi_c + cfg.aod_spread_rad * unit(rng), 2 * kPi<double>);
      p.eaod_rad = std::clamp(theta_c + cfg.aod_spread_rad * unit(rng), 0.0, kPi<double>);
      p.delay_s = std::max(0.0, tau_c + cfg.delay_spread_s * unit(rng));
      const double re = unit(rng);
      const double im = unit(rng);
      p.gain = {gain_std * re, gain_std * im};
      paths.push_back(p);
    }
  }
  return paths;
}

std::vector<ChannelSample> sample_environment(const EnvironmentConfig& cfg, std::size_t n_samples,
                                              const ArrayGeometry& geom) {
  cfg.validate();
  geom.validate();
  std::vector<ChannelSample> out(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) {
    auto paths = draw_paths(cfg, i);
    const Eigen::MatrixXcd raw = synthesize_channel<double>(geom, paths);
    const double norm = raw.norm();
    if (!(norm > 0)) throw Error("degenerate sample");
    const double scale = std::sqrt(static_cast<double>(raw.size())) / norm;
    for (auto& p : paths) p.gain *= scale;
    out[i].h = raw * scale;
    out[i].env_id = cfg.id;
    out[i].paths = std::move(paths);
  }
  return out;
}

Eigen::MatrixXcd add_estimation_noise(const Eigen::MatrixXcd& h, double snr_db, std::uint64_t seed) {
  if (std::isnan(snr_db)) throw Error("add_estimation_noise: snr_db is NaN");
  if (std::isinf(snr_db) && snr_db > 0) return h;
  const double signal = h.squaredNorm();
  const double per_element = signal / static_cast<double>(h.size()) / std::pow(10.0, snr_db / 10.0);
  const double std_part = std::sqrt(per_element / 2.0);
  auto rng = detail::seeded_engine(seed, 0);
  std::normal_distribution<double> unit(0.0, 1.0);
  Eigen::MatrixXcd out = h;
  for (Index j = 0; j < out.cols(); ++j) {
    for (Index i = 0; i < out.rows(); ++i) {
      const double re = unit(rng);
      const double im = unit(rng);
      out(i, j) += std::complex<double>(std_part * re, std_part * im);
    }
  }
  return out;
}

}  // namespace csialign
