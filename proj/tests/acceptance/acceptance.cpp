// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
// Criterion numbers given as arguments restrict the run to those.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <string>

#include "csialign/align.hpp"
#include "csialign/channel.hpp"
#include "csialign/codec.hpp"
#include "csialign/decouple.hpp"
#include "csialign/harness.hpp"
#include "csialign/metrics.hpp"
#include "oracles.hpp"

using namespace csialign;

namespace {

constexpr double kDeg = kPi<double> / 180;
const ArrayGeometry kGeom;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Single clusters at two intra-cluster spreads against their reference concentrations.
Outcome concentration_table() {
  const auto t0 = std::chrono::steady_clock::now();
  bool ok = true;
  std::string detail;
  const std::pair<double, double> rows[] = {{5.0, 0.993}, {2.0, 0.994}};
  for (const auto& [spread, reference] : rows) {
    EnvironmentConfig cfg;
    cfg.cluster_count_range = {1, 1};
    cfg.aod_spread_rad = spread * kDeg;
    cfg.delay_spread_s = 4.7e-9;
    cfg.paths_per_cluster = 20;
    cfg.seed = 101;
    double acc = 0;
    const auto samples = sample_environment(cfg, 1000, kGeom);
    for (const auto& s : samples) acc += concentration(s.h);
    const double mean = acc / static_cast<double>(samples.size());
    ok = ok && mean >= 0.99 && std::abs(mean - reference) <= 0.005;
    detail += fmt("xi(%g deg)=%.4f vs %.3f; ", spread, mean, reference);
  }
  const double dt = seconds_since(t0);
  return {ok && dt <= 10.0, detail + fmt("%.1f s", dt)};
}

Outcome eym_optimality() {
  auto rng = oracle::engine(202);
  double worst_rel = 0;
  int beaten = 0;
  for (int i = 0; i < 100; ++i) {
    const auto h = oracle::random_complex(32, 32, rng);
    const auto sv = oracle::singular_values(h);
    for (int r = 1; r <= 8; ++r) {
      const double res = (h - sum_clusters(svd_decouple(h, r), 32, 32)).norm();
      const double tail = std::sqrt(oracle::tail_energy(sv, r));
      worst_rel = std::max(worst_rel, std::abs(res - tail) / tail);
      for (int k = 0; k < 50; ++k) {
        const auto q = oracle::random_orthonormal(32, r, rng);
        const auto w = oracle::random_orthonormal(32, r, rng);
        const Eigen::MatrixXcd approx = q * (q.adjoint() * h * w) * w.adjoint();
        if ((h - approx).norm() < res) ++beaten;
      }
    }
  }
  return {worst_rel <= 1e-9 && beaten == 0, fmt("max rel. residual error %.2e, beaten %d of 40000", worst_rel, beaten)};
}

std::vector<Eigen::MatrixXcd> off_grid_clusters(std::size_t n, std::uint64_t seed) {
  EnvironmentConfig cfg;
  cfg.cluster_count_range = {1, 1};
  cfg.aaod_sector_rad = {-kPi<double> / 2, kPi<double> / 2};
  cfg.eaod_sector_rad = {kPi<double> / 6, 5 * kPi<double> / 6};
  cfg.seed = seed;
  std::vector<Eigen::MatrixXcd> out;
  for (auto& s : sample_environment(cfg, n, kGeom)) out.push_back(std::move(s.h));
  return out;
}

Outcome alignment_fixed_point() {
  const Aligner<double> al(kGeom, CodebookConfig{});
  int hits = 0;
  double worst_phase = 0;
  const auto clusters = off_grid_clusters(1000, 303);
  for (const auto& c : clusters) {
    const auto a = al.align(c);
    const Eigen::MatrixXcd spatial = al.transform().inverse(a.c_aln);
    const auto peak = search_angular_peak(spatial, al.codebooks());
    const int m = search_delay_peak(spatial, al.codebooks());
    if (peak == std::pair<int, int>{0, 0} && m == 0) ++hits;
    worst_phase = std::max(worst_phase, std::abs(std::arg(peak_value(spatial, 0, 0, 0, al.codebooks()))));
  }
  return {hits == 1000 && worst_phase <= kPi<double> / 4 + 1e-12,
          fmt("peak at origin %d/1000, max |residual phase| %.4f rad (pi/4 = %.4f)", hits, worst_phase, kPi<double> / 4)};
}

Outcome exact_inverse() {
  const Aligner<double> al(kGeom, CodebookConfig{});
  double worst = 0;
  for (const auto& c : off_grid_clusters(1000, 404)) {
    const auto a = al.align(c);
    worst = std::max(worst, (al.unalign(a.c_aln, a.meta) - c).norm() / c.norm());
  }
  return {worst <= 1e-10, fmt("max rel. Frobenius error %.2e", worst)};
}

double brute_force_npae(const Eigen::MatrixXcd& h, const std::vector<Eigen::MatrixXcd>& clusters,
                        const std::vector<PathComponent>& paths) {
  const int n = static_cast<int>(paths.size());
  const int base = static_cast<int>(clusters.size()) + 1;
  std::vector<Eigen::MatrixXcd> resp;
  for (const auto& p : paths) {
    const Eigen::VectorXcd a = oracle::steering(kGeom.n_h, kGeom.n_v, p.aaod_rad, p.eaod_rad);
    Eigen::VectorXcd f(kGeom.n_c);
    for (int k = 0; k < kGeom.n_c; ++k) f(k) = std::polar(1.0, -2 * oracle::kPi * k * kGeom.subcarrier_spacing_hz() * p.delay_s);
    resp.push_back(p.gain * a * f.transpose());
  }
  // Gram form: each assignment costs O(n^2) scalar terms
  const auto nc = static_cast<Index>(clusters.size());
  Eigen::MatrixXcd cross(nc, n);
  Eigen::MatrixXcd gram(n, n);
  for (Index i = 0; i < n; ++i) {
    const auto& ai = resp[static_cast<std::size_t>(i)];
    for (Index l = 0; l < nc; ++l) cross(l, i) = ai.cwiseProduct(clusters[static_cast<std::size_t>(l)].conjugate()).sum();
    for (Index k = 0; k < n; ++k) gram(i, k) = ai.cwiseProduct(resp[static_cast<std::size_t>(k)].conjugate()).sum();
  }
  double energy = 0;
  for (const auto& c : clusters) energy += c.squaredNorm();
  long total = 1;
  for (int i = 0; i < n; ++i) total *= base;
  std::vector<int> label(static_cast<std::size_t>(n));
  double best = std::numeric_limits<double>::infinity();
  for (long code = 0; code < total; ++code) {
    long c = code;
    for (auto& l : label) {
      l = static_cast<int>(c % base) - 1;
      c /= base;
    }
    double e = energy;
    for (int i = 0; i < n; ++i) {
      const int l = label[static_cast<std::size_t>(i)];
      if (l < 0) continue;
      e -= 2 * cross(l, i).real();
      for (int k = 0; k < n; ++k) {
        if (label[static_cast<std::size_t>(k)] == l) e += gram(i, k).real();
      }
    }
    best = std::min(best, e / h.squaredNorm());
  }
  return best;
}

Outcome nmde_bound() {
  EnvironmentConfig cfg;
  cfg.seed = 505;
  int active = 0, violations = 0;
  double worst = -std::numeric_limits<double>::infinity();
  for (const auto& s : sample_environment(cfg, 1000, kGeom)) {
    const auto est = estimate_rank_hybrid<double>(s.h, 0.99, 8);
    if (est.r_final != est.r_threshold) continue;
    ++active;
    const double tail = oracle::tail_energy(oracle::singular_values(s.h), est.r_final) / s.h.squaredNorm();
    const double db = oracle::db10(std::max(tail, 1e-300));
    worst = std::max(worst, db);
    if (db > -20.0) ++violations;
  }

  EnvironmentConfig small;
  small.cluster_count_range = {1, 4};
  small.paths_per_cluster = 2;
  small.aod_spread_rad = 3 * kDeg;
  small.delay_spread_s = 20e-9;
  small.seed = 506;
  int instances = 0, greedy_bounds = 0, oracle_equal = 0;
  for (const auto& s : sample_environment(small, 200, kGeom)) {
    const int r = estimate_rank_hybrid<double>(s.h).r_final;
    std::vector<Eigen::MatrixXcd> cl;
    for (const auto& c : svd_decouple(s.h, r)) cl.push_back(c.matrix());
    const auto greedy = ub_npae(s.h, cl, s.paths, kGeom, PartitionSearch::kGreedy).value.linear;
    const auto exact = ub_npae(s.h, cl, s.paths, kGeom, PartitionSearch::kExhaustive).value.linear;
    const double brute = brute_force_npae(s.h, cl, *s.paths);
    ++instances;
    if (greedy >= exact * (1 - 1e-12)) ++greedy_bounds;
    if (std::abs(exact - brute) <= 1e-9 * std::max(brute, 1e-12)) ++oracle_equal;
  }
  const bool ok = active > 0 && violations == 0 && greedy_bounds == instances && oracle_equal == instances;
  return {ok, fmt("threshold-active %d/1000, worst NMDE %.2f dB, violations %d; UB-NPAE greedy>=exhaustive %d/%d, "
                  "exhaustive=oracle %d/%d",
                  active, worst, violations, greedy_bounds, instances, oracle_equal, instances)};
}

// Three clusters far apart in angle and delay, 3 dB power steps.
Eigen::MatrixXcd separated_clusters(std::mt19937_64& rng) {
  std::normal_distribution<double> n01;
  std::uniform_real_distribution<double> jitter(-1.0, 1.0);
  std::vector<PathComponent> paths;
  const double centers_deg[] = {-40.0, 0.0, 40.0};
  for (int l = 0; l < 3; ++l) {
    const double aaod = (centers_deg[l] + 5 * jitter(rng)) * kDeg;
    const double eaod = (90.0 + 5 * jitter(rng)) * kDeg;
    const double delay = (0.2 + 0.45 * l) * 1e-6 + 20e-9 * jitter(rng);
    std::vector<std::complex<double>> g(20);
    double pw = 0;
    for (auto& x : g) {
      x = {n01(rng), n01(rng)};
      pw += std::norm(x);
    }
    const double scale = std::sqrt(std::pow(0.5, l) / pw);
    for (int i = 0; i < 20; ++i) {
      PathComponent p;
      p.gain = g[static_cast<std::size_t>(i)] * scale;
      p.aaod_rad = aaod + 2 * kDeg * n01(rng);
      p.eaod_rad = eaod + 2 * kDeg * n01(rng);
      p.delay_s = delay + 4.7e-9 * n01(rng);
      p.cluster_id = static_cast<std::uint32_t>(l);
      paths.push_back(p);
    }
  }
  return synthesize_channel(kGeom, std::span<const PathComponent>(paths));
}

Outcome mdl_robustness() {
  const auto t0 = std::chrono::steady_clock::now();
  auto rng = oracle::engine(606);
  int three = 0, zero = 0;
  for (int i = 0; i < 200; ++i) {
    const auto h = separated_clusters(rng);
    const auto noisy = add_estimation_noise(h, 10.0, 6000 + static_cast<std::uint64_t>(i));
    if (estimate_rank_mdl(oracle::singular_values(noisy), 32, 32) == 3) ++three;
    const auto w = oracle::random_complex(32, 32, rng);
    if (estimate_rank_mdl(oracle::singular_values(w), 32, 32) == 0) ++zero;
  }
  const double dt = seconds_since(t0);
  return {three >= 180 && zero >= 190 && dt <= 30.0,
          fmt("R1=3 in %d/200 at 10 dB, R1=0 in %d/200 on noise, %.1f s", three, zero, dt)};
}

Outcome hybrid_shape() {
  NoiseSweepConfig cfg;
  cfg.seed = 707;
  cfg.env.seed = 707;
  const auto rep = run_noise_sweep(cfg);
  bool monotone = true;
  double prev = 0;
  std::string curve;
  for (const auto& p : rep.points) {
    const double r = p.criteria.at(RankCriterion::kHybrid).mean_r_hat;
    monotone = monotone && r >= prev;
    prev = r;
    curve += fmt("%g dB:%.3f ", p.snr_db, r);
  }

  // pointwise check over the same samples and noise draws
  int pointwise_violations = 0;
  const auto samples = sample_environment(cfg.env, cfg.samples, cfg.geometry);
  for (std::size_t k = 0; k < cfg.snr_db.size(); ++k) {
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const auto noisy = add_estimation_noise(samples[i].h, cfg.snr_db[k], 9000 + 1000 * k + i);
      const auto est = estimate_rank_hybrid<double>(noisy, cfg.eta, cfg.r_max);
      if (est.r_final > criterion_rank(est, RankCriterion::kMdl) ||
          est.r_final > criterion_rank(est, RankCriterion::kThreshold)) {
        ++pointwise_violations;
      }
    }
  }
  return {monotone && pointwise_violations == 0,
          fmt("hybrid mean R: %s; pointwise violations %d", curve.c_str(), pointwise_violations)};
}

Outcome frame_arithmetic() {
  ArrayGeometry g{8, 4, 32, 10e6};
  QuantizerSpec q;
  const auto layout = FrameLayout::clustered(g, CodebookConfig{}, 20, q, 8);
  const bool arith = layout.q_m() == 15 && layout.bits_for(3) == 408;
  auto rng = oracle::engine(808);
  std::uniform_int_distribution<int> rd(1, 8), h(0, 15), v(0, 7), d(0, 63), t(0, 3);
  std::uniform_int_distribution<std::uint64_t> lvl(0, 63);
  int ok = 0;
  for (int i = 0; i < 1000; ++i) {
    std::vector<ClusterRecord> recs(static_cast<std::size_t>(rd(rng)));
    for (auto& r : recs) {
      r.meta = {h(rng), v(rng), d(rng), t(rng)};
      r.levels.resize(20);
      for (auto& x : r.levels) x = lvl(rng);
    }
    const auto frame = make_frame(recs, layout);
    const auto bits = pack_frame(frame, layout);
    const auto back = parse_frame(bits, layout);
    if (back == frame && pack_frame(back, layout) == bits && bits.size() == layout.bits_for(frame.r_hat)) ++ok;
  }
  return {arith && ok == 1000, fmt("q_m=%d total=%zu, round-trip %d/1000", layout.q_m(), layout.bits_for(3), ok)};
}

Outcome generalization() {
  const auto t0 = std::chrono::steady_clock::now();
  BenchmarkConfig cfg;
  EnvironmentConfig west;
  west.id = "west";
  west.seed = 1;
  west.cluster_count_range = {2, 4};
  west.aaod_sector_rad = {-60 * kDeg, -10 * kDeg};
  EnvironmentConfig east = west;
  east.id = "east";
  east.seed = 2;
  east.aaod_sector_rad = {10 * kDeg, 60 * kDeg};
  cfg.train_envs = {west};
  cfg.test_envs = {east};
  const auto rep = run_generalization_benchmark(cfg);
  const double dt = seconds_since(t0);
  const auto& eg = rep.outcome(VariantKind::kEgCsiNet);
  const auto& wo = rep.outcome(VariantKind::kEgWithoutMcd);
  const auto& va = rep.outcome(VariantKind::kVanillaAe);
  const bool ok = eg.test_nmse.db() <= va.test_nmse.db() - 2.0 && eg.test_nmse.db() <= wo.test_nmse.db() && dt <= 1800;
  return {ok, fmt("test NMSE EG %.2f / w/o-MCD %.2f / vanilla %.2f dB at %.1f / %.1f / %.1f bits, %.0f s",
                  eg.test_nmse.db(), wo.test_nmse.db(), va.test_nmse.db(), eg.mean_test_bits, wo.mean_test_bits,
                  va.mean_test_bits, dt)};
}

Outcome pipeline_decomposition() {
  PipelineVariant v;
  v.compressor.variant = CompressorKind::kIdentity;
  v.compressor.codeword_dim = static_cast<int>(2 * kGeom.n_t() * kGeom.n_c);
  v.quantizer.enabled = false;
  const Pipeline p(v, kGeom, make_compressor(v.compressor));
  EnvironmentConfig cfg;
  cfg.seed = 1010;
  double worst = 0;
  const auto samples = sample_environment(cfg, 500, kGeom);
  for (const auto& s : samples) {
    const auto r = p.run(s.h);
    worst = std::max(worst, std::abs(r.nmse.linear - r.nmde.linear));
  }
  return {worst <= 1e-9, fmt("max |NMSE - NMDE| = %.2e over %zu samples", worst, samples.size())};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"single-cluster concentration", concentration_table},
      {"decoupling optimality", eym_optimality},
      {"alignment fixed point", alignment_fixed_point},
      {"exact inverse", exact_inverse},
      {"NMDE bound", nmde_bound},
      {"MDL robustness", mdl_robustness},
      {"hybrid criterion shape", hybrid_shape},
      {"frame arithmetic", frame_arithmetic},
      {"generalization direction", generalization},
      {"pipeline decomposition", pipeline_decomposition},
  };
  int failed = 0;
  std::vector<bool> selected(criteria.size(), argc < 2);
  for (int a = 1; a < argc; ++a) {
    const auto k = static_cast<std::size_t>(std::atoi(argv[a]));
    if (k >= 1 && k <= criteria.size()) selected[k - 1] = true;
  }
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!selected[i]) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::printf("criterion %zu %s: %s (%s)\n", i + 1, o.pass ? "PASS" : "FAIL", criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
