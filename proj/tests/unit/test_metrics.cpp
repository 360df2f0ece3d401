#include <doctest.h>

#include <nlohmann/json.hpp>

#include "csialign/align.hpp"
#include "csialign/channel.hpp"
#include "csialign/decouple.hpp"
#include "csialign/metrics.hpp"
#include "oracles.hpp"

using namespace csialign;

namespace {

constexpr double kDeg = kPi<double> / 180;

std::vector<Eigen::MatrixXcd> cluster_matrices(const Eigen::MatrixXcd& h, int r) {
  std::vector<Eigen::MatrixXcd> out;
  for (const auto& c : svd_decouple(h, r)) out.push_back(c.matrix());
  return out;
}

// Brute-force minimum of the partition objective over every assignment.
double brute_force_npae(const Eigen::MatrixXcd& h, const std::vector<Eigen::MatrixXcd>& clusters,
                        const std::vector<PathComponent>& paths, const ArrayGeometry& g) {
  const int n = static_cast<int>(paths.size());
  const int base = static_cast<int>(clusters.size()) + 1;
  std::vector<Eigen::MatrixXcd> resp;
  for (const auto& p : paths) {
    const std::vector<PathComponent> one{p};
    resp.push_back(synthesize_channel(g, std::span<const PathComponent>(one)));
  }
  long total = 1;
  for (int i = 0; i < n; ++i) total *= base;
  double best = std::numeric_limits<double>::infinity();
  for (long code = 0; code < total; ++code) {
    std::vector<Eigen::MatrixXcd> acc = clusters;
    long c = code;
    for (int i = 0; i < n; ++i) {
      const int l = static_cast<int>(c % base) - 1;
      c /= base;
      if (l >= 0) acc[static_cast<std::size_t>(l)] -= resp[static_cast<std::size_t>(i)];
    }
    double e = 0;
    for (const auto& m : acc) e += m.squaredNorm();
    best = std::min(best, e / h.squaredNorm());
  }
  return best;
}

}  // namespace

TEST_CASE("NMSE values and the exact-zero sentinel") {
  auto rng = oracle::engine(1);
  const auto h = oracle::random_complex(8, 8, rng);
  const auto same = nmse(h, h);
  CHECK(same.exact_zero());
  CHECK(std::isinf(same.db()));
  CHECK(format_db(same) == kNegInfToken);
  CHECK(nmse(Eigen::MatrixXcd::Zero(8, 8), h).db() == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(nmse(1.1 * h, h).db() == doctest::Approx(-20.0).epsilon(1e-9));
  CHECK_THROWS_AS(nmse(h, Eigen::MatrixXcd::Zero(8, 8)), Error);
  CHECK_THROWS_AS(nmse(h, Eigen::MatrixXcd::Zero(8, 7)), Error);
  const auto d = Decibels::from_db(-13.0);
  CHECK(d.db() == doctest::Approx(-13.0));
  CHECK(std::abs(d.linear - std::pow(10.0, -1.3)) <= 1e-9 * d.linear);
}

TEST_CASE("NMDE equals the singular tail") {
  auto rng = oracle::engine(2);
  const auto h = oracle::random_complex(32, 32, rng);
  const auto sv = oracle::singular_values(h);
  for (int r : {1, 3, 8, 20}) {
    const double expect = oracle::tail_energy(sv, r) / sv.squaredNorm();
    const auto cl = cluster_matrices(h, r);
    CHECK(nmde(h, cl).linear == doctest::Approx(expect).epsilon(1e-9));
    CHECK(nmde_from_singular_values(sv, r).linear == doctest::Approx(expect).epsilon(1e-12));
  }
  CHECK(nmde_from_singular_values(sv, 32).exact_zero());
  CHECK_THROWS_AS(nmde(Eigen::MatrixXcd::Zero(4, 4), std::span<const Eigen::MatrixXcd>{}), Error);
}

TEST_CASE("NMDE of threshold-limited samples stays below the energy bound") {
  const ArrayGeometry g;
  EnvironmentConfig cfg;
  cfg.seed = 3;
  double acc = 0;
  const auto samples = sample_environment(cfg, 300, g);
  for (const auto& s : samples) {
    const auto est = estimate_rank_hybrid<double>(s.h);
    const auto v = nmde(s.h, cluster_matrices(s.h, est.r_final));
    if (est.r_final == est.r_threshold) CHECK(v.db() <= oracle::db10(1 - 0.99) + 1e-9);
    acc += v.linear;
  }
  CHECK(oracle::db10(acc / samples.size()) <= -20.0);
}

TEST_CASE("UB-NPAE of a single on-grid path is negligible") {
  const ArrayGeometry g;
  PathComponent p;
  p.aaod_rad = std::asin(0.5);
  p.delay_s = 4 / g.bandwidth_hz;
  p.gain = {0.4, -1.2};
  const std::vector<PathComponent> paths{p};
  const auto h = synthesize_channel(g, std::span<const PathComponent>(paths));
  const auto cl = cluster_matrices(h, 1);
  for (auto mode : {PartitionSearch::kGreedy, PartitionSearch::kExhaustive}) {
    const auto r = ub_npae(h, cl, paths, g, mode);
    CHECK((r.value.exact_zero() || r.value.db() <= -80.0));
    CHECK(r.assignment == std::vector<int>{0});
  }
}

TEST_CASE("UB-NPAE greedy search never beats the exhaustive oracle") {
  const ArrayGeometry g;
  EnvironmentConfig cfg;
  cfg.cluster_count_range = {1, 3};
  cfg.paths_per_cluster = 2;
  cfg.aod_spread_rad = 3 * kDeg;
  cfg.delay_spread_s = 20e-9;
  cfg.seed = 4;
  for (const auto& s : sample_environment(cfg, 100, g)) {
    const int r = std::min(3, estimate_rank_hybrid<double>(s.h).r_final);
    const auto cl = cluster_matrices(s.h, r);
    const auto greedy = ub_npae(s.h, cl, s.paths, g, PartitionSearch::kGreedy);
    const auto exact = ub_npae(s.h, cl, s.paths, g, PartitionSearch::kExhaustive);
    CHECK(greedy.value.linear >= exact.value.linear * (1 - 1e-12));
    CHECK(exact.value.linear == doctest::Approx(brute_force_npae(s.h, cl, *s.paths, g)).epsilon(1e-9));
    CHECK(partition_error(s.h, cl, *s.paths, g, exact.assignment).linear ==
          doctest::Approx(exact.value.linear).epsilon(1e-9));
  }
}

TEST_CASE("UB-NPAE input validation") {
  const ArrayGeometry g;
  EnvironmentConfig cfg;
  cfg.seed = 5;
  auto s = sample_environment(cfg, 1, g).front();
  const auto cl = cluster_matrices(s.h, 1);
  CHECK_THROWS_WITH_AS(ub_npae(s.h, cl, std::nullopt, g), "ub_npae: missing path table", Error);
  CHECK_THROWS_AS(ub_npae(s.h, cl, s.paths, g, PartitionSearch::kExhaustive), Error);
  const std::vector<int> wrong(3, 0);
  CHECK_THROWS_AS(partition_error(s.h, cl, *s.paths, g, wrong), Error);
}

TEST_CASE("UB-NPAE of well-separated three-cluster channels") {
  const ArrayGeometry g;
  auto rng = oracle::engine(6);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> unit(0.0, 1.0);
  std::vector<double> values;
  for (int trial = 0; trial < 200; ++trial) {
    // horizontal bins -3, 0, 3 and delay taps 2, 7, 12, each jittered by up to half a bin
    std::vector<PathComponent> paths;
    const std::array<int, 3> perm{0, 1, 2};
    for (int l = 0; l < 3; ++l) {
      const double x = -3.0 + 3.0 * l + (unif(rng) - 0.5);
      const double d = 2.0 + 5.0 * perm[static_cast<std::size_t>((l + trial) % 3)] + (unif(rng) - 0.5);
      const double power = std::pow(10.0, -0.3 * l);
      for (int i = 0; i < 20; ++i) {
        PathComponent p;
        p.cluster_id = static_cast<std::uint32_t>(l);
        p.eaod_rad = kPi<double> / 2 + 2 * kDeg * unit(rng);
        p.aaod_rad = std::asin(2 * x / g.n_h) + 2 * kDeg * unit(rng);
        p.delay_s = d / g.bandwidth_hz + 4.7e-9 * unit(rng);
        p.gain = std::complex<double>(unit(rng), unit(rng));
        paths.push_back(p);
      }
      // exact 3 dB steps between cluster powers
      const std::vector<PathComponent> own(paths.end() - 20, paths.end());
      const double e = synthesize_channel(g, std::span<const PathComponent>(own)).squaredNorm();
      for (auto it = paths.end() - 20; it != paths.end(); ++it) it->gain *= std::sqrt(power * 1024 / e);
    }
    const auto h = synthesize_channel(g, std::span<const PathComponent>(paths));
    const auto r = estimate_rank_hybrid<double>(h).r_final;
    const std::optional<std::vector<PathComponent>> table(paths);
    values.push_back(ub_npae(h, cluster_matrices(h, r), table, g).value.linear);
  }
  CHECK(oracle::db10(oracle::quantile(values, 0.9)) <= -6.0);
}

TEST_CASE("sliced Wasserstein distance properties") {
  auto rng = oracle::engine(7);
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::MatrixXd a(3, 400);
  for (Index j = 0; j < a.cols(); ++j)
    for (Index i = 0; i < 3; ++i) a(i, j) = n(rng);
  CHECK(wasserstein1_sliced(a, a) < 1e-12);

  Eigen::Vector3d c(0.6, -0.8, 1.5);
  const Eigen::MatrixXd b = a.colwise() + c;
  // in 3-D the mean of |<u, c>| over uniform unit directions is ||c|| / 2
  const double w = wasserstein1_sliced(a, b, 20000, 3);
  CHECK(w == doctest::Approx(c.norm() / 2).epsilon(0.03));
  CHECK(wasserstein1_sliced(b, a, 64, 9) == doctest::Approx(wasserstein1_sliced(a, b, 64, 9)).epsilon(1e-12));

  double prev = 0;
  for (double k : {0.5, 1.0, 2.0, 4.0}) {
    const Eigen::MatrixXd shifted = a.colwise() + Eigen::Vector3d(k * c);
    const double v = wasserstein1_sliced(a, shifted, 64, 5);
    CHECK(v > prev);
    prev = v;
  }
  CHECK_THROWS_AS(wasserstein1_sliced(a, Eigen::MatrixXd(3, 0)), Error);
  CHECK_THROWS_AS(wasserstein1_sliced(a, Eigen::MatrixXd::Zero(4, 10)), Error);
}

TEST_CASE("aligned clusters are closer across environments than raw channels") {
  const ArrayGeometry g;
  EnvironmentConfig west;
  west.aaod_sector_rad = {-60 * kDeg, -10 * kDeg};
  west.seed = 8;
  EnvironmentConfig east = west;
  east.aaod_sector_rad = {10 * kDeg, 60 * kDeg};
  east.seed = 9;
  const AngularDelayTransform<double> t(g);
  const Aligner<double> al(g, CodebookConfig{});
  auto features = [&](const EnvironmentConfig& cfg, bool aligned) {
    std::vector<Eigen::MatrixXcd> mats;
    for (const auto& s : sample_environment(cfg, 300, g)) {
      if (aligned) {
        mats.push_back(normalize_sample<double>(al.align(svd_decouple(s.h, 1)[0].matrix()).c_aln));
      } else {
        mats.push_back(t.forward(s.h));
      }
    }
    return feature_matrix(mats);
  };
  const double raw = wasserstein1_sliced(features(west, false), features(east, false));
  const double aligned = wasserstein1_sliced(features(west, true), features(east, true));
  CHECK(aligned < raw);
}

TEST_CASE("metric reports aggregate in the linear domain and serialize the sentinel") {
  MetricReport rep;
  rep.variant = "eg-csinet";
  rep.samples.push_back({0, "a", 2, 300, Decibels{0.01}, Decibels{0.0}, Decibels{0.2}});
  rep.samples.push_back({1, "a", 3, 400, Decibels{0.03}, Decibels{0.001}, std::nullopt});
  CHECK(rep.mean_nmse().linear == doctest::Approx(0.02));
  CHECK(rep.mean_nmde().linear == doctest::Approx(0.0005));
  CHECK(rep.mean_bits() == doctest::Approx(350.0));
  CHECK(rep.mean_r_hat() == doctest::Approx(2.5));
  CHECK(rep.ub_npae_percentile(0.9)->linear == doctest::Approx(0.2));

  const auto csv = rep.to_csv();
  CHECK(csv.find("NEG_INF") != std::string::npos);
  CHECK(csv.find("-inf") == std::string::npos);
  const auto j = nlohmann::json::parse(rep.to_json());
  CHECK(j["samples"][0]["nmde"]["exact_zero"] == true);
  CHECK(j["samples"][0]["nmde"]["db"].is_null());
  CHECK(j["samples"][1]["ub_npae"].is_null());
  CHECK(j["aggregate"]["mean_nmse"]["db"].get<double>() == doctest::Approx(oracle::db10(0.02)));
  CHECK_THROWS_AS(MetricReport{}.mean_nmse(), Error);
}
