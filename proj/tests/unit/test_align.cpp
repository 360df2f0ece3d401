#include <doctest.h>

#include "csialign/align.hpp"
#include "csialign/channel.hpp"
#include "csialign/decouple.hpp"
#include "oracles.hpp"

using namespace csialign;

namespace {

const ArrayGeometry kGeom;
const CodebookConfig kCb;

Eigen::MatrixXcd on_grid_cluster(int k1, int k2, int tap, std::complex<double> gain) {
  PathComponent p;
  p.gain = gain;
  p.eaod_rad = std::acos(2.0 * k2 / kGeom.n_v);
  p.aaod_rad = std::asin(2.0 * k1 / kGeom.n_h / std::sin(p.eaod_rad));
  p.delay_s = tap / kGeom.bandwidth_hz;
  const std::vector<PathComponent> paths{p};
  return synthesize_channel(kGeom, std::span<const PathComponent>(paths));
}

// Angular energy of every oversampled (n1, n2), computed from the element formula.
Eigen::MatrixXd angular_energy(const Eigen::MatrixXcd& c, int size_h, int size_v) {
  Eigen::MatrixXd e(size_h, size_v);
  for (int n1 = 0; n1 < size_h; ++n1) {
    for (int n2 = 0; n2 < size_v; ++n2) {
      Eigen::VectorXcd w(c.rows());
      for (Index i = 0; i < c.rows(); ++i) {
        const double i1 = double(i / kGeom.n_v), i2 = double(i % kGeom.n_v);
        w(i) = std::polar(1.0, 2 * oracle::kPi * (n1 * i1 / size_h + n2 * i2 / size_v));
      }
      e(n1, n2) = (w.adjoint() * c).squaredNorm();
    }
  }
  return e;
}

std::vector<Eigen::MatrixXcd> random_clusters(std::size_t n, std::uint64_t seed) {
  EnvironmentConfig cfg;
  cfg.cluster_count_range = {1, 1};
  cfg.aaod_sector_rad = {-kPi<double> / 2, kPi<double> / 2};
  cfg.eaod_sector_rad = {kPi<double> / 6, 5 * kPi<double> / 6};
  cfg.seed = seed;
  std::vector<Eigen::MatrixXcd> out;
  for (auto& s : sample_environment(cfg, n, kGeom)) out.push_back(std::move(s.h));
  return out;
}

}  // namespace

TEST_CASE("codebook sizes, phases and the codeword group law") {
  const Codebooks<double> cb(kGeom, kCb);
  CHECK(cb.size_h() == 16);
  CHECK(cb.size_v() == 8);
  CHECK(cb.size_d() == 64);
  CHECK(cb.angular().cols() == 128);
  for (int t = 0; t < 4; ++t) CHECK(cb.phase(t) == doctest::Approx(t * kPi<double> / 2));
  for (int a = 0; a < 16; a += 3) {
    for (int b = 0; b < 8; b += 3) {
      for (int c = 0; c < 16; c += 5) {
        for (int d = 0; d < 8; d += 5) {
          const Eigen::VectorXcd prod = cb.angular_codeword(a, b).cwiseProduct(cb.angular_codeword(c, d));
          CHECK((prod - cb.angular_codeword((a + c) % 16, (b + d) % 8)).norm() < 1e-9);
        }
      }
    }
  }
  CHECK_THROWS_AS(Codebooks<double>(kGeom, CodebookConfig{0, 2, 2, 2}), Error);
}

TEST_CASE("angular peak of an on-grid cluster sits at twice its grid index") {
  const Codebooks<double> cb(kGeom, kCb);
  for (int k = 0; k < 4; ++k) {
    const auto c = on_grid_cluster(k, 0, 2, {0.3, 0.9});
    const auto e = angular_energy(c, 16, 8);
    Index r = 0, col = 0;
    e.maxCoeff(&r, &col);
    const auto [n1, n2] = search_angular_peak(c, cb);
    CHECK(n1 == 2 * k);
    CHECK(n2 == 0);
    CHECK(n1 == r);
    CHECK(n2 == col);
  }
  // negative bins wrap around the codebook
  const auto c = on_grid_cluster(-1, 1, 0, {1, 0});
  const auto [n1, n2] = search_angular_peak(c, cb);
  CHECK(n1 == 14);
  CHECK(n2 == 2);
}

TEST_CASE("angular search matches an exhaustive scan on off-grid clusters") {
  const Codebooks<double> cb(kGeom, kCb);
  for (const auto& c : random_clusters(20, 3)) {
    const auto e = angular_energy(c, 16, 8);
    const auto [n1, n2] = search_angular_peak(c, cb);
    CHECK(e(n1, n2) >= e.maxCoeff() * (1 - 1e-9));
  }
}

TEST_CASE("peak search is invariant to complex scaling") {
  const Codebooks<double> cb(kGeom, kCb);
  for (const auto& c : random_clusters(20, 4)) {
    const std::complex<double> z = std::polar(0.03, 2.1);
    CHECK(search_angular_peak<double>(z * c, cb) == search_angular_peak(c, cb));
    CHECK(search_delay_peak<double>(z * c, cb) == search_delay_peak(c, cb));
  }
  CHECK_THROWS_AS(search_angular_peak<double>(Eigen::MatrixXcd::Zero(32, 32), cb), Error);
  CHECK_THROWS_AS(search_delay_peak<double>(Eigen::MatrixXcd::Zero(32, 32), cb), Error);
}

TEST_CASE("delay peak positions") {
  const Codebooks<double> cb(kGeom, kCb);
  CHECK(search_delay_peak(on_grid_cluster(1, 0, 0, {1, 0}), cb) == 0);
  CHECK(search_delay_peak(on_grid_cluster(1, 0, 3, {1, 0}), cb) == 6);
  // exhaustive scan from the codeword formula
  const auto c = random_clusters(1, 9).front();
  Eigen::VectorXd e(64);
  for (int m = 0; m < 64; ++m) {
    Eigen::VectorXcd w(32);
    for (int k = 0; k < 32; ++k) w(k) = std::polar(1.0, 2 * oracle::kPi * m * k / 64.0);
    e(m) = (c * w).squaredNorm();
  }
  Index best = 0;
  e.maxCoeff(&best);
  CHECK(search_delay_peak(c, cb) == best);
}

TEST_CASE("phase adjustment matrix is unimodular") {
  const Codebooks<double> cb(kGeom, kCb);
  const auto s0 = phase_adjustment_matrix(AlignmentMetadata{0, 0, 0, 0}, cb);
  CHECK((s0 - Eigen::MatrixXcd::Ones(32, 32)).norm() < 1e-12);
  const auto s = phase_adjustment_matrix(AlignmentMetadata{5, 3, 17, 2}, cb);
  CHECK((s.cwiseAbs().array() - 1.0).abs().maxCoeff() < 1e-12);
  CHECK((s.conjugate().cwiseProduct(s) - Eigen::MatrixXcd::Ones(32, 32)).norm() < 1e-10);
  CHECK_THROWS_AS(phase_adjustment_matrix(AlignmentMetadata{16, 0, 0, 0}, cb), Error);
  CHECK_THROWS_AS(phase_adjustment_matrix(AlignmentMetadata{0, 0, 64, 0}, cb), Error);
  CHECK_THROWS_AS(phase_adjustment_matrix(AlignmentMetadata{0, 0, 0, 4}, cb), Error);
}

TEST_CASE("peak phase quantization") {
  CHECK(quantize_peak_phase(std::complex<double>(2.0, 0.0), 2) == 0);
  CHECK(quantize_peak_phase(std::polar(1.0, 0.8), 2) == 1);
  CHECK(quantize_peak_phase(std::polar(1.0, -0.1), 2) == 0);
  CHECK(quantize_peak_phase(std::polar(1.0, -1.5), 2) == 3);
  CHECK(quantize_peak_phase(std::polar(1.0, 3.0), 2) == 2);
  CHECK(quantize_peak_phase(std::polar(1.0, 0.2), 4) == 1);
  CHECK_THROWS_WITH_AS(quantize_peak_phase(std::complex<double>(0, 0), 2), "zero peak", Error);
  // circular distance by brute force over all levels
  auto rng = oracle::engine(13);
  std::uniform_real_distribution<double> u(-oracle::kPi, oracle::kPi);
  for (int i = 0; i < 500; ++i) {
    const double a = u(rng);
    const int t = quantize_peak_phase(std::polar(1.0, a), 3);
    double best = 10;
    for (int k = 0; k < 8; ++k) {
      const double d = std::abs(std::arg(std::polar(1.0, a - 2 * oracle::kPi * k / 8)));
      best = std::min(best, d);
    }
    CHECK(std::abs(std::arg(std::polar(1.0, a - 2 * oracle::kPi * t / 8))) <= best + 1e-12);
  }
}

TEST_CASE("an aligned on-grid cluster is a fixed point") {
  const auto c = on_grid_cluster(0, 0, 0, {0.8, 0.0});
  const Aligner<double> al(kGeom, kCb);
  const auto out = al.align(c);
  CHECK(out.meta == AlignmentMetadata{0, 0, 0, 0});
  CHECK((out.c_aln - oracle::angular_delay(c, kGeom.n_h, kGeom.n_v)).norm() < 1e-9 * c.norm());
}

TEST_CASE("alignment moves every peak to the origin and inverts exactly") {
  const Aligner<double> al(kGeom, kCb);
  for (const auto& c : random_clusters(1000, 7)) {
    const auto a = al.align(c);
    const Eigen::MatrixXcd spatial = al.transform().inverse(a.c_aln);
    const auto [n1, n2] = search_angular_peak(spatial, al.codebooks());
    CHECK(n1 == 0);
    CHECK(n2 == 0);
    CHECK(search_delay_peak(spatial, al.codebooks()) == 0);
    const auto p = peak_value(spatial, 0, 0, 0, al.codebooks());
    CHECK(std::abs(std::arg(p)) <= kPi<double> / 4 + 1e-9);
    CHECK(a.c_aln.norm() == doctest::Approx(c.norm()).epsilon(1e-10));
    CHECK((al.unalign(a.c_aln, a.meta) - c).norm() <= 1e-10 * c.norm());
  }
  // the aligned angular-delay matrix keeps its strongest row and column at 0
  const auto a = al.align(random_clusters(1, 8).front());
  Index r = 0, col = 0;
  a.c_aln.rowwise().squaredNorm().maxCoeff(&r);
  a.c_aln.colwise().squaredNorm().maxCoeff(&col);
  CHECK(r == 0);
  CHECK(col == 0);
}

TEST_CASE("unalignment is an isometry and reduces to the inverse transform") {
  const Aligner<double> al(kGeom, kCb);
  auto rng = oracle::engine(23);
  const auto c = random_clusters(1, 11).front();
  const auto a = al.align(c);
  const auto e = oracle::random_complex(32, 32, rng);
  const Eigen::MatrixXcd err = al.unalign(a.c_aln + e, a.meta) - c;
  CHECK(err.norm() == doctest::Approx(e.norm()).epsilon(1e-10));
  const auto x = oracle::random_complex(32, 32, rng);
  CHECK((unalign_cluster<double>(x, AlignmentMetadata{0, 0, 0, 0}, kGeom, kCb) -
         angular_delay_transform<double>(x, kGeom, TransformDirection::kInverse))
            .norm() < 1e-12 * x.norm());
  CHECK_THROWS_AS(al.unalign(x, AlignmentMetadata{0, 8, 0, 0}), Error);
  CHECK_THROWS_AS(al.align(Eigen::MatrixXcd::Zero(32, 32)), Error);
}

TEST_CASE("decoupled clusters align independently") {
  EnvironmentConfig cfg;
  cfg.cluster_count_range = {3, 3};
  cfg.seed = 14;
  const auto h = sample_environment(cfg, 1, kGeom).front().h;
  const Aligner<double> al(kGeom, kCb);
  Eigen::MatrixXcd sum = Eigen::MatrixXcd::Zero(32, 32);
  const auto clusters = svd_decouple(h, 3);
  for (const auto& cl : clusters) {
    const auto a = align_cluster<double>(cl.matrix(), kGeom, kCb);
    sum += al.unalign(a.c_aln, a.meta);
  }
  CHECK((sum - sum_clusters(clusters, 32, 32)).norm() < 1e-10 * h.norm());
}
