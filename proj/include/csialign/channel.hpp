#ifndef CSIALIGN_CHANNEL_HPP
#define CSIALIGN_CHANNEL_HPP

// Cluster-based spatial-frequency channel model for a UPA base station and a
// single-antenna user, together with the unitary angular-delay transform.
//
// Antenna n of the N_T = N_h * N_v array maps to (n1, n2) = (n / N_v, n % N_v),
// so array-domain vectors are Kronecker products horizontal (x) vertical.

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "csialign/types.hpp"

namespace csialign {

struct ArrayGeometry {
  int n_h = 8;
  int n_v = 4;
  int n_c = 32;
  double bandwidth_hz = 10e6;

  Index n_t() const { return Index{n_h} * n_v; }
  double subcarrier_spacing_hz() const { return bandwidth_hz / n_c; }

  void validate() const;
};

/// One physical propagation path.
struct PathComponent {
  std::complex<double> gain{1.0, 0.0};
  double aaod_rad = 0.0;  // azimuth AoD, |.| <= pi
  double eaod_rad = kPi<double> / 2;  // elevation AoD in [0, pi]
  double delay_s = 0.0;
  std::uint32_t cluster_id = 0;

  bool operator==(const PathComponent&) const = default;
};

struct ClusterSpec {
  double center_aaod_rad = 0.0;
  double center_eaod_rad = kPi<double> / 2;
  double center_delay_s = 0.0;
  double aod_spread_rad = 0.0;
  double delay_spread_s = 0.0;
  int n_paths = 1;
  double power = 1.0;

  void validate() const;
};

/// Parameter distribution of one synthetic propagation environment.
struct EnvironmentConfig {
  std::string id = "env";
  std::pair<int, int> cluster_count_range{1, 4};
  std::pair<double, double> aaod_sector_rad{-kPi<double> / 3, kPi<double> / 3};
  std::pair<double, double> eaod_sector_rad{kPi<double> / 3, 2 * kPi<double> / 3};
  std::pair<double, double> delay_range_s{0.0, 1.5e-6};
  double aod_spread_rad = 2.0 * kPi<double> / 180;
  double delay_spread_s = 4.7e-9;
  int paths_per_cluster = 20;
  double power_decay_db_per_cluster = 3.0;
  std::uint64_t seed = 1;

  void validate() const;
};

struct ChannelSample {
  Eigen::MatrixXcd h;  // N_T x N_C, spatial-frequency domain
  std::string env_id;
  std::optional<std::vector<PathComponent>> paths;  // ground truth
};

/// Grid residues of one path relative to its cluster's peak bin.
struct GridResidue {
  double h = 0.0;
  double v = 0.0;
  double d = 0.0;
};

struct LeakageProfile {
  int peak_h = 0;
  int peak_v = 0;
  int peak_d = 0;
  /// Cluster center minus peak bin (shared by every path of the cluster).
  GridResidue center_misalignment;
  /// Per-path residue = center_misalignment + intra-cluster spread term.
  std::vector<GridResidue> residues;
  double offpeak_power_fraction = 0.0;
  /// Angular-delay power summed over (n2, m), indexed by horizontal bin n1.
  Eigen::VectorXd horizontal_power;

  GridResidue spread(std::size_t path) const {
    const auto& r = residues.at(path);
    return {r.h - center_misalignment.h, r.v - center_misalignment.v,
            r.d - center_misalignment.d};
  }
};

/// Round half away from zero.
inline long round_half_away(double x) { return std::lround(x); }

/// a(phi, theta) = a_h(phi, theta) (x) a_v(theta) for a half-wavelength UPA.
/// The horizontal phase step is pi sin(phi) sin(theta), the vertical one pi cos(theta).
template <typename Scalar = double>
CVector<Scalar> steering_vector(const ArrayGeometry& geom, Scalar aaod, Scalar eaod) {
  const Scalar step_h = kPi<Scalar> * std::sin(aaod) * std::sin(eaod);
  const Scalar step_v = kPi<Scalar> * std::cos(eaod);
  CVector<Scalar> a(geom.n_t());
  for (int i1 = 0; i1 < geom.n_h; ++i1) {
    const auto ah = cis<Scalar>(step_h * i1);
    for (int i2 = 0; i2 < geom.n_v; ++i2) {
      a(Index{i1} * geom.n_v + i2) = ah * cis<Scalar>(step_v * i2);
    }
  }
  return a;
}

/// b(tau) with entry k equal to e^{j 2 pi k df tau}.
template <typename Scalar = double>
CVector<Scalar> freq_response(const ArrayGeometry& geom, Scalar delay_s) {
  const Scalar step = 2 * kPi<Scalar> * static_cast<Scalar>(geom.subcarrier_spacing_hz()) * delay_s;
  CVector<Scalar> b(geom.n_c);
  for (int k = 0; k < geom.n_c; ++k) b(k) = cis<Scalar>(step * k);
  return b;
}

/// H = sum over paths of gain * a(phi, theta) * b(tau)^H.
template <typename Scalar = double>
CMatrix<Scalar> synthesize_channel(const ArrayGeometry& geom, std::span<const PathComponent> paths) {
  if (paths.empty()) throw Error("no paths");
  CMatrix<Scalar> h = CMatrix<Scalar>::Zero(geom.n_t(), geom.n_c);
  for (const auto& p : paths) {
    const std::complex<Scalar> g(static_cast<Scalar>(p.gain.real()), static_cast<Scalar>(p.gain.imag()));
    const auto a = steering_vector<Scalar>(geom, static_cast<Scalar>(p.aaod_rad),
                                           static_cast<Scalar>(p.eaod_rad));
    const auto b = freq_response<Scalar>(geom, static_cast<Scalar>(p.delay_s));
    h.noalias() += g * a * b.adjoint();
  }
  return h;
}

/// Unitary DFT matrix, F[k, i] = e^{-j 2 pi k i / n} / sqrt(n).
template <typename Scalar = double>
CMatrix<Scalar> dft_matrix(Index n) {
  CMatrix<Scalar> f(n, n);
  const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(n));
  for (Index k = 0; k < n; ++k) {
    for (Index i = 0; i < n; ++i) {
      const Index r = (k * i) % n;
      f(k, i) = scale * cis<Scalar>(-2 * kPi<Scalar> * static_cast<Scalar>(r) / static_cast<Scalar>(n));
    }
  }
  return f;
}

template <typename Derived1, typename Derived2>
auto kron(const Eigen::MatrixBase<Derived1>& a, const Eigen::MatrixBase<Derived2>& b) {
  using Scalar = typename Derived1::Scalar;
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Index i = 0; i < a.rows(); ++i) {
    for (Index j = 0; j < a.cols(); ++j) {
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    }
  }
  return out;
}

enum class TransformDirection { kForward, kInverse };

/// Angular-delay representation X = F_a H F_d^H with F_a = F_h (x) F_v.
/// Holds the DFT factors so repeated transforms do not rebuild them.
template <typename Scalar = double>
class AngularDelayTransform {
 public:
  explicit AngularDelayTransform(const ArrayGeometry& geom)
      : f_a_(kron(dft_matrix<Scalar>(geom.n_h), dft_matrix<Scalar>(geom.n_v))),
        f_d_(dft_matrix<Scalar>(geom.n_c)) {}

  Index rows() const { return f_a_.rows(); }
  Index cols() const { return f_d_.rows(); }

  CMatrix<Scalar> forward(const CMatrix<Scalar>& h) const {
    check(h);
    return f_a_ * h * f_d_.adjoint();
  }

  CMatrix<Scalar> inverse(const CMatrix<Scalar>& x) const {
    check(x);
    return f_a_.adjoint() * x * f_d_;
  }

  CMatrix<Scalar> apply(const CMatrix<Scalar>& m, TransformDirection dir) const {
    return dir == TransformDirection::kForward ? forward(m) : inverse(m);
  }

  const CMatrix<Scalar>& angular_basis() const { return f_a_; }
  const CMatrix<Scalar>& delay_basis() const { return f_d_; }

 private:
  void check(const CMatrix<Scalar>& m) const {
    if (m.rows() != rows() || m.cols() != cols()) {
      throw Error("shape mismatch: expected " + std::to_string(rows()) + "x" + std::to_string(cols()) +
                  ", got " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
    }
  }

  CMatrix<Scalar> f_a_;
  CMatrix<Scalar> f_d_;
};

template <typename Scalar = double>
CMatrix<Scalar> angular_delay_transform(const CMatrix<Scalar>& h, const ArrayGeometry& geom,
                                        TransformDirection dir) {
  return AngularDelayTransform<Scalar>(geom).apply(h, dir);
}

/// D_N(x) = sin(pi x) / (sqrt(N) sin(pi x / N)) e^{j (N-1) pi x / N}.
/// Near the removable singularities (x a multiple of N) the defining sum
/// (1/sqrt(N)) sum_n e^{j 2 pi n x / N} is evaluated instead.
template <typename Scalar = double>
std::complex<Scalar> dirichlet_kernel(int n, Scalar x) {
  if (n < 1) throw Error("dirichlet_kernel: n must be >= 1");
  const Scalar nn = static_cast<Scalar>(n);
  const Scalar den = std::sin(kPi<Scalar> * x / nn);
  if (std::abs(den) < Scalar(1e-9)) {
    std::complex<Scalar> acc(0, 0);
    for (int i = 0; i < n; ++i) acc += cis<Scalar>(2 * kPi<Scalar> * i * x / nn);
    return acc / std::sqrt(nn);
  }
  const Scalar mag = std::sin(kPi<Scalar> * x) / (std::sqrt(nn) * den);
  return mag * cis<Scalar>((nn - 1) / nn * kPi<Scalar> * x);
}

/// sqrt(N_T N_C) H / ||H||_F.
template <typename Scalar = double>
CMatrix<Scalar> normalize_sample(const CMatrix<Scalar>& h) {
  const Scalar norm = h.norm();
  if (!(norm > 0) || !std::isfinite(norm)) throw Error("degenerate sample");
  return h * (std::sqrt(static_cast<Scalar>(h.size())) / norm);
}

/// Peak bins, residues and off-peak power of one cluster. The cluster center is
/// the power-weighted mean of the paths' direction cosines and delays.
LeakageProfile leakage_profile(const ArrayGeometry& geom, std::span<const PathComponent> cluster_paths);

/// Draws `n_samples` normalized channels from `cfg`. Sample i depends only on
/// (cfg.seed, i), so the result is reproducible and order-independent.
std::vector<ChannelSample> sample_environment(const EnvironmentConfig& cfg, std::size_t n_samples,
                                              const ArrayGeometry& geom);

/// Draws the paths of one sample (ground truth before normalization).
std::vector<PathComponent> draw_paths(const EnvironmentConfig& cfg, std::uint64_t sample_index);

/// H + N with circular Gaussian N scaled so that ||H||^2 / E||N||^2 = 10^{snr_db/10}.
/// snr_db = +inf disables the noise.
Eigen::MatrixXcd add_estimation_noise(const Eigen::MatrixXcd& h, double snr_db, std::uint64_t seed);

inline constexpr double kNoiseDisabled = std::numeric_limits<double>::infinity();

}  // namespace csialign

#endif  // CSIALIGN_CHANNEL_HPP
