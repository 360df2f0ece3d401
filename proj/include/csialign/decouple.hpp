#ifndef CSIALIGN_DECOUPLE_HPP
#define CSIALIGN_DECOUPLE_HPP

// Multi-cluster decoupling by truncated SVD, cluster-count estimation and
// cluster-level diagnostics.

#include <cmath>
#include <vector>

#include <Eigen/SVD>

#include "csialign/types.hpp"

namespace csialign {

inline constexpr double kDefaultEta = 0.99;
inline constexpr int kDefaultRMax = 8;

/// One rank-1 term sigma * u * v^H. The largest-magnitude entry of u is real
/// and nonnegative (first such entry on ties).
template <typename Scalar = double>
struct DecoupledCluster {
  Scalar sigma = 0;
  CVector<Scalar> u;
  CVector<Scalar> v;

  CMatrix<Scalar> matrix() const { return sigma * u * v.adjoint(); }
};

struct RankEstimate {
  int r_mdl = 0;
  int r_threshold = 0;
  int r_final = 1;
  int r_max = kDefaultRMax;
};

namespace detail {

template <typename Scalar>
Eigen::JacobiSVD<CMatrix<Scalar>> thin_svd(const CMatrix<Scalar>& h) {
  return Eigen::JacobiSVD<CMatrix<Scalar>>(h, Eigen::ComputeThinU | Eigen::ComputeThinV);
}

template <typename Scalar>
void canonicalize_phase(CVector<Scalar>& u, CVector<Scalar>& v) {
  Index arg = 0;
  Scalar best = -1;
  for (Index i = 0; i < u.size(); ++i) {
    const Scalar m = std::abs(u(i));
    if (m > best) {
      best = m;
      arg = i;
    }
  }
  if (!(best > 0)) return;
  const std::complex<Scalar> rot = std::conj(u(arg)) / best;
  u *= rot;
  v *= rot;  // sigma u v^H is unchanged: (rot u)(rot v)^H = |rot|^2 u v^H
  u(arg) = std::complex<Scalar>(std::abs(u(arg)), 0);
}

}  // namespace detail

/// Singular values of h in descending order.
template <typename Scalar = double>
RVector<Scalar> singular_values(const CMatrix<Scalar>& h) {
  return Eigen::JacobiSVD<CMatrix<Scalar>>(h).singularValues();
}

/// The r leading SVD triplets of h, i.e. the Frobenius-optimal rank-r
/// approximation split into rank-1 dual-orthogonal clusters.
template <typename Scalar = double>
std::vector<DecoupledCluster<Scalar>> svd_decouple(const CMatrix<Scalar>& h, int r) {
  const Index p = std::min(h.rows(), h.cols());
  if (r < 1 || r > p) {
    throw Error("svd_decouple: r=" + std::to_string(r) + " outside [1, " + std::to_string(p) + "]");
  }
  const auto svd = detail::thin_svd(h);
  std::vector<DecoupledCluster<Scalar>> out(static_cast<std::size_t>(r));
  for (int l = 0; l < r; ++l) {
    auto& c = out[static_cast<std::size_t>(l)];
    c.sigma = svd.singularValues()(l);
    c.u = svd.matrixU().col(l);
    c.v = svd.matrixV().col(l);
    detail::canonicalize_phase(c.u, c.v);
  }
  return out;
}

/// sum_l C_l.
template <typename Scalar = double>
CMatrix<Scalar> sum_clusters(const std::vector<DecoupledCluster<Scalar>>& clusters, Index rows, Index cols) {
  CMatrix<Scalar> out = CMatrix<Scalar>::Zero(rows, cols);
  for (const auto& c : clusters) out.noalias() += c.sigma * c.u * c.v.adjoint();
  return out;
}

/// R1: minimizer over r in [0, p-1] of the MDL score computed from the
/// singular values (p = min(n_t, n_c) sensors, n_c snapshots). Squared values
/// are floored at 1e-12 max before taking logs.
int estimate_rank_mdl(const Eigen::VectorXd& singular_values, Index n_t, Index n_c);

/// R2: smallest r whose leading energy reaches eta of the total.
int estimate_rank_threshold(const Eigen::VectorXd& singular_values, double eta);

RankEstimate combine_rank_estimates(int r_mdl, int r_threshold, int r_max);

/// R = max(1, min(R1, R2, r_max)) for an estimated channel.
template <typename Scalar = double>
RankEstimate estimate_rank_hybrid(const CMatrix<Scalar>& h_estimated, double eta = kDefaultEta,
                                  int r_max = kDefaultRMax) {
  if (!(eta > 0 && eta <= 1)) throw Error("estimate_rank_hybrid: eta must be in (0, 1]");
  if (r_max < 1) throw Error("estimate_rank_hybrid: r_max must be >= 1");
  if (!(h_estimated.norm() > 0)) throw Error("estimate_rank_hybrid: degenerate zero matrix");
  const Eigen::VectorXd sv = singular_values<Scalar>(h_estimated).template cast<double>();
  return combine_rank_estimates(estimate_rank_mdl(sv, h_estimated.rows(), h_estimated.cols()),
                                estimate_rank_threshold(sv, eta), r_max);
}

/// xi = sigma_1^2 / ||H||_F^2.
template <typename Scalar = double>
Scalar concentration(const CMatrix<Scalar>& h_cluster) {
  const Scalar energy = h_cluster.squaredNorm();
  if (!(energy > 0)) throw Error("concentration: zero matrix");
  const Scalar s1 = singular_values<Scalar>(h_cluster)(0);
  return std::min(Scalar(1), s1 * s1 / energy);
}

struct Orthogonality {
  double eta_r_db = 0;
  double eta_c_db = 0;
};

/// Normalized row/column orthogonality of two cluster components,
/// ||Ca^H Cb||_F / ||H^H H||_F and ||Ca Cb^H||_F / ||H H^H||_F. Both are
/// ratios of unsquared norms, reported as 20 log10.
template <typename Scalar = double>
Orthogonality orthogonality_metrics(const CMatrix<Scalar>& h_full, const CMatrix<Scalar>& c_a,
                                    const CMatrix<Scalar>& c_b) {
  if (c_a.rows() != h_full.rows() || c_a.cols() != h_full.cols() || c_b.rows() != h_full.rows() ||
      c_b.cols() != h_full.cols()) {
    throw Error("orthogonality_metrics: shape mismatch");
  }
  const double row_ref = static_cast<double>((h_full.adjoint() * h_full).norm());
  const double col_ref = static_cast<double>((h_full * h_full.adjoint()).norm());
  if (!(row_ref > 0)) throw Error("orthogonality_metrics: zero channel");
  const double eta_r = static_cast<double>((c_a.adjoint() * c_b).norm()) / row_ref;
  const double eta_c = static_cast<double>((c_a * c_b.adjoint()).norm()) / col_ref;
  constexpr double kTiny = 1e-300;
  return {20.0 * std::log10(std::max(eta_r, kTiny)), 20.0 * std::log10(std::max(eta_c, kTiny))};
}

}  // namespace csialign

#endif  // CSIALIGN_DECOUPLE_HPP
