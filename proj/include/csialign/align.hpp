#ifndef CSIALIGN_ALIGN_HPP
#define CSIALIGN_ALIGN_HPP

// Fine-grained alignment of one decoupled cluster: oversampled DFT codebook
// peak search, phase adjustment and peak-phase quantization. Aligned clusters
// have their angular-delay peak at (0, 0, 0) and a peak phase within half a
// quantizer bin of zero.

#include <cmath>
#include <limits>
#include <string>
#include <utility>

#include "csialign/channel.hpp"
#include "csialign/types.hpp"

namespace csialign {

struct CodebookConfig {
  int o_h = 2;
  int o_v = 2;
  int o_d = 2;
  int q_p = 2;

  int o_a() const { return o_h * o_v; }
  void validate() const {
    if (o_h < 1 || o_v < 1 || o_d < 1) throw Error("codebook: oversampling factors must be >= 1");
    if (q_p < 1 || q_p > 16) throw Error("codebook: q_p must be in [1, 16]");
  }
};

struct AlignmentMetadata {
  int n1 = 0;
  int n2 = 0;
  int m = 0;
  int t = 0;

  bool operator==(const AlignmentMetadata&) const = default;

  void validate(const ArrayGeometry& geom, const CodebookConfig& cfg) const {
    const bool ok = n1 >= 0 && n1 < cfg.o_h * geom.n_h && n2 >= 0 && n2 < cfg.o_v * geom.n_v && m >= 0 &&
                    m < cfg.o_d * geom.n_c && t >= 0 && t < (1 << cfg.q_p);
    if (!ok) {
      throw Error("alignment metadata out of range: (" + std::to_string(n1) + ", " + std::to_string(n2) + ", " +
                  std::to_string(m) + ", " + std::to_string(t) + ")");
    }
  }
};

template <typename Scalar = double>
struct AlignedCluster {
  CMatrix<Scalar> c_aln;  // angular-delay domain
  AlignmentMetadata meta;
};

/// Oversampled Kronecker angular codebook, oversampled DFT delay codebook and
/// the uniform phase codebook beta_t = 2 pi t / 2^q_p.
template <typename Scalar = double>
class Codebooks {
 public:
  Codebooks(const ArrayGeometry& geom, const CodebookConfig& cfg)
      : geom_(geom), cfg_(cfg), size_h_(cfg.o_h * geom.n_h), size_v_(cfg.o_v * geom.n_v),
        size_d_(cfg.o_d * geom.n_c) {
    geom.validate();
    cfg.validate();
    angular_.resize(geom.n_t(), Index{size_h_} * size_v_);
    for (int n1 = 0; n1 < size_h_; ++n1) {
      for (int n2 = 0; n2 < size_v_; ++n2) angular_.col(angular_column(n1, n2)) = make_angular(n1, n2);
    }
    delay_.resize(geom.n_c, size_d_);
    for (int m = 0; m < size_d_; ++m) delay_.col(m) = dft_codeword(m, size_d_, geom.n_c);
  }

  const ArrayGeometry& geometry() const { return geom_; }
  const CodebookConfig& config() const { return cfg_; }
  int size_h() const { return size_h_; }
  int size_v() const { return size_v_; }
  int size_d() const { return size_d_; }
  int phase_levels() const { return 1 << cfg_.q_p; }

  Index angular_column(int n1, int n2) const { return Index{n1} * size_v_ + n2; }

  /// All angular codewords as columns, ordered lexicographically by (n1, n2).
  const CMatrix<Scalar>& angular() const { return angular_; }
  /// All delay codewords as columns, ordered by m.
  const CMatrix<Scalar>& delay() const { return delay_; }

  CVector<Scalar> angular_codeword(int n1, int n2) const { return angular_.col(angular_column(n1, n2)); }
  CVector<Scalar> delay_codeword(int m) const { return delay_.col(m); }

  Scalar phase(int t) const { return 2 * kPi<Scalar> * static_cast<Scalar>(t) / static_cast<Scalar>(phase_levels()); }

 private:
  // [1, e^{j 2 pi n / size}, ..., e^{j 2 pi n (len-1) / size}]
  static CVector<Scalar> dft_codeword(int n, int size, int len) {
    CVector<Scalar> w(len);
    for (int i = 0; i < len; ++i) {
      const long r = (static_cast<long>(n) * i) % size;
      w(i) = cis<Scalar>(2 * kPi<Scalar> * static_cast<Scalar>(r) / static_cast<Scalar>(size));
    }
    return w;
  }

  CVector<Scalar> make_angular(int n1, int n2) const {
    const auto wh = dft_codeword(n1, size_h_, geom_.n_h);
    const auto wv = dft_codeword(n2, size_v_, geom_.n_v);
    return kron(wh, wv);
  }

  ArrayGeometry geom_;
  CodebookConfig cfg_;
  int size_h_;
  int size_v_;
  int size_d_;
  CMatrix<Scalar> angular_;
  CMatrix<Scalar> delay_;
};

namespace detail {

// Lowest index among entries within rounding noise of the maximum.
template <typename Vec>
Index argmax_lowest(const Vec& values) {
  const auto top = values.maxCoeff();
  const auto tol = top * static_cast<decltype(top)>(1e-10);
  for (Index i = 0; i < values.size(); ++i) {
    if (values(i) >= top - tol) return i;
  }
  return 0;
}

template <typename Scalar>
void require_nonzero(const CMatrix<Scalar>& c, const char* what) {
  if (!(c.norm() > 0)) throw Error(std::string(what) + ": zero matrix");
}

}  // namespace detail

/// argmax over (n1, n2) of ||w_{n1,n2}^H C||^2; ties go to the smallest n1, then n2.
template <typename Scalar = double>
std::pair<int, int> search_angular_peak(const CMatrix<Scalar>& c, const Codebooks<Scalar>& cb) {
  detail::require_nonzero(c, "search_angular_peak");
  const RVector<Scalar> energy = (cb.angular().adjoint() * c).rowwise().squaredNorm();
  const Index best = detail::argmax_lowest(energy);
  return {static_cast<int>(best / cb.size_v()), static_cast<int>(best % cb.size_v())};
}

/// argmax over m of ||C w_m||^2; ties go to the smallest m.
template <typename Scalar = double>
int search_delay_peak(const CMatrix<Scalar>& c, const Codebooks<Scalar>& cb) {
  detail::require_nonzero(c, "search_delay_peak");
  const RVector<Scalar> energy = (c * cb.delay()).colwise().squaredNorm().transpose();
  return static_cast<int>(detail::argmax_lowest(energy));
}

/// S = conj(w_a(n1, n2)) (x) w_d(m)^T, i.e. S[i, k] = conj(w_a[i]) w_d[k].
template <typename Scalar = double>
CMatrix<Scalar> phase_adjustment_matrix(const AlignmentMetadata& meta, const Codebooks<Scalar>& cb) {
  meta.validate(cb.geometry(), cb.config());
  return cb.angular_codeword(meta.n1, meta.n2).conjugate() * cb.delay_codeword(meta.m).transpose();
}

/// Index of the phase codeword closest to arg(p) in circular distance; ties go
/// to the smaller index.
template <typename Scalar = double>
int quantize_peak_phase(std::complex<Scalar> p, int q_p) {
  if (p == std::complex<Scalar>(0, 0)) throw Error("zero peak");
  if (q_p < 1 || q_p > 16) throw Error("quantize_peak_phase: q_p must be in [1, 16]");
  const int levels = 1 << q_p;
  const Scalar angle = std::arg(p);
  int best = 0;
  Scalar best_dist = std::numeric_limits<Scalar>::infinity();
  for (int t = 0; t < levels; ++t) {
    const Scalar beta = 2 * kPi<Scalar> * static_cast<Scalar>(t) / static_cast<Scalar>(levels);
    const Scalar dist = std::abs(std::remainder(angle - beta, 2 * kPi<Scalar>));
    if (dist < best_dist) {
      best_dist = dist;
      best = t;
    }
  }
  return best;
}

/// p = w_a(n1, n2)^H C w_d(m).
template <typename Scalar = double>
std::complex<Scalar> peak_value(const CMatrix<Scalar>& c, int n1, int n2, int m, const Codebooks<Scalar>& cb) {
  return cb.angular_codeword(n1, n2).dot(c * cb.delay_codeword(m));
}

/// Codebooks and DFT factors bundled for repeated alignment at one geometry.
template <typename Scalar = double>
class Aligner {
 public:
  Aligner(const ArrayGeometry& geom, const CodebookConfig& cfg) : codebooks_(geom, cfg), transform_(geom) {}

  const Codebooks<Scalar>& codebooks() const { return codebooks_; }
  const AngularDelayTransform<Scalar>& transform() const { return transform_; }

  /// C_aln = F_a (e^{-j beta_t} S (.) C) F_d^H together with (n1, n2, m, t).
  AlignedCluster<Scalar> align(const CMatrix<Scalar>& c) const {
    detail::require_nonzero(c, "align_cluster");
    AlignedCluster<Scalar> out;
    const auto [n1, n2] = search_angular_peak(c, codebooks_);
    const int m = search_delay_peak(c, codebooks_);
    const auto p = peak_value(c, n1, n2, m, codebooks_);
    const int t = quantize_peak_phase(p, codebooks_.config().q_p);
    out.meta = {n1, n2, m, t};
    out.c_aln = transform_.forward(adjustment(out.meta).cwiseProduct(c));
    return out;
  }

  /// C = conj(e^{-j beta_t} S) (.) (F_a^H C_aln F_d).
  CMatrix<Scalar> unalign(const CMatrix<Scalar>& c_aln, const AlignmentMetadata& meta) const {
    meta.validate(codebooks_.geometry(), codebooks_.config());
    return adjustment(meta).conjugate().cwiseProduct(transform_.inverse(c_aln));
  }

  /// e^{-j beta_t} S.
  CMatrix<Scalar> adjustment(const AlignmentMetadata& meta) const {
    return cis<Scalar>(-codebooks_.phase(meta.t)) * phase_adjustment_matrix(meta, codebooks_);
  }

 private:
  Codebooks<Scalar> codebooks_;
  AngularDelayTransform<Scalar> transform_;
};

template <typename Scalar = double>
AlignedCluster<Scalar> align_cluster(const CMatrix<Scalar>& c, const ArrayGeometry& geom, const CodebookConfig& cfg) {
  return Aligner<Scalar>(geom, cfg).align(c);
}

template <typename Scalar = double>
CMatrix<Scalar> unalign_cluster(const CMatrix<Scalar>& c_aln_hat, const AlignmentMetadata& meta,
                                const ArrayGeometry& geom, const CodebookConfig& cfg) {
  return Aligner<Scalar>(geom, cfg).unalign(c_aln_hat, meta);
}

}  // namespace csialign

#endif  // CSIALIGN_ALIGN_HPP
