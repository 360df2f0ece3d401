#ifndef CSIALIGN_CODEC_HPP
#define CSIALIGN_CODEC_HPP

// Cluster compressors, codeword quantization, the uplink feedback frame and
// overhead accounting.
//
// Matrices are flattened row-major over (antenna, subcarrier) with the real
// part before the imaginary part: v[2 (i N_C + k)] = Re X[i, k].

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "csialign/align.hpp"
#include "csialign/types.hpp"

namespace csialign {

// ---------------------------------------------------------------------------
// Compressor specification and parameters

enum class CompressorKind { kReferenceMlp, kTruncationBaseline, kIdentity };

std::string to_string(CompressorKind kind);
CompressorKind compressor_kind_from_string(const std::string& name);

struct CompressorSpec {
  Index n_t = 32;
  Index n_c = 32;
  int codeword_dim = 20;  // M
  int hidden_dim = 512;
  CompressorKind variant = CompressorKind::kReferenceMlp;
  std::uint64_t seed = 1;
  /// Inputs are multiplied by this before the first dense layer and outputs
  /// divided by it after the last one.
  double input_scale = 0.25;

  Index input_dim() const { return 2 * n_t * n_c; }
  void validate() const;
};

struct QuantizerSpec {
  int q_f = 6;
  /// When false, codeword elements travel as raw IEEE-754 binary64 words.
  bool enabled = true;
  double clip_lo = -1.0;
  double clip_hi = 1.0;

  std::uint64_t levels() const { return std::uint64_t{1} << q_f; }
  double step() const { return (clip_hi - clip_lo) / static_cast<double>(levels()); }
  int bits_per_element() const { return enabled ? q_f : 64; }
  void validate() const;
};

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;
};

/// Reference MLP autoencoder parameters. Encoder: input -> hidden (tanh) ->
/// M (tanh). Decoder: M -> hidden (tanh) -> hidden (tanh, refinement) -> input.
struct MlpParams {
  DenseLayer enc_hidden;
  DenseLayer enc_out;
  DenseLayer dec_hidden;
  DenseLayer dec_refine;
  DenseLayer dec_out;

  /// Layers in serialization order.
  std::vector<std::pair<std::string, DenseLayer*>> layers();
  std::vector<std::pair<std::string, const DenseLayer*>> layers() const;
  std::size_t parameter_count() const;
};

/// Xavier-uniform weights drawn from spec.seed, zero biases.
MlpParams initialize_params(const CompressorSpec& spec);

Eigen::VectorXd flatten(const Eigen::MatrixXcd& x);
Eigen::MatrixXcd unflatten(const Eigen::VectorXd& v, Index rows, Index cols);

/// f_en: angular-delay matrix -> codeword in (-1, 1)^M.
Eigen::VectorXd encoder_forward(const CompressorSpec& spec, const MlpParams& params, const Eigen::MatrixXcd& c_aln);

/// f_de: codeword -> angular-delay matrix estimate.
Eigen::MatrixXcd decoder_forward(const CompressorSpec& spec, const MlpParams& params, const Eigen::VectorXd& codeword);

// ---------------------------------------------------------------------------
// Truncation baseline

/// Kept coefficients of the truncation baseline. `values` holds re/im pairs of
/// the kept entries in ascending flat-index order, divided by sqrt(N_T N_C) so
/// normalized channels fall inside the quantizer range; `support` holds the
/// flat indices (i N_C + k) and travels as side information.
struct TruncatedCode {
  Eigen::VectorXd values;
  std::vector<std::uint32_t> support;
};

TruncatedCode truncation_baseline_encode(const Eigen::MatrixXcd& c_aln, int codeword_dim);
Eigen::MatrixXcd truncation_baseline_decode(const TruncatedCode& code, Index rows, Index cols);

// ---------------------------------------------------------------------------
// Pluggable compressor

struct Codeword {
  Eigen::VectorXd values;
  std::vector<std::uint32_t> support;  // empty unless the compressor needs side information
};

class Compressor {
 public:
  virtual ~Compressor() = default;
  virtual const CompressorSpec& spec() const = 0;
  virtual Codeword encode(const Eigen::MatrixXcd& x) const = 0;
  virtual Eigen::MatrixXcd decode(const Codeword& codeword) const = 0;
};

/// Builds the compressor named by spec.variant. Reference MLPs need params.
std::unique_ptr<Compressor> make_compressor(const CompressorSpec& spec, const MlpParams* params = nullptr);

class MlpCompressor final : public Compressor {
 public:
  MlpCompressor(CompressorSpec spec, MlpParams params);
  const CompressorSpec& spec() const override { return spec_; }
  const MlpParams& params() const { return params_; }
  Codeword encode(const Eigen::MatrixXcd& x) const override;
  Eigen::MatrixXcd decode(const Codeword& codeword) const override;

 private:
  CompressorSpec spec_;
  MlpParams params_;
};

/// Codeword = flattened input. Lossless when quantization is disabled.
class IdentityCompressor final : public Compressor {
 public:
  explicit IdentityCompressor(CompressorSpec spec);
  const CompressorSpec& spec() const override { return spec_; }
  Codeword encode(const Eigen::MatrixXcd& x) const override;
  Eigen::MatrixXcd decode(const Codeword& codeword) const override;

 private:
  CompressorSpec spec_;
};

class TruncationCompressor final : public Compressor {
 public:
  explicit TruncationCompressor(CompressorSpec spec);
  const CompressorSpec& spec() const override { return spec_; }
  Codeword encode(const Eigen::MatrixXcd& x) const override;
  Eigen::MatrixXcd decode(const Codeword& codeword) const override;

 private:
  CompressorSpec spec_;
};

// ---------------------------------------------------------------------------
// Quantization

/// Uniform mid-rise quantizer over [clip_lo, clip_hi] with 2^q_f levels.
/// Inputs outside the range are clipped. With quantization disabled the
/// returned words are the binary64 bit patterns of the inputs.
std::vector<std::uint64_t> quantize_codeword(const Eigen::VectorXd& c, const QuantizerSpec& q);
Eigen::VectorXd dequantize_codeword(std::span<const std::uint64_t> levels, const QuantizerSpec& q);
/// dequantize(quantize(c)).
Eigen::VectorXd quantize_roundtrip(const Eigen::VectorXd& c, const QuantizerSpec& q);

// ---------------------------------------------------------------------------
// Training

struct TrainingConfig {
  double learning_rate = 1e-3;
  int batch_size = 64;
  int epochs = 200;
  std::uint64_t seed = 1;

  void validate() const;
};

struct TrainingResult {
  MlpParams params;
  /// Mean per-sample loss ||X - f_de(Q(f_en(X)))||_F^2 of each epoch.
  std::vector<double> loss_trace;
};

/// Adam on the mean squared reconstruction error with the quantizer inside the
/// loop; gradients pass through the quantizer unchanged. Single-threaded and
/// deterministic given tcfg.seed and spec.seed.
TrainingResult train_autoencoder(std::span<const Eigen::MatrixXcd> dataset, const CompressorSpec& spec,
                                 const QuantizerSpec& quant, const TrainingConfig& tcfg);

/// Mean ||X - X_hat||^2 / ||X||^2 over the dataset, for a trained compressor.
double mean_nmse_linear(std::span<const Eigen::MatrixXcd> dataset, const Compressor& compressor,
                        const QuantizerSpec& quant);

// ---------------------------------------------------------------------------
// Feedback frame

/// Bit buffer written and read MSB-first.
class BitStream {
 public:
  void put(std::uint64_t value, int n_bits);
  std::uint64_t get(std::size_t& cursor, int n_bits) const;
  std::size_t size() const { return n_bits_; }
  const std::vector<std::uint8_t>& bytes() const { return bytes_; }
  static BitStream from_bytes(std::vector<std::uint8_t> bytes, std::size_t n_bits);
  bool operator==(const BitStream&) const = default;

 private:
  std::vector<std::uint8_t> bytes_;
  std::size_t n_bits_ = 0;
};

int ceil_log2(std::uint64_t n);

struct FrameLayout {
  bool has_header = true;  // false: codeword bits only (no cluster count, no metadata)
  int r_max = 8;
  int q_p = 2;
  int size_h = 16;  // O_h N_h
  int size_v = 8;   // O_v N_v
  int size_d = 64;  // O_d N_C
  int codeword_dim = 20;
  int bits_per_element = 6;

  static FrameLayout clustered(const ArrayGeometry& geom, const CodebookConfig& cb, int codeword_dim,
                               const QuantizerSpec& q, int r_max);
  static FrameLayout plain(int codeword_dim, const QuantizerSpec& q);

  int q_r() const { return has_header ? ceil_log2(static_cast<std::uint64_t>(r_max)) : 0; }
  int index_bits() const {
    return ceil_log2(static_cast<std::uint64_t>(size_h) * static_cast<std::uint64_t>(size_v) *
                     static_cast<std::uint64_t>(size_d));
  }
  int q_m() const { return has_header ? q_p + index_bits() : 0; }
  int q_f() const { return codeword_dim * bits_per_element; }
  std::size_t bits_for(int r_hat) const {
    return static_cast<std::size_t>(q_r()) + static_cast<std::size_t>(r_hat) * (q_m() + q_f());
  }
};

struct ClusterRecord {
  AlignmentMetadata meta;
  std::vector<std::uint64_t> levels;  // M codeword words

  bool operator==(const ClusterRecord&) const = default;
};

struct FeedbackFrame {
  int r_hat = 0;
  std::vector<ClusterRecord> clusters;
  std::size_t total_bits = 0;

  bool operator==(const FeedbackFrame&) const = default;
};

/// Layout: [R_hat - 1 : q_R bits] then per cluster [t : Q_p bits]
/// [(n1 size_v + n2) size_d + m : index bits] [M words of bits_per_element],
/// all MSB-first. A header-less layout carries exactly one codeword.
BitStream pack_frame(const FeedbackFrame& frame, const FrameLayout& layout);
FeedbackFrame parse_frame(const BitStream& bits, const FrameLayout& layout);

/// Builds a frame (total_bits filled in) from per-cluster metadata and words.
FeedbackFrame make_frame(std::vector<ClusterRecord> clusters, const FrameLayout& layout);

/// H_hat = sum of recovered spatial-frequency cluster components.
Eigen::MatrixXcd reconstruct_channel(std::span<const Eigen::MatrixXcd> recovered_clusters);

// ---------------------------------------------------------------------------
// Overhead accounting

struct OverheadReport {
  std::vector<std::size_t> per_sample_bits;
  double mean_bits = 0;
  double mean_r_hat = 0;
  int q_r = 0;
  int q_m = 0;
  int q_f = 0;
  /// M1 / M2 at equal mean overhead, and whether it exceeds E{R_hat}.
  double dimension_ratio = 0;
  bool ratio_exceeds_mean_r_hat = false;
};

/// M1/M2 = q_R / (M2 Q_f) + E{R}(1 + q_m / (M2 Q_f)).
double compressed_dimension_ratio(int q_r, double mean_r_hat, int m2, int bits_per_element, int q_m);

OverheadReport overhead_report(std::span<const int> r_hats, const FrameLayout& layout);

}  // namespace csialign

#endif  // CSIALIGN_CODEC_HPP
