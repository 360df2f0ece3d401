#ifndef CSIALIGN_HARNESS_HPP
#define CSIALIGN_HARNESS_HPP

// End-to-end feedback pipelines and the experiment drivers built on them.

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "csialign/align.hpp"
#include "csialign/channel.hpp"
#include "csialign/codec.hpp"
#include "csialign/decouple.hpp"
#include "csialign/metrics.hpp"

namespace csialign {

enum class VariantKind {
  kEgCsiNet,            // decouple, align and compress every cluster
  kEgWithoutMcd,        // one cluster: the whole channel, aligned
  kVanillaAe,           // compress the angular-delay channel directly
  kTruncationBaseline,  // EG stages with the truncation compressor
};

std::string to_string(VariantKind kind);
VariantKind variant_kind_from_string(const std::string& name);

struct PipelineVariant {
  VariantKind kind = VariantKind::kEgCsiNet;
  CompressorSpec compressor;
  CodebookConfig codebook;
  QuantizerSpec quantizer;
  double eta = kDefaultEta;
  int r_max = kDefaultRMax;

  bool decouples() const { return kind == VariantKind::kEgCsiNet || kind == VariantKind::kTruncationBaseline; }
  bool aligns() const { return kind != VariantKind::kVanillaAe; }
  void validate() const;
};

/// Frame layout a variant emits. Without MCD the cluster count is fixed at one,
/// so no count field is sent; vanilla frames carry codeword bits only.
FrameLayout frame_layout(const PipelineVariant& variant, const ArrayGeometry& geom);

struct StageRecord {
  bool decoupled = false;
  bool aligned = false;
  bool encoded = false;
  bool framed = false;
  bool decoded = false;
  std::map<std::string, double> seconds;
};

struct PipelineResult {
  FeedbackFrame frame;
  BitStream bits;
  Eigen::MatrixXcd h_hat;
  RankEstimate rank;
  int r_hat = 0;
  std::size_t total_bits = 0;
  /// Out-of-band support indices of the truncation compressor, in bits.
  std::size_t side_info_bits = 0;
  Decibels nmse;
  Decibels nmde;
  std::vector<Eigen::MatrixXcd> clusters;  // decoupled, spatial-frequency domain
  StageRecord stages;
};

/// One configured feedback chain: UE side (decouple, align, encode, quantize,
/// pack) and BS side (parse, dequantize, decode, unalign, sum).
class Pipeline {
 public:
  Pipeline(PipelineVariant variant, const ArrayGeometry& geom, std::shared_ptr<const Compressor> compressor);

  const PipelineVariant& variant() const { return variant_; }
  const FrameLayout& layout() const { return layout_; }
  const ArrayGeometry& geometry() const { return geom_; }

  /// Runs on `h_input` (e.g. an estimated channel); NMSE is measured against
  /// `h_reference` and NMDE against `h_input`.
  PipelineResult run(const Eigen::MatrixXcd& h_input, const Eigen::MatrixXcd& h_reference) const;
  PipelineResult run(const Eigen::MatrixXcd& h) const { return run(h, h); }

  /// Compressor inputs the UE side would produce for h (aligned clusters, the
  /// aligned channel, or the angular-delay channel).
  std::vector<Eigen::MatrixXcd> compressor_inputs(const Eigen::MatrixXcd& h) const;

 private:
  PipelineVariant variant_;
  ArrayGeometry geom_;
  FrameLayout layout_;
  std::shared_ptr<const Compressor> compressor_;
  Aligner<double> aligner_;
};

PipelineResult run_pipeline(const Pipeline& pipeline, const ChannelSample& sample);

/// Compressor inputs of a whole sample set, concatenated in sample order.
std::vector<Eigen::MatrixXcd> collect_compressor_inputs(const PipelineVariant& variant, const ArrayGeometry& geom,
                                                        const std::vector<ChannelSample>& samples);

struct TrainedVariant {
  PipelineVariant variant;
  std::shared_ptr<const Compressor> compressor;
  std::vector<double> loss_trace;
};

/// Trains the reference MLP on the variant's compressor inputs, or builds the
/// learning-free compressor directly.
TrainedVariant train_variant(const PipelineVariant& variant, const ArrayGeometry& geom,
                             const std::vector<ChannelSample>& samples, const TrainingConfig& training);

MetricReport evaluate(const Pipeline& pipeline, const std::vector<ChannelSample>& samples, bool with_ub_npae = false);

// ---------------------------------------------------------------------------
// Matched-overhead sizing

/// Codeword length giving `target_bits` per frame for the variant's layout:
/// (bits - header) / Q_f rounded to the nearest integer, at least 1.
int matched_codeword_dim(VariantKind kind, double target_bits, const FrameLayout& eg_layout, int bits_per_element);

// ---------------------------------------------------------------------------
// Generalization benchmark

struct BenchmarkConfig {
  ArrayGeometry geometry;
  std::vector<EnvironmentConfig> train_envs;
  std::vector<EnvironmentConfig> test_envs;
  std::size_t train_samples_per_env = 1000;
  std::size_t test_samples_per_env = 200;
  std::vector<VariantKind> variants{VariantKind::kEgCsiNet, VariantKind::kEgWithoutMcd, VariantKind::kVanillaAe};
  int eg_codeword_dim = 20;
  int hidden_dim = 256;
  double input_scale = 0.25;
  CodebookConfig codebook;
  QuantizerSpec quantizer;
  double eta = kDefaultEta;
  int r_max = kDefaultRMax;
  TrainingConfig training{1e-3, 64, 40, 1};
  int w1_projections = 64;
  std::uint64_t seed = 1;
  /// Allow a test environment to equal a training one (in-distribution runs).
  bool allow_overlap = false;

  void validate() const;
};

struct VariantOutcome {
  VariantKind kind = VariantKind::kEgCsiNet;
  int codeword_dim = 0;
  Decibels train_nmse;
  Decibels test_nmse;
  double mean_test_bits = 0.0;
  double mean_test_r_hat = 0.0;
  std::vector<double> loss_trace;
  MetricReport test_report;
};

struct BenchmarkReport {
  std::vector<VariantOutcome> variants;
  std::vector<std::string> env_labels;  // train envs then test envs
  Eigen::MatrixXd w1_raw;      // angular-delay channels
  Eigen::MatrixXd w1_aligned;  // aligned dominant clusters

  const VariantOutcome& outcome(VariantKind kind) const;
  std::string to_csv() const;
  std::string w1_csv() const;
  std::string to_json() const;
};

BenchmarkReport run_generalization_benchmark(const BenchmarkConfig& cfg);

// ---------------------------------------------------------------------------
// Noise sweep

struct NoiseSweepConfig {
  ArrayGeometry geometry;
  EnvironmentConfig env;
  std::size_t samples = 200;
  std::vector<double> snr_db{-5.0, 0.0, 5.0, 10.0, 15.0};
  double eta = kDefaultEta;
  int r_max = kDefaultRMax;
  std::uint64_t seed = 1;
};

enum class RankCriterion { kMdl, kThreshold, kHybrid };

std::string to_string(RankCriterion c);

struct CriterionStats {
  double mean_r_hat = 0.0;
  /// Truncation residual relative to the estimated channel.
  Decibels mean_nmde;
  /// Rank-R truncation of the estimate against the clean channel (lossless codec).
  Decibels mean_nmse;
};

struct NoiseSweepPoint {
  double snr_db = 0.0;
  std::map<RankCriterion, CriterionStats> criteria;
  /// Fraction of samples whose hybrid estimate came from MDL (R1 <= R2).
  double mdl_active_fraction = 0.0;
};

struct NoiseSweepReport {
  std::vector<NoiseSweepPoint> points;
  std::string to_csv() const;
};

/// Cluster count of one criterion, clipped to [1, r_max].
int criterion_rank(const RankEstimate& est, RankCriterion c);

NoiseSweepReport run_noise_sweep(const NoiseSweepConfig& cfg);

// ---------------------------------------------------------------------------
// Overhead sweep

struct OverheadSweepConfig {
  ArrayGeometry geometry;
  EnvironmentConfig env;
  std::size_t samples = 200;
  std::vector<int> codeword_dims{8, 16, 20, 32, 64};
  CodebookConfig codebook;
  QuantizerSpec quantizer;
  double eta = kDefaultEta;
  int r_max = kDefaultRMax;
};

struct OverheadSweepRow {
  int codeword_dim = 0;
  OverheadReport report;
  int vanilla_codeword_dim = 0;
  int without_mcd_codeword_dim = 0;
};

struct OverheadSweepReport {
  std::vector<OverheadSweepRow> rows;
  std::string to_csv() const;
};

OverheadSweepReport run_overhead_sweep(const OverheadSweepConfig& cfg);

}  // namespace csialign

#endif  // CSIALIGN_HARNESS_HPP
