#ifndef CSIALIGN_METRICS_HPP
#define CSIALIGN_METRICS_HPP

// Reconstruction and decoupling error metrics, physical-association error and
// a sliced Wasserstein-1 distance between sample sets.

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "csialign/channel.hpp"
#include "csialign/types.hpp"

namespace csialign {

/// A normalized error held in the linear domain. An exact zero maps to
/// -infinity dB, which serializers write as a distinguished token.
struct Decibels {
  double linear = 0.0;

  bool exact_zero() const { return linear == 0.0; }
  double db() const {
    return exact_zero() ? -std::numeric_limits<double>::infinity() : 10.0 * std::log10(linear);
  }
  static Decibels from_db(double db) { return {std::pow(10.0, db / 10.0)}; }
};

inline constexpr const char* kNegInfToken = "NEG_INF";

/// "NEG_INF" for exact zeros, otherwise the dB value with 17 significant digits.
std::string format_db(const Decibels& v);

/// ||H_hat - H||_F^2 / ||H||_F^2.
Decibels nmse(const Eigen::MatrixXcd& h_hat, const Eigen::MatrixXcd& h);

/// ||H - sum_l C_l||_F^2 / ||H||_F^2 for the decoupled clusters of H.
Decibels nmde(const Eigen::MatrixXcd& h, std::span<const Eigen::MatrixXcd> clusters);

/// sum_{l > r} sigma_l^2 / sum_l sigma_l^2.
Decibels nmde_from_singular_values(const Eigen::VectorXd& singular_values, int r);

enum class PartitionSearch { kGreedy, kExhaustive };

inline constexpr int kMaxExhaustivePaths = 8;

struct NpaeResult {
  Decibels value;
  /// Cluster index per path, or -1 for paths left unassigned.
  std::vector<int> assignment;
};

/// sum_l ||C_l - sum_{i in S_l} A_i||_F^2 / ||H||_F^2 for a given assignment.
Decibels partition_error(const Eigen::MatrixXcd& h, std::span<const Eigen::MatrixXcd> clusters,
                         std::span<const PathComponent> paths, const ArrayGeometry& geom,
                         std::span<const int> assignment);

/// Upper bound of the normalized physical-association error. Greedy mode
/// assigns each path to the cluster of largest |<A_i, C_l>| (none when that
/// correlation is zero), then applies single-path moves while they lower the
/// objective. Exhaustive mode scans all (R+1)^n assignments, n <= 8.
NpaeResult ub_npae(const Eigen::MatrixXcd& h, std::span<const Eigen::MatrixXcd> clusters,
                   const std::optional<std::vector<PathComponent>>& paths, const ArrayGeometry& geom,
                   PartitionSearch mode = PartitionSearch::kGreedy);

/// Mean over random unit directions of the 1-D empirical W1 between the
/// projected sets. Samples are columns; both sets are truncated to the
/// smaller count (first columns kept) before sorting.
double wasserstein1_sliced(const Eigen::MatrixXd& samples_a, const Eigen::MatrixXd& samples_b, int projections = 64,
                           std::uint64_t seed = 1);

/// Real feature vectors of angular-delay matrices (flattened re/im) as columns.
Eigen::MatrixXd feature_matrix(std::span<const Eigen::MatrixXcd> matrices);

struct SampleMetrics {
  std::size_t index = 0;
  std::string env_id;
  int r_hat = 0;
  std::size_t bits = 0;
  Decibels nmse;
  Decibels nmde;
  std::optional<Decibels> ub_npae;
};

struct MetricReport {
  std::string variant;
  std::vector<SampleMetrics> samples;
  std::vector<std::string> env_labels;
  Eigen::MatrixXd wasserstein;  // env x env, may be empty

  /// 10 log10 of the mean linear value.
  Decibels mean_nmse() const;
  Decibels mean_nmde() const;
  std::optional<Decibels> ub_npae_percentile(double q) const;
  double mean_bits() const;
  double mean_r_hat() const;

  std::string to_csv() const;
  std::string to_json() const;
};

}  // namespace csialign

#endif  // CSIALIGN_METRICS_HPP
