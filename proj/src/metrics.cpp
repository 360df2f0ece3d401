#include "csialign/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "csialign/codec.hpp"
#include "csialign/rng.hpp"

namespace csialign {

std::string format_db(const Decibels& v) {
  if (v.exact_zero()) return kNegInfToken;
  std::ostringstream os;
  os << std::setprecision(17) << v.db();
  return os.str();
}

Decibels nmse(const Eigen::MatrixXcd& h_hat, const Eigen::MatrixXcd& h) {
  if (h_hat.rows() != h.rows() || h_hat.cols() != h.cols()) throw Error("nmse: shape mismatch");
  const double ref = h.squaredNorm();
  if (!(ref > 0)) throw Error("nmse: zero reference");
  return {(h_hat - h).squaredNorm() / ref};
}

Decibels nmde(const Eigen::MatrixXcd& h, std::span<const Eigen::MatrixXcd> clusters) {
  const double ref = h.squaredNorm();
  if (!(ref > 0)) throw Error("nmde: zero channel");
  Eigen::MatrixXcd residual = h;
  for (const auto& c : clusters) {
    if (c.rows() != h.rows() || c.cols() != h.cols()) throw Error("nmde: shape mismatch");
    residual -= c;
  }
  return {residual.squaredNorm() / ref};
}

Decibels nmde_from_singular_values(const Eigen::VectorXd& singular_values, int r) {
  const double total = singular_values.squaredNorm();
  if (!(total > 0)) throw Error("nmde: zero channel");
  if (r < 0) throw Error("nmde: negative rank");
  if (r >= singular_values.size()) return {0.0};
  return {singular_values.tail(singular_values.size() - r).squaredNorm() / total};
}

// ---------------------------------------------------------------------------

namespace {

struct PartitionProblem {
  Eigen::MatrixXcd gram;  // <A_i, A_j>
  Eigen::MatrixXcd corr;  // <A_i, C_l>, paths x clusters
  Eigen::VectorXd cluster_energy;
  double ref = 0.0;
};

// <X, Y> = sum conj(X) Y.
std::complex<double> inner(const Eigen::MatrixXcd& x, const Eigen::MatrixXcd& y) {
  return (x.array().conjugate() * y.array()).sum();
}

PartitionProblem build_problem(const Eigen::MatrixXcd& h, std::span<const Eigen::MatrixXcd> clusters,
                               std::span<const PathComponent> paths, const ArrayGeometry& geom) {
  const double ref = h.squaredNorm();
  if (!(ref > 0)) throw Error("ub_npae: zero channel");
  if (clusters.empty()) throw Error("ub_npae: no decoupled clusters");
  if (paths.empty()) throw Error("ub_npae: empty path table");
  const auto n = static_cast<Index>(paths.size());
  const auto r = static_cast<Index>(clusters.size());

  std::vector<Eigen::MatrixXcd> responses;
  responses.reserve(paths.size());
  for (const auto& p : paths) responses.push_back(synthesize_channel<double>(geom, std::span(&p, 1)));

  PartitionProblem prob;
  prob.ref = ref;
  prob.gram.resize(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = i; j < n; ++j) {
      prob.gram(i, j) = inner(responses[i], responses[j]);
      prob.gram(j, i) = std::conj(prob.gram(i, j));
    }
  }
  prob.corr.resize(n, r);
  prob.cluster_energy.resize(r);
  for (Index l = 0; l < r; ++l) {
    const auto& c = clusters[static_cast<std::size_t>(l)];
    if (c.rows() != h.rows() || c.cols() != h.cols()) throw Error("ub_npae: cluster shape mismatch");
    prob.cluster_energy(l) = c.squaredNorm();
    for (Index i = 0; i < n; ++i) prob.corr(i, l) = inner(responses[i], c);
  }
  return prob;
}

// sum_l ||C_l - sum_{i in S_l} A_i||^2, expanded through the Gram matrix.
double objective(const PartitionProblem& prob, std::span<const int> assignment) {
  double total = prob.cluster_energy.sum();
  const auto n = static_cast<Index>(assignment.size());
  for (Index i = 0; i < n; ++i) {
    const int l = assignment[static_cast<std::size_t>(i)];
    if (l < 0) continue;
    total -= 2.0 * prob.corr(i, l).real();
    for (Index j = 0; j < n; ++j) {
      if (assignment[static_cast<std::size_t>(j)] == l) total += prob.gram(i, j).real();
    }
  }
  return std::max(0.0, total);
}

// Change of the objective when path i (currently unassigned) joins cluster l.
double join_delta(const PartitionProblem& prob, std::span<const int> assignment, Index i, int l) {
  double d = prob.gram(i, i).real() - 2.0 * prob.corr(i, l).real();
  for (Index j = 0; j < static_cast<Index>(assignment.size()); ++j) {
    if (j != i && assignment[static_cast<std::size_t>(j)] == l) d += 2.0 * prob.gram(i, j).real();
  }
  return d;
}

void exhaustive_search(const PartitionProblem& prob, std::vector<int>& current, Index i, double value,
                       double& best_value, std::vector<int>& best) {
  const auto n = static_cast<Index>(current.size());
  if (i == n) {
    if (value < best_value) {
      best_value = value;
      best = current;
    }
    return;
  }
  const int r = static_cast<int>(prob.corr.cols());
  for (int l = -1; l < r; ++l) {
    current[static_cast<std::size_t>(i)] = l;
    // Paths after i are still unassigned (-1), so the join delta only sees earlier paths.
    const double next = l < 0 ? value : value + join_delta(prob, current, i, l);
    exhaustive_search(prob, current, i + 1, next, best_value, best);
  }
  current[static_cast<std::size_t>(i)] = -1;
}

}  // namespace

Decibels partition_error(const Eigen::MatrixXcd& h, std::span<const Eigen::MatrixXcd> clusters,
                         std::span<const PathComponent> paths, const ArrayGeometry& geom,
                         std::span<const int> assignment) {
  if (assignment.size() != paths.size()) throw Error("partition_error: assignment size mismatch");
  const auto prob = build_problem(h, clusters, paths, geom);
  for (const int l : assignment) {
    if (l < -1 || l >= static_cast<int>(clusters.size())) throw Error("partition_error: cluster index out of range");
  }
  return {objective(prob, assignment) / prob.ref};
}

NpaeResult ub_npae(const Eigen::MatrixXcd& h, std::span<const Eigen::MatrixXcd> clusters,
                   const std::optional<std::vector<PathComponent>>& paths, const ArrayGeometry& geom,
                   PartitionSearch mode) {
  if (!paths) throw Error("ub_npae: missing path table");
  const auto prob = build_problem(h, clusters, *paths, geom);
  const auto n = static_cast<Index>(paths->size());
  const int r = static_cast<int>(clusters.size());
  std::vector<int> assignment(paths->size(), -1);

  if (mode == PartitionSearch::kExhaustive) {
    if (n > kMaxExhaustivePaths) {
      throw Error("ub_npae: exhaustive search limited to " + std::to_string(kMaxExhaustivePaths) + " paths");
    }
    std::vector<int> current(paths->size(), -1);
    double best_value = std::numeric_limits<double>::infinity();
    exhaustive_search(prob, current, 0, prob.cluster_energy.sum(), best_value, assignment);
  } else {
    for (Index i = 0; i < n; ++i) {
      int best = -1;
      double best_corr = 0.0;
      for (int l = 0; l < r; ++l) {
        const double c = std::abs(prob.corr(i, l));
        if (c > best_corr) {
          best_corr = c;
          best = l;
        }
      }
      assignment[static_cast<std::size_t>(i)] = best;
    }
    // Single-path moves, first improvement, until none lowers the objective.
    double value = objective(prob, assignment);
    bool improved = true;
    while (improved) {
      improved = false;
      for (Index i = 0; i < n; ++i) {
        const int original = assignment[static_cast<std::size_t>(i)];
        for (int l = -1; l < r; ++l) {
          if (l == original) continue;
          assignment[static_cast<std::size_t>(i)] = l;
          const double candidate = objective(prob, assignment);
          if (candidate < value * (1.0 - 1e-12)) {
            value = candidate;
            improved = true;
            break;
          }
          assignment[static_cast<std::size_t>(i)] = original;
        }
      }
    }
  }
  return {{objective(prob, assignment) / prob.ref}, std::move(assignment)};
}

// ---------------------------------------------------------------------------

double wasserstein1_sliced(const Eigen::MatrixXd& samples_a, const Eigen::MatrixXd& samples_b, int projections,
                           std::uint64_t seed) {
  if (samples_a.cols() == 0 || samples_b.cols() == 0) throw Error("wasserstein1: empty sample set");
  if (samples_a.rows() != samples_b.rows()) throw Error("wasserstein1: feature dimension mismatch");
  if (projections < 1) throw Error("wasserstein1: projections must be >= 1");
  const Index count = std::min(samples_a.cols(), samples_b.cols());
  const Index dim = samples_a.rows();

  auto rng = detail::seeded_engine(seed, 0);
  std::normal_distribution<double> unit(0.0, 1.0);
  Eigen::MatrixXd dirs(dim, projections);
  for (int p = 0; p < projections; ++p) {
    for (Index k = 0; k < dim; ++k) dirs(k, p) = unit(rng);
    dirs.col(p).normalize();
  }

  const Eigen::MatrixXd pa = dirs.transpose() * samples_a.leftCols(count);
  const Eigen::MatrixXd pb = dirs.transpose() * samples_b.leftCols(count);
  double total = 0.0;
  std::vector<double> xa(static_cast<std::size_t>(count));
  std::vector<double> xb(static_cast<std::size_t>(count));
  for (int p = 0; p < projections; ++p) {
    for (Index k = 0; k < count; ++k) {
      xa[static_cast<std::size_t>(k)] = pa(p, k);
      xb[static_cast<std::size_t>(k)] = pb(p, k);
    }
    std::sort(xa.begin(), xa.end());
    std::sort(xb.begin(), xb.end());
    double w = 0.0;
    for (std::size_t k = 0; k < xa.size(); ++k) w += std::abs(xa[k] - xb[k]);
    total += w / static_cast<double>(count);
  }
  return total / projections;
}

Eigen::MatrixXd feature_matrix(std::span<const Eigen::MatrixXcd> matrices) {
  if (matrices.empty()) return {};
  Eigen::MatrixXd out(2 * matrices.front().size(), static_cast<Index>(matrices.size()));
  for (std::size_t s = 0; s < matrices.size(); ++s) {
    if (matrices[s].size() != matrices.front().size()) throw Error("feature_matrix: shape mismatch");
    out.col(static_cast<Index>(s)) = flatten(matrices[s]);
  }
  return out;
}

// ---------------------------------------------------------------------------

Decibels MetricReport::mean_nmse() const {
  if (samples.empty()) throw Error("metric report: no samples");
  double acc = 0.0;
  for (const auto& s : samples) acc += s.nmse.linear;
  return {acc / static_cast<double>(samples.size())};
}

Decibels MetricReport::mean_nmde() const {
  if (samples.empty()) throw Error("metric report: no samples");
  double acc = 0.0;
  for (const auto& s : samples) acc += s.nmde.linear;
  return {acc / static_cast<double>(samples.size())};
}

std::optional<Decibels> MetricReport::ub_npae_percentile(double q) const {
  std::vector<double> v;
  for (const auto& s : samples) {
    if (s.ub_npae) v.push_back(s.ub_npae->linear);
  }
  if (v.empty()) return std::nullopt;
  std::sort(v.begin(), v.end());
  // Nearest-rank percentile.
  const auto rank = static_cast<std::size_t>(std::ceil(std::clamp(q, 0.0, 1.0) * static_cast<double>(v.size())));
  return Decibels{v[rank == 0 ? 0 : rank - 1]};
}

double MetricReport::mean_bits() const {
  if (samples.empty()) return 0.0;
  double acc = 0.0;
  for (const auto& s : samples) acc += static_cast<double>(s.bits);
  return acc / static_cast<double>(samples.size());
}

double MetricReport::mean_r_hat() const {
  if (samples.empty()) return 0.0;
  double acc = 0.0;
  for (const auto& s : samples) acc += s.r_hat;
  return acc / static_cast<double>(samples.size());
}

namespace {

std::string linear_string(double x) {
  std::ostringstream os;
  os << std::setprecision(17) << x;
  return os.str();
}

nlohmann::json db_json(const Decibels& d) {
  nlohmann::json j;
  j["linear"] = d.linear;
  if (d.exact_zero()) {
    j["db"] = nullptr;
    j["exact_zero"] = true;
  } else {
    j["db"] = d.db();
    j["exact_zero"] = false;
  }
  return j;
}

}  // namespace

std::string MetricReport::to_csv() const {
  std::ostringstream os;
  os << "index,env_id,r_hat,bits,nmse_db,nmse_linear,nmde_db,nmde_linear,ub_npae_db,ub_npae_linear\n";
  for (const auto& s : samples) {
    os << s.index << ',' << s.env_id << ',' << s.r_hat << ',' << s.bits << ',' << format_db(s.nmse) << ','
       << linear_string(s.nmse.linear) << ',' << format_db(s.nmde) << ',' << linear_string(s.nmde.linear) << ',';
    if (s.ub_npae) {
      os << format_db(*s.ub_npae) << ',' << linear_string(s.ub_npae->linear);
    } else {
      os << ',';
    }
    os << '\n';
  }
  return os.str();
}

std::string MetricReport::to_json() const {
  nlohmann::json j;
  j["variant"] = variant;
  auto rows = nlohmann::json::array();
  for (const auto& s : samples) {
    nlohmann::json row;
    row["index"] = s.index;
    row["env_id"] = s.env_id;
    row["r_hat"] = s.r_hat;
    row["bits"] = s.bits;
    row["nmse"] = db_json(s.nmse);
    row["nmde"] = db_json(s.nmde);
    row["ub_npae"] = s.ub_npae ? db_json(*s.ub_npae) : nlohmann::json(nullptr);
    rows.push_back(std::move(row));
  }
  j["samples"] = std::move(rows);
  nlohmann::json agg;
  agg["count"] = samples.size();
  if (!samples.empty()) {
    agg["mean_nmse"] = db_json(mean_nmse());
    agg["mean_nmde"] = db_json(mean_nmde());
    agg["mean_bits"] = mean_bits();
    agg["mean_r_hat"] = mean_r_hat();
    if (auto p = ub_npae_percentile(0.9)) agg["ub_npae_p90"] = db_json(*p);
  }
  j["aggregate"] = std::move(agg);
  if (wasserstein.size() > 0) {
    nlohmann::json w;
    w["labels"] = env_labels;
    auto m = nlohmann::json::array();
    for (Index i = 0; i < wasserstein.rows(); ++i) {
      auto row = nlohmann::json::array();
      for (Index k = 0; k < wasserstein.cols(); ++k) row.push_back(wasserstein(i, k));
      m.push_back(std::move(row));
    }
    w["matrix"] = std::move(m);
    j["wasserstein1"] = std::move(w);
  }
  return j.dump(2);
}

}  // namespace csialign
