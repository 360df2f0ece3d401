#include "csialign/decouple.hpp"

#include <algorithm>
#include <limits>

namespace csialign {

namespace {

constexpr double kRelativeFloor = 1e-12;

}  // namespace

int estimate_rank_mdl(const Eigen::VectorXd& singular_values, Index n_t, Index n_c) {
  if (singular_values.size() == 0) throw Error("estimate_rank_mdl: empty singular values");
  if (n_t < 1 || n_c < 1) throw Error("estimate_rank_mdl: invalid dimensions");
  const Index p = std::min({n_t, n_c, singular_values.size()});

  Eigen::VectorXd s2 = singular_values.head(p).cwiseAbs2();
  const double top = s2.maxCoeff();
  if (!(top > 0)) return 0;
  const double floor = kRelativeFloor * top;
  s2 = s2.cwiseMax(floor);

  const double log_snapshots = std::log(static_cast<double>(n_c));
  const double pp = static_cast<double>(p);
  int best_r = 0;
  double best = std::numeric_limits<double>::infinity();
  for (Index r = 0; r < p; ++r) {
    const auto tail = s2.segment(r, p - r);
    const double k = static_cast<double>(p - r);
    double log_ratio = 0.0;  // log(geometric mean / arithmetic mean) <= 0
    if (tail.maxCoeff() > floor) {
      log_ratio = tail.array().log().mean() - std::log(tail.mean());
    }
    const double rr = static_cast<double>(r);
    const double score = -2.0 * static_cast<double>(n_c) * k * log_ratio + rr * (2.0 * pp - rr) * log_snapshots;
    if (score < best) {
      best = score;
      best_r = static_cast<int>(r);
    }
  }
  return best_r;
}

int estimate_rank_threshold(const Eigen::VectorXd& singular_values, double eta) {
  if (!(eta > 0 && eta <= 1)) throw Error("estimate_rank_threshold: eta must be in (0, 1]");
  if (singular_values.size() == 0) throw Error("estimate_rank_threshold: empty singular values");
  Eigen::VectorXd s2 = singular_values.cwiseAbs2();
  const double top = s2.maxCoeff();
  if (!(top > 0)) throw Error("estimate_rank_threshold: all-zero singular values");
  const double floor = kRelativeFloor * top;
  for (Index i = 0; i < s2.size(); ++i) {
    if (s2(i) <= floor) s2(i) = 0.0;
  }
  double total = 0.0;
  for (Index i = 0; i < s2.size(); ++i) total += s2(i);
  const double target = eta * total * (1.0 - 1e-12);
  double cum = 0.0;
  for (Index i = 0; i < s2.size(); ++i) {
    cum += s2(i);
    if (cum >= target) return static_cast<int>(i + 1);
  }
  return static_cast<int>(s2.size());
}

RankEstimate combine_rank_estimates(int r_mdl, int r_threshold, int r_max) {
  RankEstimate out;
  out.r_mdl = r_mdl;
  out.r_threshold = r_threshold;
  out.r_max = r_max;
  out.r_final = std::max(1, std::min({r_mdl, r_threshold, r_max}));
  return out;
}

}  // namespace csialign
