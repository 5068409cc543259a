#pragma once

// Threshold-query elicitation of latent types: binary search simulates noisy
// value queries on selected rows, then least squares recovers the latent point.

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include "latmech/error.hpp"
#include "latmech/latent_model.hpp"

namespace latmech {

enum class Setting { Separable, DiagDominant, Gaussian, WeakDependence };

inline const char* to_string(Setting s) {
  switch (s) {
    case Setting::Separable: return "separable";
    case Setting::DiagDominant: return "diag_dominant";
    case Setting::Gaussian: return "gaussian";
    case Setting::WeakDependence: return "weak_dep";
  }
  return "unknown";
}

inline Setting parse_setting(const std::string& s) {
  if (s == "separable") return Setting::Separable;
  if (s == "diag_dominant") return Setting::DiagDominant;
  if (s == "gaussian") return Setting::Gaussian;
  if (s == "weak_dep") return Setting::WeakDependence;
  fail(ErrorKind::ConfigError, "unknown protocol setting '" + s + "'");
}

inline bool is_deterministic(Setting s) { return s == Setting::Separable || s == Setting::DiagDominant; }

/// "Is t_j >= price?" -- equivalently, would the bidder pay price + mu_j for item j.
struct ThresholdQuery {
  int item = 0;
  double price = 0.0;
};

/// Hidden type answering threshold queries. A scripted oracle answers as if
/// its type were `substitute`; the ledger counts every answer.
class BidderOracle {
 public:
  static BidderOracle truthful(Vec t) {
    BidderOracle o;
    o.answering_ = t;
    o.true_ = std::move(t);
    return o;
  }
  static BidderOracle scripted(Vec t, Vec substitute) {
    require(t.size() == substitute.size(), ErrorKind::DimensionMismatch, "substitute type dimension mismatch");
    BidderOracle o;
    o.true_ = std::move(t);
    o.answering_ = std::move(substitute);
    return o;
  }

  bool answer(const ThresholdQuery& q) {
    require(q.item >= 0 && q.item < answering_.size(), ErrorKind::InvalidArgument, "query item out of range");
    ++count_;
    return answering_(q.item) >= q.price;  // ties answer yes
  }

  std::size_t query_count() const { return count_; }
  const Vec& true_type() const { return true_; }
  const Vec& answering_type() const { return answering_; }

 private:
  BidderOracle() = default;
  Vec true_;
  Vec answering_;
  std::size_t count_ = 0;
};

/// Number of halvings until a bracket of width `range` is no wider than eta,
/// i.e. ceil(log2(range / eta)) computed without floating-point logs.
inline int bisection_steps(double range, double eta) {
  require(range > 0.0 && eta > 0.0, ErrorKind::InvalidArgument, "bisection needs positive range and accuracy");
  int n = 0;
  for (double w = range; w > eta; w *= 0.5) ++n;
  return n;
}

struct NoisyValue {
  double estimate = 0.0;
  int queries = 0;
  bool saturated_low = false;   // every answer was "no": t_j may lie below lo
  bool saturated_high = false;  // every answer was "yes": t_j may lie above hi
};

/// Binary search over the threshold price on [lo, hi]; reports the midpoint of
/// the final bracket, so |estimate - t_j| <= eta / 2 whenever t_j is in [lo, hi].
inline NoisyValue noisy_value_query(BidderOracle& oracle, int item, double lo, double hi, double eta) {
  require(lo < hi, ErrorKind::InvalidArgument, "noisy value query needs lo < hi");
  const int steps = bisection_steps(hi - lo, eta);
  NoisyValue out;
  bool any_yes = false, any_no = false;
  for (int s = 0; s < steps; ++s) {
    const double mid = 0.5 * (lo + hi);
    if (oracle.answer({item, mid})) {
      lo = mid;
      any_yes = true;
    } else {
      hi = mid;
      any_no = true;
    }
  }
  out.estimate = 0.5 * (lo + hi);
  out.queries = steps;
  out.saturated_low = steps > 0 && !any_yes;
  out.saturated_high = steps > 0 && !any_no;
  return out;
}

struct DiagDominance {
  double alpha = 0.0;  // min over rows of |C_ii| - sum_{j != i} |C_ij|
  double beta = 0.0;   // min over columns of |C_jj| - sum_{i != j} |C_ij|
  int worst_row = 0;
  int worst_col = 0;
};

inline DiagDominance diag_dominance_params(const Mat& c) {
  require(c.rows() == c.cols() && c.rows() > 0, ErrorKind::InvalidArgument, "diagonal dominance needs a square matrix");
  DiagDominance d{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(), 0, 0};
  const Mat abs = c.cwiseAbs();
  for (Eigen::Index i = 0; i < c.rows(); ++i) {
    const double row = abs(i, i) - (abs.row(i).sum() - abs(i, i));
    const double col = abs(i, i) - (abs.col(i).sum() - abs(i, i));
    if (row < d.alpha) {
      d.alpha = row;
      d.worst_row = static_cast<int>(i);
    }
    if (col < d.beta) {
      d.beta = col;
      d.worst_col = static_cast<int>(i);
    }
  }
  return d;
}

struct QueryPlan {
  Setting setting = Setting::Separable;
  /// Structured block rows (deterministic settings, in block order) or the subset S.
  std::vector<int> rows;
  double eta = 1e-3;
  double eps = 1e-3;
  /// Tr(Sigma_S) for the Gaussian setting, sum of Var[theta_i] over S for weak dependence.
  double design_energy = std::numeric_limits<double>::quiet_NaN();
};

/// Validates the plan against A and returns the rows that define Q.
inline std::vector<int> select_query_rows(const DesignMatrix& a, const QueryPlan& plan) {
  const auto k = a.latent_dim();
  std::set<int> seen;
  for (int r : plan.rows) {
    require(r >= 0 && r < a.items(), ErrorKind::InvalidArgument, "query row " + std::to_string(r) + " out of range");
    require(seen.insert(r).second, ErrorKind::InvalidArgument, "query row " + std::to_string(r) + " repeated");
  }
  if (is_deterministic(plan.setting)) {
    require(static_cast<Eigen::Index>(plan.rows.size()) == k, ErrorKind::InvalidArgument,
            "deterministic settings query exactly k rows");
    const Mat c = a.select_rows(plan.rows);
    if (plan.setting == Setting::Separable)
      require((c - Mat::Identity(k, k)).cwiseAbs().maxCoeff() == 0.0, ErrorKind::InvalidArgument,
              "separable plan: selected block is not the identity");
    const DiagDominance d = diag_dominance_params(c);
    if (!(d.alpha > 0.0))
      fail(ErrorKind::NotDiagonallyDominant,
           "row " + std::to_string(d.worst_row) + " margin " + std::to_string(d.alpha) + " <= 0");
    if (!(d.beta > 0.0))
      fail(ErrorKind::NotDiagonallyDominant,
           "column " + std::to_string(d.worst_col) + " margin " + std::to_string(d.beta) + " <= 0");
  } else {
    require(static_cast<Eigen::Index>(plan.rows.size()) >= k, ErrorKind::InvalidArgument,
            "ex-ante settings need |S| >= k rows");
  }
  return plan.rows;
}

/// argmin_z ||Bz - y||_2 via column-pivoted Householder QR.
inline Vec least_squares_recover(const Mat& b, const Vec& y) {
  require(b.rows() == y.size(), ErrorKind::DimensionMismatch, "least squares: B and y disagree on row count");
  require(b.rows() >= b.cols() && b.cols() > 0, ErrorKind::RankDeficient, "least squares: fewer rows than unknowns");
  const Vec sv = Eigen::JacobiSVD<Mat>(b).singularValues();
  if (!(sv(0) > 0.0) || !(sv(sv.size() - 1) > 1e-10 * sv(0)))
    fail(ErrorKind::RankDeficient, "query rows do not identify z (sigma_min/sigma_max below 1e-10)");
  return b.colPivHouseholderQr().solve(y);
}

/// ||zhat - z||_inf <= 2 max_j |C_jj| / (alpha beta) * (eps + eta).
inline double deterministic_error_bound(const Mat& c, double eps, double eta) {
  const DiagDominance d = diag_dominance_params(c);
  return 2.0 * c.diagonal().cwiseAbs().maxCoeff() / (d.alpha * d.beta) * (eps + eta);
}

/// ||zhat - z||_inf <= 32 sqrt(|S| k) / sqrt(energy) * (eps + eta), where energy is
/// Tr(Sigma_S) (Gaussian) or sum_{i in S} Var[theta_i] (weak dependence).
inline double ex_ante_error_bound(std::size_t rows, Eigen::Index k, double energy, double eps, double eta) {
  require(energy > 0.0, ErrorKind::InvalidArgument, "ex-ante bound needs positive design energy");
  return 32.0 * std::sqrt(static_cast<double>(rows) * static_cast<double>(k)) / std::sqrt(energy) * (eps + eta);
}

inline double recovery_error_bound(const DesignMatrix& a, const QueryPlan& plan) {
  if (is_deterministic(plan.setting)) return deterministic_error_bound(a.select_rows(plan.rows), plan.eps, plan.eta);
  return ex_ante_error_bound(plan.rows.size(), a.latent_dim(), plan.design_energy, plan.eps, plan.eta);
}

struct Transcript {
  std::vector<int> rows;
  std::vector<double> y_hat;
  std::size_t total_queries = 0;
  int queries_per_row = 0;
  double range_lo = 0.0;
  double range_hi = 0.0;
  double eta = 0.0;
  int saturated = 0;  // rows whose answers never changed direction
};

struct RecoveryResult {
  Vec z_hat;
  Transcript transcript;
  double delta_out = 0.0;
};

/// Search range [-(||A||_inf + eps + eta), ||A||_inf + eps + eta] for every queried item.
inline double value_query_half_width(const DesignMatrix& a, const QueryPlan& plan) {
  return a.inf_norm() + plan.eps + plan.eta;
}

/// Validated plan with the query block and its factorization cached, for
/// running the same protocol against many bidders.
class QueryProtocol {
 public:
  QueryProtocol(const DesignMatrix& a, QueryPlan plan) : plan_(std::move(plan)) {
    require(plan_.eta > 0.0 && plan_.eps >= 0.0, ErrorKind::InvalidArgument, "protocol needs eta > 0 and eps >= 0");
    rows_ = select_query_rows(a, plan_);
    block_ = a.select_rows(rows_);
    const Vec sv = Eigen::JacobiSVD<Mat>(block_).singularValues();
    if (!(sv(0) > 0.0) || !(sv(sv.size() - 1) > 1e-10 * sv(0)))
      fail(ErrorKind::RankDeficient, "query rows do not identify z (sigma_min/sigma_max below 1e-10)");
    qr_ = block_.colPivHouseholderQr();
    half_width_ = value_query_half_width(a, plan_);
    queries_per_row_ = bisection_steps(2.0 * half_width_, plan_.eta);
    delta_out_ = recovery_error_bound(a, plan_);
  }

  RecoveryResult run(BidderOracle& oracle) const {
    RecoveryResult r;
    Transcript& tr = r.transcript;
    tr.rows = rows_;
    tr.range_lo = -half_width_;
    tr.range_hi = half_width_;
    tr.eta = plan_.eta;
    tr.queries_per_row = queries_per_row_;
    Vec y(static_cast<Eigen::Index>(rows_.size()));
    for (std::size_t i = 0; i < rows_.size(); ++i) {
      const NoisyValue nv = noisy_value_query(oracle, rows_[i], -half_width_, half_width_, plan_.eta);
      y(static_cast<Eigen::Index>(i)) = nv.estimate;
      tr.total_queries += static_cast<std::size_t>(nv.queries);
      if (nv.saturated_low || nv.saturated_high) ++tr.saturated;
    }
    tr.y_hat.assign(y.data(), y.data() + y.size());
    r.z_hat = qr_.solve(y);
    r.delta_out = delta_out_;
    return r;
  }

  const QueryPlan& plan() const { return plan_; }
  const Mat& block() const { return block_; }
  double delta_out() const { return delta_out_; }
  int queries_per_row() const { return queries_per_row_; }
  std::size_t queries_per_bidder() const { return rows_.size() * static_cast<std::size_t>(queries_per_row_); }

 private:
  QueryPlan plan_;
  std::vector<int> rows_;
  Mat block_;
  Eigen::ColPivHouseholderQR<Mat> qr_;
  double half_width_ = 0.0;
  int queries_per_row_ = 0;
  double delta_out_ = 0.0;
};

inline RecoveryResult run_protocol(BidderOracle& oracle, const DesignMatrix& a, const QueryPlan& plan) {
  return QueryProtocol(a, plan).run(oracle);
}

}  // namespace latmech
