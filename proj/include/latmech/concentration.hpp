#pragma once

// Singular-value tools: extreme singular values, epsilon-nets on the sphere,
// Gaussian and weakly dependent random designs, and influence matrices of
// small discrete joints.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <unordered_map>
#include <vector>

#include "latmech/error.hpp"
#include "latmech/latent_model.hpp"
#include "latmech/random.hpp"

namespace latmech {

struct SpectralSummary {
  double sigma_max = 0.0;
  double sigma_min = 0.0;
};

/// Extreme singular values from the eigenvalues of the (cols x cols) Gram matrix.
inline SpectralSummary singular_extremes(const Mat& m) {
  require(m.cols() > 0 && m.allFinite(), ErrorKind::InvalidArgument, "singular_extremes needs finite entries");
  const Mat gram = m.transpose() * m;
  Eigen::SelfAdjointEigenSolver<Mat> es(gram, Eigen::EigenvaluesOnly);
  const Vec& ev = es.eigenvalues();  // ascending
  return {std::sqrt(std::max(ev(ev.size() - 1), 0.0)), std::sqrt(std::max(ev(0), 0.0))};
}

// ---------------------------------------------------------------------------
// epsilon-nets

inline constexpr int kMaxNetDimension = 4;

/// Net on S^{n-1} with covering radius < eps and |K| <= (3/eps)^n.
///
/// A regular grid on the faces of [-1,1]^n, pushed radially onto the sphere,
/// covers it within r0 (radial projection is 1-Lipschitz outside the unit
/// ball). Greedy packing over that grid with separation eps - r0 then covers
/// within eps, and the separation bounds the count by (1 + 2/(eps - r0))^n,
/// which r0 = eps(1-eps)/(2(3-eps)) keeps below (3/eps)^n.
inline std::vector<Vec> epsilon_net(int n, double eps) {
  require(n >= 1, ErrorKind::InvalidArgument, "net dimension must be >= 1");
  require(n <= kMaxNetDimension, ErrorKind::DimensionTooLarge, "epsilon nets are built for n <= 4");
  require(eps > 0.0 && eps < 1.0, ErrorKind::InvalidArgument, "net radius must lie in (0, 1)");
  if (n == 1) return {Vec::Constant(1, -1.0), Vec::Constant(1, 1.0)};

  const double r0 = 0.5 * eps * (1.0 - eps) / (3.0 - eps);
  const double sep = eps - r0;
  const double h_max = 2.0 * r0 / std::sqrt(static_cast<double>(n - 1));
  const int per_axis = static_cast<int>(std::ceil(2.0 / h_max)) + 1;
  const double h = 2.0 / static_cast<double>(per_axis - 1);

  // Spatial hash of selected centers with cell width `sep`.
  const int cells = static_cast<int>(std::ceil(2.0 / sep)) + 2;
  auto cell_of = [&](double x) { return std::clamp(static_cast<int>(std::floor((x + 1.0) / sep)), 0, cells - 1); };
  std::unordered_map<std::int64_t, std::vector<int>> buckets;
  std::vector<Vec> centers;
  std::vector<int> key(static_cast<std::size_t>(n));

  auto encode = [&](const std::vector<int>& c) {
    std::int64_t k = 0;
    for (int v : c) k = k * cells + v;
    return k;
  };

  auto try_add = [&](const Vec& p) {
    for (int d = 0; d < n; ++d) key[static_cast<std::size_t>(d)] = cell_of(p(d));
    std::vector<int> probe(static_cast<std::size_t>(n));
    const int neighborhoods = static_cast<int>(std::pow(3, n));
    for (int code = 0; code < neighborhoods; ++code) {
      int rem = code;
      bool valid = true;
      for (int d = 0; d < n; ++d) {
        const int c = key[static_cast<std::size_t>(d)] + rem % 3 - 1;
        rem /= 3;
        if (c < 0 || c >= cells) valid = false;
        probe[static_cast<std::size_t>(d)] = c;
      }
      if (!valid) continue;
      auto it = buckets.find(encode(probe));
      if (it == buckets.end()) continue;
      for (int idx : it->second)
        if ((centers[static_cast<std::size_t>(idx)] - p).norm() < sep) return;
    }
    buckets[encode(key)].push_back(static_cast<int>(centers.size()));
    centers.push_back(p);
  };

  // Enumerate face grids: coordinate `axis` fixed at `sign`, the rest on the grid.
  std::vector<int> counter(static_cast<std::size_t>(n - 1));
  Vec p(n);
  for (int axis = 0; axis < n; ++axis) {
    for (double sign : {-1.0, 1.0}) {
      std::fill(counter.begin(), counter.end(), 0);
      for (;;) {
        int c = 0;
        for (int d = 0; d < n; ++d) p(d) = d == axis ? sign : -1.0 + h * counter[static_cast<std::size_t>(c++)];
        try_add(p / p.norm());
        int d = 0;
        while (d < n - 1 && ++counter[static_cast<std::size_t>(d)] == per_axis) counter[static_cast<std::size_t>(d++)] = 0;
        if (d == n - 1) break;
      }
    }
  }
  return centers;
}

struct NetSandwich {
  double upper_sigma_max = 0.0;  // a / (1 - eps)
  double lower_sigma_min = 0.0;  // b - eps a / (1 - eps)
};

inline NetSandwich net_sandwich(const Mat& m, const std::vector<Vec>& net, double eps) {
  require(!net.empty(), ErrorKind::InvalidArgument, "net_sandwich needs a nonempty net");
  require(eps > 0.0 && eps < 1.0, ErrorKind::InvalidArgument, "net radius must lie in (0, 1)");
  double a = 0.0, b = std::numeric_limits<double>::infinity();
  for (const auto& x : net) {
    require(x.size() == m.cols(), ErrorKind::DimensionMismatch, "net point dimension does not match matrix columns");
    const double v = (m * x).norm();
    a = std::max(a, v);
    b = std::min(b, v);
  }
  return {a / (1.0 - eps), b - eps * a / (1.0 - eps)};
}

// ---------------------------------------------------------------------------
// Gaussian designs

class GaussianDesignSpec {
 public:
  explicit GaussianDesignSpec(Mat covariance) : cov_(std::move(covariance)) {
    require(cov_.rows() == cov_.cols() && cov_.rows() > 0, ErrorKind::InvalidArgument, "covariance must be square");
    require(cov_.allFinite() && (cov_ - cov_.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + cov_.cwiseAbs().maxCoeff()),
            ErrorKind::NotPSD, "covariance must be finite and symmetric");
    const bool diagonal = (cov_ - Mat(cov_.diagonal().asDiagonal())).cwiseAbs().maxCoeff() == 0.0;
    if (diagonal) {
      // Exact spectral data; keeps integer trace/rho comparisons exact.
      eigenvalues_ = cov_.diagonal();
      eigenvectors_ = Mat::Identity(cov_.rows(), cov_.cols());
    } else {
      Eigen::SelfAdjointEigenSolver<Mat> es(cov_);
      eigenvalues_ = es.eigenvalues();
      eigenvectors_ = es.eigenvectors();
    }
    const double scale = std::max(1.0, eigenvalues_.cwiseAbs().maxCoeff());
    if (eigenvalues_.minCoeff() < -1e-10 * scale) fail(ErrorKind::NotPSD, "covariance has a negative eigenvalue");
    eigenvalues_ = eigenvalues_.cwiseMax(0.0);
    trace_ = cov_.trace();
    rho_ = eigenvalues_.maxCoeff();
    factor_ = eigenvectors_ * eigenvalues_.cwiseSqrt().asDiagonal();
  }

  static GaussianDesignSpec identity(Eigen::Index dim) { return GaussianDesignSpec(Mat::Identity(dim, dim)); }

  Eigen::Index dim() const { return cov_.rows(); }
  const Mat& covariance() const { return cov_; }
  const Vec& eigenvalues() const { return eigenvalues_; }
  double trace() const { return trace_; }
  double rho() const { return rho_; }
  const Mat& factor() const { return factor_; }

  /// Tr(Sigma_S) / rho(Sigma_S) > 64k
  bool admissible(Eigen::Index k) const { return rho_ > 0.0 && trace_ / rho_ > 64.0 * static_cast<double>(k); }

 private:
  Mat cov_;
  Vec eigenvalues_;
  Mat eigenvectors_;
  Mat factor_;
  double trace_ = 0.0;
  double rho_ = 0.0;
};

/// dim x k matrix with i.i.d. N(0, Sigma) columns.
inline Mat gaussian_design_sample(const GaussianDesignSpec& spec, Eigen::Index k, Rng& rng) {
  Mat g(spec.dim(), k);
  for (Eigen::Index c = 0; c < k; ++c)
    for (Eigen::Index r = 0; r < spec.dim(); ++r) g(r, c) = rng.normal();
  return spec.factor() * g;
}

struct ConcentrationReport {
  std::vector<double> sigma_max;
  std::vector<double> sigma_min;
  double upper_bound = 0.0;  // bound on sigma_max
  double lower_bound = 0.0;  // bound on sigma_min
  int upper_violations = 0;
  int lower_violations = 0;
  int trials_violating = 0;
  /// Analytic per-trial failure probability bounds (capped at 1).
  double failure_bound = 0.0;
  double failure_bound_alt = 0.0;
  bool admissible = false;

  std::size_t trials() const { return sigma_max.size(); }
};

namespace detail {
inline void record_trial(ConcentrationReport& rep, const SpectralSummary& s) {
  rep.sigma_max.push_back(s.sigma_max);
  rep.sigma_min.push_back(s.sigma_min);
  const bool hi = s.sigma_max > rep.upper_bound;
  const bool lo = s.sigma_min < rep.lower_bound;
  rep.upper_violations += hi;
  rep.lower_violations += lo;
  rep.trials_violating += hi || lo;
}
}  // namespace detail

/// sigma_max(U) <= 2 sqrt(Tr D), sigma_min(U) >= sqrt(Tr D) / 4, failing with
/// probability at most 2 exp(-Tr D / (8 d_max) + 4k); the alternative form
/// 2 exp(-Tr / (16 rho)) is reported alongside.
inline ConcentrationReport check_gaussian_concentration(const GaussianDesignSpec& spec, Eigen::Index k, int trials,
                                                        Rng& rng) {
  ConcentrationReport rep;
  const double tr = spec.trace();
  rep.upper_bound = 2.0 * std::sqrt(tr);
  rep.lower_bound = std::sqrt(tr) / 4.0;
  rep.admissible = spec.admissible(k);
  if (spec.rho() > 0.0) {
    rep.failure_bound = std::min(1.0, 2.0 * std::exp(-tr / (8.0 * spec.rho()) + 4.0 * static_cast<double>(k)));
    rep.failure_bound_alt = std::min(1.0, 2.0 * std::exp(-tr / (16.0 * spec.rho())));
  } else {
    rep.failure_bound = rep.failure_bound_alt = 1.0;
  }
  for (int t = 0; t < trials; ++t) detail::record_trial(rep, singular_extremes(gaussian_design_sample(spec, k, rng)));
  return rep;
}

// ---------------------------------------------------------------------------
// Finite joints and influence matrices

inline constexpr int kMaxJointDims = 8;
inline constexpr int kMaxSupport = 8;
inline constexpr std::size_t kMaxJointTable = std::size_t{1} << 22;

/// Explicit joint table of a discrete random vector; the last coordinate varies fastest.
class FiniteJoint {
 public:
  FiniteJoint() = default;
  FiniteJoint(std::vector<std::vector<double>> values, std::vector<double> probs)
      : values_(std::move(values)), probs_(std::move(probs)) {
    require(!values_.empty() && static_cast<int>(values_.size()) <= kMaxJointDims, ErrorKind::TooLarge,
            "finite joints support 1..8 coordinates");
    std::size_t total = 1;
    strides_.assign(values_.size(), 1);
    for (const auto& v : values_)
      require(!v.empty() && static_cast<int>(v.size()) <= kMaxSupport, ErrorKind::TooLarge, "support sizes must be 1..8");
    for (std::size_t d = values_.size(); d-- > 0;) {
      strides_[d] = total;
      total *= values_[d].size();
    }
    require(total <= kMaxJointTable, ErrorKind::TooLarge, "joint table too large");
    require(probs_.size() == total, ErrorKind::DimensionMismatch, "joint table size does not match supports");
    double s = 0.0;
    for (double p : probs_) {
      require(p >= 0.0 && std::isfinite(p), ErrorKind::InvalidArgument, "joint probabilities must be >= 0");
      s += p;
    }
    require(std::abs(s - 1.0) < 1e-9, ErrorKind::InvalidArgument, "joint probabilities must sum to 1");
  }

  /// Product of independent marginals.
  static FiniteJoint product(const std::vector<std::vector<double>>& values,
                             const std::vector<std::vector<double>>& marginals) {
    std::vector<double> probs{1.0};
    for (const auto& m : marginals) {
      std::vector<double> next;
      next.reserve(probs.size() * m.size());
      for (double p : probs)
        for (double q : m) next.push_back(p * q);
      probs = std::move(next);
    }
    return FiniteJoint(values, std::move(probs));
  }

  int dims() const { return static_cast<int>(values_.size()); }
  int support(int d) const { return static_cast<int>(values_[static_cast<std::size_t>(d)].size()); }
  std::size_t stride(int d) const { return strides_[static_cast<std::size_t>(d)]; }
  const std::vector<double>& values(int d) const { return values_[static_cast<std::size_t>(d)]; }
  const std::vector<double>& probs() const { return probs_; }
  std::size_t table_size() const { return probs_.size(); }
  int coordinate(std::size_t flat, int d) const {
    return static_cast<int>((flat / strides_[static_cast<std::size_t>(d)]) % values_[static_cast<std::size_t>(d)].size());
  }

  Vec means() const {
    Vec mu = Vec::Zero(dims());
    for (std::size_t f = 0; f < probs_.size(); ++f)
      for (int d = 0; d < dims(); ++d) mu(d) += probs_[f] * values(d)[static_cast<std::size_t>(coordinate(f, d))];
    return mu;
  }

  Vec variances() const {
    const Vec mu = means();
    Vec var = Vec::Zero(dims());
    for (std::size_t f = 0; f < probs_.size(); ++f)
      for (int d = 0; d < dims(); ++d) {
        const double x = values(d)[static_cast<std::size_t>(coordinate(f, d))] - mu(d);
        var(d) += probs_[f] * x * x;
      }
    return var;
  }

  double max_abs_value() const {
    double c = 0.0;
    for (const auto& v : values_)
      for (double x : v) c = std::max(c, std::abs(x));
    return c;
  }

 private:
  std::vector<std::vector<double>> values_;
  std::vector<double> probs_;
  std::vector<std::size_t> strides_;
};

struct InfluenceResult {
  Mat matrix;
  double norm = 0.0;  // spectral norm
};

/// alpha_{i,j} = sup over x_{-i-j} and x_j != x'_j of the total variation
/// distance between the conditionals of X_i; conditioning events of zero
/// probability are skipped and alpha_{i,i} = 0.
inline InfluenceResult influence_matrix(const FiniteJoint& joint) {
  const int d = joint.dims();
  Mat inf = Mat::Zero(d, d);
  const auto& p = joint.probs();
  std::vector<double> ca, cb;
  for (int i = 0; i < d; ++i) {
    const int si = joint.support(i);
    ca.resize(static_cast<std::size_t>(si));
    cb.resize(static_cast<std::size_t>(si));
    for (int j = 0; j < d; ++j) {
      if (i == j) continue;
      const int sj = joint.support(j);
      double alpha = 0.0;
      for (std::size_t base = 0; base < joint.table_size(); ++base) {
        if (joint.coordinate(base, i) != 0 || joint.coordinate(base, j) != 0) continue;
        for (int a = 0; a < sj; ++a) {
          double ta = 0.0;
          for (int v = 0; v < si; ++v) ta += ca[static_cast<std::size_t>(v)] = p[base + v * joint.stride(i) + a * joint.stride(j)];
          if (ta <= 0.0) continue;
          for (int b = a + 1; b < sj; ++b) {
            double tb = 0.0;
            for (int v = 0; v < si; ++v) tb += cb[static_cast<std::size_t>(v)] = p[base + v * joint.stride(i) + b * joint.stride(j)];
            if (tb <= 0.0) continue;
            double tv = 0.0;
            for (int v = 0; v < si; ++v) tv += std::abs(ca[static_cast<std::size_t>(v)] / ta - cb[static_cast<std::size_t>(v)] / tb);
            alpha = std::max(alpha, 0.5 * tv);
          }
        }
      }
      inf(i, j) = alpha;
    }
  }
  const double norm = d == 0 ? 0.0 : Eigen::JacobiSVD<Mat>(inf).singularValues()(0);
  return {inf, norm};
}

/// Joint of n independent copies of `joint` (copy-major coordinate order).
inline FiniteJoint independent_copies(const FiniteJoint& joint, int n) {
  require(n >= 1, ErrorKind::InvalidArgument, "need at least one copy");
  require(n * joint.dims() <= kMaxJointDims, ErrorKind::TooLarge, "n * d must be <= 8 for exhaustive enumeration");
  double size = 1.0;
  for (int c = 0; c < n; ++c) size *= static_cast<double>(joint.table_size());
  require(size <= static_cast<double>(kMaxJointTable), ErrorKind::TooLarge, "product table too large");
  std::vector<std::vector<double>> values;
  for (int c = 0; c < n; ++c)
    for (int d = 0; d < joint.dims(); ++d) values.push_back(joint.values(d));
  std::vector<double> probs{1.0};
  for (int c = 0; c < n; ++c) {
    std::vector<double> next;
    next.reserve(probs.size() * joint.table_size());
    for (double a : probs)
      for (double b : joint.probs()) next.push_back(a * b);
    probs = std::move(next);
  }
  return FiniteJoint(std::move(values), std::move(probs));
}

struct TensorizationReport {
  bool passed = false;
  double max_entry_diff = 0.0;
  double norm_single = 0.0;
  double norm_copies = 0.0;
};

/// INF of n independent copies must equal I_n (x) INF(X), with equal spectral norms.
inline TensorizationReport tensorization_check(const FiniteJoint& joint, int n, double tol = 1e-10) {
  const FiniteJoint copies = independent_copies(joint, n);
  const InfluenceResult single = influence_matrix(joint);
  const InfluenceResult many = influence_matrix(copies);
  const int d = joint.dims();
  Mat expected = Mat::Zero(n * d, n * d);
  for (int c = 0; c < n; ++c) expected.block(c * d, c * d, d, d) = single.matrix;
  TensorizationReport r;
  r.max_entry_diff = (many.matrix - expected).cwiseAbs().maxCoeff();
  r.norm_single = single.norm;
  r.norm_copies = many.norm;
  r.passed = r.max_entry_diff <= tol && std::abs(r.norm_single - r.norm_copies) <= tol;
  return r;
}

// ---------------------------------------------------------------------------
// Weakly dependent designs

using VectorSampler = std::function<Vec(Rng&)>;

/// Exact draws from a joint table.
inline VectorSampler joint_sampler(const FiniteJoint& joint) {
  std::vector<double> cdf(joint.table_size());
  std::partial_sum(joint.probs().begin(), joint.probs().end(), cdf.begin());
  return [joint, cdf = std::move(cdf)](Rng& rng) {
    const double u = rng.uniform() * cdf.back();
    const auto flat = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
    const std::size_t f = std::min(flat, cdf.size() - 1);
    Vec x(joint.dims());
    for (int d = 0; d < joint.dims(); ++d) x(d) = joint.values(d)[static_cast<std::size_t>(joint.coordinate(f, d))];
    return x;
  };
}

/// Concatenation of `copies` independent draws from `base` (dimension copies * base dim).
inline VectorSampler tiled_sampler(VectorSampler base, Eigen::Index base_dim, int copies) {
  return [base = std::move(base), base_dim, copies](Rng& rng) {
    Vec x(base_dim * copies);
    for (int c = 0; c < copies; ++c) x.segment(c * base_dim, base_dim) = base(rng);
    return x;
  };
}

/// i.i.d. uniform signs times c.
inline VectorSampler rademacher_sampler(Eigen::Index dim, double c = 1.0) {
  return [dim, c](Rng& rng) {
    Vec x(dim);
    for (Eigen::Index i = 0; i < dim; ++i) x(i) = (rng() >> 63) ? c : -c;
    return x;
  };
}

struct WeakDependenceSpec {
  VectorSampler sampler;
  Vec variances;            // v_i^2
  double bound_c = 1.0;     // coordinates lie in [-c, c]
  double influence_norm = 0.0;

  Eigen::Index dim() const { return variances.size(); }
  double v() const { return std::sqrt(variances.sum()); }
  /// sum v_i^2 > 16 c^2 k sqrt(m) / (1 - ||INF||)
  bool admissible(Eigen::Index k) const {
    return influence_norm < 1.0 &&
           variances.sum() > 16.0 * bound_c * bound_c * static_cast<double>(k) * std::sqrt(static_cast<double>(dim())) /
                                 (1.0 - influence_norm);
  }
};

/// sigma_max(U) <= 2v, sigma_min(U) >= v/4 with v = sqrt(sum v_i^2), failing with
/// probability at most 2 exp(-(1 - ||INF||) v^4 / (32 c^4 k m) + 4k).
inline ConcentrationReport check_weakdep_concentration(const WeakDependenceSpec& spec, Eigen::Index k, int trials,
                                                       Rng& rng) {
  ConcentrationReport rep;
  const double v = spec.v();
  const double m = static_cast<double>(spec.dim());
  const double kk = static_cast<double>(k);
  rep.upper_bound = 2.0 * v;
  rep.lower_bound = v / 4.0;
  rep.admissible = spec.admissible(k);
  const double c4 = std::pow(spec.bound_c, 4);
  rep.failure_bound = (c4 > 0.0 && spec.influence_norm < 1.0)
                          ? std::min(1.0, 2.0 * std::exp(-(1.0 - spec.influence_norm) * std::pow(v, 4) / (32.0 * c4 * kk * m) + 4.0 * kk))
                          : 1.0;
  rep.failure_bound_alt = rep.failure_bound;
  Mat u(spec.dim(), k);
  for (int t = 0; t < trials; ++t) {
    for (Eigen::Index c = 0; c < k; ++c) {
      const Vec col = spec.sampler(rng);
      require(col.size() == spec.dim(), ErrorKind::DimensionMismatch, "sampler dimension does not match variances");
      u.col(c) = col;
    }
    detail::record_trial(rep, singular_extremes(u));
  }
  return rep;
}

}  // namespace latmech
