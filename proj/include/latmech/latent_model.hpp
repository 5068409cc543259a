#pragma once

// Matrix-factorization type model: design matrix, product latent priors with
// exact conditional-cube sampling, and constructive Prokhorov couplings.

#include <Eigen/Dense>
#include <algorithm>
#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "latmech/error.hpp"
#include "latmech/random.hpp"

namespace latmech {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// max_i sum_j |M_ij|
inline double inf_norm(const Mat& m) {
  if (m.size() == 0) return 0.0;
  return m.cwiseAbs().rowwise().sum().maxCoeff();
}

inline double inf_norm(const Vec& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

/// N x k archetype matrix. Columns are archetype item-value vectors.
class DesignMatrix {
 public:
  DesignMatrix() = default;

  explicit DesignMatrix(Mat entries) : entries_(std::move(entries)) {
    require(entries_.cols() >= 1 && entries_.rows() >= entries_.cols(), ErrorKind::InvalidArgument,
            "design matrix needs N >= k >= 1, got N=" + std::to_string(entries_.rows()) +
                ", k=" + std::to_string(entries_.cols()));
    require(entries_.allFinite(), ErrorKind::InvalidArgument, "design matrix has non-finite entries");
    inf_norm_ = latmech::inf_norm(entries_);
  }

  Eigen::Index items() const { return entries_.rows(); }
  Eigen::Index latent_dim() const { return entries_.cols(); }
  const Mat& entries() const { return entries_; }
  double inf_norm() const { return inf_norm_; }

  /// Rows indexed by `rows`, in that order.
  Mat select_rows(const std::vector<int>& rows) const {
    Mat b(static_cast<Eigen::Index>(rows.size()), latent_dim());
    for (std::size_t r = 0; r < rows.size(); ++r) b.row(static_cast<Eigen::Index>(r)) = entries_.row(rows[r]);
    return b;
  }

 private:
  Mat entries_;
  double inf_norm_ = 0.0;
};

inline double inf_norm(const DesignMatrix& a) { return a.inf_norm(); }

inline Vec apply_design(const DesignMatrix& a, const Vec& z) {
  require(z.size() == a.latent_dim(), ErrorKind::DimensionMismatch,
          "latent point has dimension " + std::to_string(z.size()) + ", design expects " +
              std::to_string(a.latent_dim()));
  return a.entries() * z;
}

// CSV layout: a comment line "# N,k" followed by N rows of k comma-separated values.
inline DesignMatrix read_design_csv(std::istream& in) {
  std::string line;
  long n = -1, k = -1;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (n < 0) {
        std::string body = line.substr(1);
        std::replace(body.begin(), body.end(), ',', ' ');
        std::istringstream hs(body);
        hs >> n >> k;
        if (!hs) n = k = -1;
      }
      continue;
    }
    std::vector<double> row;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        fail(ErrorKind::InvalidArgument, "design CSV: bad number '" + cell + "'");
      }
    }
    rows.push_back(std::move(row));
  }
  require(n > 0 && k > 0, ErrorKind::InvalidArgument, "design CSV: missing '# N,k' header");
  require(static_cast<long>(rows.size()) == n, ErrorKind::DimensionMismatch,
          "design CSV: header says N=" + std::to_string(n) + " but found " + std::to_string(rows.size()) + " rows");
  Mat m(n, k);
  for (long i = 0; i < n; ++i) {
    require(static_cast<long>(rows[i].size()) == k, ErrorKind::DimensionMismatch,
            "design CSV: row " + std::to_string(i) + " has " + std::to_string(rows[i].size()) + " columns");
    for (long j = 0; j < k; ++j) m(i, j) = rows[i][j];
  }
  return DesignMatrix(std::move(m));
}

inline DesignMatrix load_design_csv(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::InvalidArgument, "cannot open design CSV '" + path + "'");
  return read_design_csv(in);
}

inline void write_design_csv(std::ostream& out, const DesignMatrix& a) {
  out << "# " << a.items() << "," << a.latent_dim() << "\n";
  out << std::setprecision(17);
  for (Eigen::Index i = 0; i < a.items(); ++i) {
    for (Eigen::Index j = 0; j < a.latent_dim(); ++j) {
      if (j) out << ",";
      out << a.entries()(i, j);
    }
    out << "\n";
  }
}

inline void save_design_csv(const DesignMatrix& a, const std::string& path) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::InvalidArgument, "cannot write design CSV '" + path + "'");
  write_design_csv(out, a);
}

// ---------------------------------------------------------------------------
// Per-coordinate marginals on [0,1].
//
// Conditioning intervals are [lo, hi) intersected with [0,1]; when hi >= 1 the
// interval is closed at 1 so the cells of any grid partition [0,1] exactly.

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
  bool closed_hi = true;

  static Interval cell(double corner, double width) {
    const double hi = corner + width;
    return {std::max(corner, 0.0), std::min(hi, 1.0), hi >= 1.0};
  }
  bool contains(double x) const { return x >= lo && (closed_hi ? x <= hi : x < hi); }
};

struct UniformMarginal {
  double lo = 0.0;
  double hi = 1.0;

  void validate() const {
    require(0.0 <= lo && lo < hi && hi <= 1.0, ErrorKind::InvalidArgument, "uniform marginal needs 0 <= lo < hi <= 1");
  }
  double cdf(double x) const { return std::clamp((x - lo) / (hi - lo), 0.0, 1.0); }
  double quantile(double u) const { return lo + std::clamp(u, 0.0, 1.0) * (hi - lo); }
  double mean() const { return 0.5 * (lo + hi); }
  double mass(const Interval& iv) const { return std::max(0.0, cdf(iv.hi) - cdf(iv.lo)); }
  double sample(const Interval& iv, Rng& rng) const {
    const double a = std::max(iv.lo, lo), b = std::min(iv.hi, hi);
    return a + rng.uniform() * (b - a);
  }
};

/// N(mean, sd^2) truncated to [0,1].
struct TruncatedGaussianMarginal {
  double mu = 0.5;
  double sd = 0.25;

  void validate() const {
    require(std::isfinite(mu) && sd > 0.0 && std::isfinite(sd), ErrorKind::InvalidArgument,
            "truncated Gaussian needs finite mean and sd > 0");
    require(mass_standard(-mu / sd, (1.0 - mu) / sd) > 0.0, ErrorKind::InvalidArgument,
            "truncated Gaussian has no mass on [0,1]");
  }

  double cdf(double x) const {
    const double a = -mu / sd, b = (1.0 - mu) / sd;
    const double xs = (std::clamp(x, 0.0, 1.0) - mu) / sd;
    return std::clamp(mass_standard(a, xs) / mass_standard(a, b), 0.0, 1.0);
  }

  double quantile(double u) const { return sample_standard(-mu / sd, (1.0 - mu) / sd, std::clamp(u, 0.0, 1.0)); }

  double mean() const {
    const double a = -mu / sd, b = (1.0 - mu) / sd;
    return mu + sd * (pdf(a) - pdf(b)) / mass_standard(a, b);
  }

  double mass(const Interval& iv) const {
    const double a = std::max(iv.lo, 0.0), b = std::min(iv.hi, 1.0);
    if (b <= a) return 0.0;
    return mass_standard((a - mu) / sd, (b - mu) / sd) / mass_standard(-mu / sd, (1.0 - mu) / sd);
  }

  double sample(const Interval& iv, Rng& rng) const {
    const double a = std::max(iv.lo, 0.0), b = std::min(iv.hi, 1.0);
    const double x = sample_standard((a - mu) / sd, (b - mu) / sd, rng.uniform());
    return std::clamp(x, a, b);
  }

 private:
  static const boost::math::normal& unit() {
    static const boost::math::normal n(0.0, 1.0);
    return n;
  }
  static double pdf(double x) { return boost::math::pdf(unit(), x); }
  // P(a <= Z <= b) evaluated in whichever tail keeps precision.
  static double mass_standard(double a, double b) {
    if (b <= a) return 0.0;
    if (a > 0.0) return boost::math::cdf(boost::math::complement(unit(), a)) -
                        boost::math::cdf(boost::math::complement(unit(), b));
    return boost::math::cdf(unit(), b) - boost::math::cdf(unit(), a);
  }
  // Inverse-CDF draw of Z conditioned on [a, b], mapped back to the original scale.
  double sample_standard(double a, double b, double u) const {
    double z;
    if (a > 0.0) {
      const double qa = boost::math::cdf(boost::math::complement(unit(), a));
      const double qb = boost::math::cdf(boost::math::complement(unit(), b));
      const double q = qa - u * (qa - qb);
      z = q <= 0.0 ? b : (q >= 1.0 ? a : boost::math::quantile(boost::math::complement(unit(), q)));
    } else {
      const double pa = boost::math::cdf(unit(), a);
      const double pb = boost::math::cdf(unit(), b);
      const double p = pa + u * (pb - pa);
      z = p <= 0.0 ? a : (p >= 1.0 ? b : boost::math::quantile(unit(), p));
    }
    return mu + sd * std::clamp(z, a, b);
  }
};

/// Finite support: sorted atoms in [0,1] with positive weights summing to 1.
struct GridMarginal {
  std::vector<double> values;
  std::vector<double> probs;

  void validate() const {
    require(!values.empty() && values.size() == probs.size(), ErrorKind::InvalidArgument,
            "grid marginal needs matching nonempty values/probs");
    double total = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
      require(values[i] >= 0.0 && values[i] <= 1.0, ErrorKind::InvalidArgument, "grid atom outside [0,1]");
      require(probs[i] >= 0.0, ErrorKind::InvalidArgument, "grid probability negative");
      require(i == 0 || values[i] > values[i - 1], ErrorKind::InvalidArgument, "grid atoms must be strictly increasing");
      total += probs[i];
    }
    require(std::abs(total - 1.0) < 1e-9, ErrorKind::InvalidArgument, "grid probabilities must sum to 1");
  }

  double cdf(double x) const {
    double c = 0.0;
    for (std::size_t i = 0; i < values.size() && values[i] <= x; ++i) c += probs[i];
    return std::min(c, 1.0);
  }

  double quantile(double u) const {
    double c = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
      c += probs[i];
      if (probs[i] > 0.0 && c >= u) return values[i];
    }
    return values.back();
  }

  double mean() const { return std::inner_product(values.begin(), values.end(), probs.begin(), 0.0); }

  double mass(const Interval& iv) const {
    double m = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i)
      if (iv.contains(values[i])) m += probs[i];
    return m;
  }

  double sample(const Interval& iv, Rng& rng) const {
    const double target = rng.uniform() * mass(iv);
    double c = 0.0;
    double last = iv.lo;
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (!iv.contains(values[i]) || probs[i] <= 0.0) continue;
      c += probs[i];
      last = values[i];
      if (target < c) return values[i];
    }
    return last;
  }
};

inline GridMarginal point_mass(double v) { return GridMarginal{{v}, {1.0}}; }

using Marginal = std::variant<UniformMarginal, TruncatedGaussianMarginal, GridMarginal>;

inline double marginal_cdf(const Marginal& m, double x) {
  return std::visit([x](const auto& d) { return d.cdf(x); }, m);
}
inline double marginal_quantile(const Marginal& m, double u) {
  return std::visit([u](const auto& d) { return d.quantile(u); }, m);
}
inline double marginal_mean(const Marginal& m) {
  return std::visit([](const auto& d) { return d.mean(); }, m);
}

/// Latent prior on [0,1]^k. Either a product of per-coordinate marginals
/// (exact conditional sampling) or a plug-in sampler handled by rejection.
class LatentPrior {
 public:
  using Sampler = std::function<Vec(Rng&)>;
  static constexpr int kRejectionCap = 100000;

  LatentPrior() = default;

  explicit LatentPrior(std::vector<Marginal> marginals) : marginals_(std::move(marginals)) {
    require(!marginals_.empty(), ErrorKind::InvalidArgument, "latent prior needs k >= 1");
    for (const auto& m : marginals_) std::visit([](const auto& d) { d.validate(); }, m);
    dim_ = static_cast<Eigen::Index>(marginals_.size());
  }

  static LatentPrior product(Eigen::Index k, const Marginal& m) {
    return LatentPrior(std::vector<Marginal>(static_cast<std::size_t>(k), m));
  }
  static LatentPrior uniform(Eigen::Index k) { return product(k, UniformMarginal{}); }

  /// Non-product prior given only by a sampler; samples must lie in [0,1]^k.
  static LatentPrior from_sampler(Eigen::Index k, Sampler sampler) {
    require(k >= 1 && static_cast<bool>(sampler), ErrorKind::InvalidArgument, "sampler prior needs k >= 1 and a sampler");
    LatentPrior p;
    p.dim_ = k;
    p.sampler_ = std::move(sampler);
    return p;
  }

  Eigen::Index dim() const { return dim_; }
  bool is_product() const { return !sampler_; }
  const std::vector<Marginal>& marginals() const { return marginals_; }

  Vec sample(Rng& rng) const {
    if (!is_product()) return checked(sampler_(rng));
    Vec z(dim_);
    for (Eigen::Index j = 0; j < dim_; ++j) z(j) = marginal_quantile_draw(marginals_[j], rng);
    return z;
  }

  /// Draw from the prior conditioned on the cube prod_j [x_j, x_j + delta)
  /// intersected with [0,1]^k. Throws EmptyMass if the cube has no mass.
  Vec conditional_cube_sample(const Vec& corner, double delta, Rng& rng) const {
    require(corner.size() == dim_, ErrorKind::DimensionMismatch, "cube corner dimension mismatch");
    require(delta > 0.0, ErrorKind::InvalidArgument, "cube width must be positive");
    if (!is_product()) return rejection_sample(corner, delta, rng);
    Vec z(dim_);
    for (Eigen::Index j = 0; j < dim_; ++j) {
      const Interval iv = Interval::cell(corner(j), delta);
      const auto& m = marginals_[j];
      const double mass = std::visit([&](const auto& d) { return d.mass(iv); }, m);
      if (!(mass > 0.0) || iv.hi < iv.lo)
        fail(ErrorKind::EmptyMass, "cube coordinate " + std::to_string(j) + " has zero prior mass");
      z(j) = std::visit([&](const auto& d) { return d.sample(iv, rng); }, m);
    }
    return z;
  }

  /// Probability of the cube (product priors only).
  double cube_mass(const Vec& corner, double delta) const {
    require(is_product(), ErrorKind::InvalidArgument, "cube mass needs a product prior");
    double p = 1.0;
    for (Eigen::Index j = 0; j < dim_; ++j) {
      const Interval iv = Interval::cell(corner(j), delta);
      p *= std::visit([&](const auto& d) { return d.mass(iv); }, marginals_[j]);
    }
    return p;
  }

 private:
  static double marginal_quantile_draw(const Marginal& m, Rng& rng) {
    return std::visit([&](const auto& d) { return d.sample(Interval{}, rng); }, m);
  }

  Vec checked(Vec z) const {
    require(z.size() == dim_, ErrorKind::DimensionMismatch, "sampler returned wrong dimension");
    require((z.array() >= 0.0).all() && (z.array() <= 1.0).all(), ErrorKind::InvalidArgument,
            "sampler returned a point outside [0,1]^k");
    return z;
  }

  Vec rejection_sample(const Vec& corner, double delta, Rng& rng) const {
    for (int attempt = 0; attempt < kRejectionCap; ++attempt) {
      Vec z = checked(sampler_(rng));
      bool inside = true;
      for (Eigen::Index j = 0; j < dim_ && inside; ++j) inside = Interval::cell(corner(j), delta).contains(z(j));
      if (inside) return z;
    }
    fail(ErrorKind::EmptyMass, "rejection sampling found no draw in the cube after " + std::to_string(kRejectionCap) +
                                   " attempts");
  }

  std::vector<Marginal> marginals_;
  Sampler sampler_;
  Eigen::Index dim_ = 0;
};

inline Vec sample_latent(const LatentPrior& prior, Rng& rng) { return prior.sample(rng); }

inline Vec conditional_cube_sample(const LatentPrior& prior, const Vec& corner, double delta, Rng& rng) {
  return prior.conditional_cube_sample(corner, delta, rng);
}

// ---------------------------------------------------------------------------
// Prokhorov couplings

/// Forward construction of a distribution within l_inf-Prokhorov distance
/// eps1 of A o prior: t = Az + eta with ||eta||_inf <= eps1, except with
/// probability jump_probability where t = Az + uniform[-cap, cap]^N.
struct ProkhorovKernel {
  double eps1 = 0.0;
  double jump_probability = 0.0;
  double jump_cap = 0.0;

  static ProkhorovKernel for_design(const DesignMatrix& a, double eps1, double jump_probability) {
    ProkhorovKernel k{eps1, jump_probability, a.inf_norm()};
    k.validate();
    return k;
  }

  void validate() const {
    require(eps1 >= 0.0 && std::isfinite(eps1), ErrorKind::InvalidArgument, "kernel radius must be >= 0");
    require(jump_probability >= 0.0 && jump_probability <= eps1, ErrorKind::InvalidArgument,
            "jump probability must lie in [0, eps1]");
    require(jump_cap >= 0.0 && std::isfinite(jump_cap), ErrorKind::InvalidArgument, "jump cap must be finite and >= 0");
  }
};

struct CoupledPair {
  Vec z;
  Vec t;
};

inline Vec prokhorov_perturb(const DesignMatrix& a, const Vec& z, const ProkhorovKernel& kernel, Rng& rng) {
  Vec t = apply_design(a, z);
  if (kernel.eps1 == 0.0) return t;
  // Both branches consume the same number of draws.
  const bool jump = rng.uniform() < kernel.jump_probability;
  const double radius = jump ? kernel.jump_cap : kernel.eps1;
  for (Eigen::Index j = 0; j < t.size(); ++j) t(j) += radius * (2.0 * rng.uniform() - 1.0);
  return t;
}

inline CoupledPair sample_coupled(const DesignMatrix& a, const LatentPrior& prior, const ProkhorovKernel& kernel,
                                  Rng& rng) {
  Vec z = prior.sample(rng);
  Vec t = prokhorov_perturb(a, z, kernel, rng);
  return {std::move(z), std::move(t)};
}

/// Fraction of pairs with ||t - Az||_inf > eps.
inline double verify_coupling(const DesignMatrix& a, const std::vector<CoupledPair>& pairs, double eps) {
  require(!pairs.empty(), ErrorKind::InvalidArgument, "verify_coupling needs at least one pair");
  std::size_t bad = 0;
  for (const auto& p : pairs)
    if (inf_norm(Vec(p.t - apply_design(a, p.z))) > eps) ++bad;
  return static_cast<double>(bad) / static_cast<double>(pairs.size());
}

}  // namespace latmech
