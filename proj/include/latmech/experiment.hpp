#pragma once

// JSON-configured experiments: recover, robustify, concentration, end2end.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "latmech/concentration.hpp"
#include "latmech/error.hpp"
#include "latmech/harness.hpp"
#include "latmech/joint_fixtures.hpp"
#include "latmech/latent_model.hpp"
#include "latmech/mechanisms.hpp"
#include "latmech/query_protocol.hpp"
#include "latmech/random.hpp"
#include "latmech/robustify.hpp"
#include "latmech/stats.hpp"
#include "latmech/valuation.hpp"

#ifndef LATMECH_BUILD_TAG
#define LATMECH_BUILD_TAG "unknown"
#endif

namespace latmech {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

inline const char* build_tag() { return LATMECH_BUILD_TAG; }

// ---------------------------------------------------------------------------
// Config access with field-level diagnostics

class ConfigNode {
 public:
  ConfigNode(const json& node, std::string path) : node_(&node), path_(std::move(path)) {
    if (!node_->is_object()) fail(ErrorKind::ConfigError, "config field '" + display() + "': expected an object");
  }

  bool has(const std::string& key) const { return node_->contains(key) && !(*node_)[key].is_null(); }

  template <class T>
  T get(const std::string& key, T fallback) const {
    return has(key) ? need<T>(key) : fallback;
  }

  template <class T>
  T need(const std::string& key) const {
    if (!has(key)) error(key, "required field is missing");
    const json& v = (*node_)[key];
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) error(key, "expected a boolean");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) error(key, "expected an integer");
        if constexpr (std::is_unsigned_v<T>)
          if (!v.is_number_unsigned() && v.get<std::int64_t>() < 0) error(key, "expected a nonnegative integer");
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) error(key, "expected a number");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) error(key, "expected a string");
      }
      return v.get<T>();
    } catch (const json::exception& e) {
      error(key, e.what());
    }
  }

  std::vector<double> numbers(const std::string& key, std::vector<double> fallback) const {
    if (!has(key)) return fallback;
    const json& v = (*node_)[key];
    if (v.is_number()) return {v.get<double>()};
    if (!v.is_array()) error(key, "expected a number or an array of numbers");
    std::vector<double> out;
    for (const auto& x : v) {
      if (!x.is_number()) error(key, "array entries must be numbers");
      out.push_back(x.get<double>());
    }
    return out;
  }

  /// Child object; a missing key yields an empty object.
  ConfigNode child(const std::string& key) const {
    if (!has(key)) return ConfigNode(empty(), join(key));
    if (!(*node_)[key].is_object()) error(key, "expected an object");
    return ConfigNode((*node_)[key], join(key));
  }

  std::vector<ConfigNode> children(const std::string& key) const {
    std::vector<ConfigNode> out;
    if (!has(key)) return out;
    const json& v = (*node_)[key];
    if (!v.is_array()) error(key, "expected an array of objects");
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_object()) error(key + "[" + std::to_string(i) + "]", "expected an object");
      out.emplace_back(v[i], join(key + "[" + std::to_string(i) + "]"));
    }
    return out;
  }

  [[noreturn]] void error(const std::string& key, const std::string& msg) const {
    fail(ErrorKind::ConfigError, "config field '" + join(key) + "': " + msg);
  }

  const json& raw() const { return *node_; }

 private:
  static const json& empty() {
    static const json e = json::object();
    return e;
  }
  std::string join(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  std::string display() const { return path_.empty() ? "<root>" : path_; }

  const json* node_;
  std::string path_;
};

// ---------------------------------------------------------------------------
// Model components from config

inline Marginal parse_marginal(const ConfigNode& c) {
  const auto kind = c.get<std::string>("kind", "uniform");
  try {
    if (kind == "uniform") {
      UniformMarginal m{c.get<double>("lo", 0.0), c.get<double>("hi", 1.0)};
      m.validate();
      return m;
    }
    if (kind == "truncated_gaussian") {
      TruncatedGaussianMarginal m{c.need<double>("mean"), c.need<double>("sd")};
      m.validate();
      return m;
    }
    if (kind == "grid") {
      GridMarginal m{c.numbers("values", {}), c.numbers("probs", {})};
      m.validate();
      return m;
    }
    if (kind == "point_mass") {
      GridMarginal m = point_mass(c.need<double>("value"));
      m.validate();
      return m;
    }
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::ConfigError) throw;
    c.error("kind", e.what());
  }
  c.error("kind", "unknown prior kind '" + kind + "' (uniform, truncated_gaussian, grid, point_mass)");
}

inline LatentPrior parse_prior(const ConfigNode& c, Eigen::Index k) { return LatentPrior::product(k, parse_marginal(c)); }

struct DesignConfig {
  std::string kind = "separable";
  Eigen::Index items = 0;
  Eigen::Index latent_dim = 0;
  double variance = 1.0;
  bool resample = false;
  std::string path;
};

inline DesignConfig parse_design(const ConfigNode& c) {
  DesignConfig d;
  d.kind = c.get<std::string>("kind", "separable");
  d.resample = c.get<bool>("resample", false);
  d.variance = c.get<double>("variance", 1.0);
  if (d.kind == "csv") {
    d.path = c.need<std::string>("path");
    try {
      const DesignMatrix a = load_design_csv(d.path);
      d.items = a.items();
      d.latent_dim = a.latent_dim();
    } catch (const Error& e) {
      c.error("path", e.what());
    }
    return d;
  }
  if (d.kind != "separable" && d.kind != "diag_dominant" && d.kind != "gaussian" && d.kind != "rademacher")
    c.error("kind", "unknown design kind '" + d.kind + "' (separable, diag_dominant, gaussian, rademacher, csv)");
  d.items = c.need<Eigen::Index>("items");
  d.latent_dim = c.need<Eigen::Index>("latent_dim");
  if (d.latent_dim < 1) c.error("latent_dim", "k must be >= 1");
  if (d.latent_dim > d.items)
    c.error("latent_dim", "k <= N violated (k=" + std::to_string(d.latent_dim) + ", N=" + std::to_string(d.items) + ")");
  if (!(d.variance > 0.0)) c.error("variance", "must be > 0");
  return d;
}

struct GeneratedDesign {
  DesignMatrix design;
  std::vector<int> rows;  // query rows for the natural setting
  Setting setting = Setting::Separable;
  double energy = std::numeric_limits<double>::quiet_NaN();
};

inline std::vector<int> random_permutation(std::size_t n, Rng& rng) {
  std::vector<int> p(n);
  std::iota(p.begin(), p.end(), 0);
  for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[rng.below(i)]);
  return p;
}

/// Rows of A that are unit vectors e_0..e_{k-1}, in coordinate order.
inline std::vector<int> find_identity_rows(const DesignMatrix& a) {
  const auto k = a.latent_dim();
  std::vector<int> rows(static_cast<std::size_t>(k), -1);
  for (Eigen::Index r = 0; r < a.items(); ++r)
    for (Eigen::Index j = 0; j < k; ++j) {
      Vec e = Vec::Zero(k);
      e(j) = 1.0;
      if (rows[static_cast<std::size_t>(j)] < 0 && Vec(a.entries().row(r).transpose()) == e)
        rows[static_cast<std::size_t>(j)] = static_cast<int>(r);
    }
  for (int r : rows) require(r >= 0, ErrorKind::ConfigError, "separable design: no identity row for some coordinate");
  return rows;
}

/// Random designs:
///   separable     rows of I_k and N-k Dirichlet(1) rows, randomly permuted (||A||_inf = 1)
///   diag_dominant C with off-diagonals U[-1,1] and row/column margins >= 1 on top of N-k U[0,1] rows, permuted
///   gaussian      i.i.d. N(0, variance) entries
///   rademacher    i.i.d. uniform signs
inline GeneratedDesign generate_design(const DesignConfig& cfg, Rng& rng) {
  GeneratedDesign g;
  const Eigen::Index n = cfg.items, k = cfg.latent_dim;
  if (cfg.kind == "csv") {
    g.design = load_design_csv(cfg.path);
    g.rows = find_identity_rows(g.design);
    return g;
  }
  if (cfg.kind == "gaussian" || cfg.kind == "rademacher") {
    Mat a(n, k);
    if (cfg.kind == "gaussian") {
      const GaussianDesignSpec spec(Mat::Identity(n, n) * cfg.variance);
      a = gaussian_design_sample(spec, k, rng);
      g.setting = Setting::Gaussian;
      g.energy = spec.trace();
    } else {
      for (Eigen::Index c = 0; c < k; ++c) a.col(c) = rademacher_sampler(n)(rng);
      g.setting = Setting::WeakDependence;
      g.energy = static_cast<double>(n);
    }
    g.design = DesignMatrix(std::move(a));
    g.rows.resize(static_cast<std::size_t>(n));
    std::iota(g.rows.begin(), g.rows.end(), 0);
    return g;
  }
  Mat stacked(n, k);
  if (cfg.kind == "separable") {
    stacked.topRows(k).setIdentity();
    for (Eigen::Index r = k; r < n; ++r) {
      double s = 0.0;
      for (Eigen::Index c = 0; c < k; ++c) s += stacked(r, c) = -std::log1p(-rng.uniform());
      stacked.row(r) /= s;
    }
    g.setting = Setting::Separable;
  } else {
    Mat c(k, k);
    for (Eigen::Index i = 0; i < k; ++i)
      for (Eigen::Index j = 0; j < k; ++j) c(i, j) = i == j ? 0.0 : rng.uniform(-1.0, 1.0);
    for (Eigen::Index i = 0; i < k; ++i) {
      const double row = c.row(i).cwiseAbs().sum();
      const double col = c.col(i).cwiseAbs().sum();
      c(i, i) = std::max(row, col) + 1.0 + rng.uniform();
    }
    stacked.topRows(k) = c;
    for (Eigen::Index r = k; r < n; ++r)
      for (Eigen::Index j = 0; j < k; ++j) stacked(r, j) = rng.uniform();
    g.setting = Setting::DiagDominant;
  }
  const std::vector<int> perm = random_permutation(static_cast<std::size_t>(n), rng);
  Mat a(n, k);
  for (Eigen::Index r = 0; r < n; ++r) a.row(perm[static_cast<std::size_t>(r)]) = stacked.row(r);
  g.design = DesignMatrix(std::move(a));
  for (Eigen::Index j = 0; j < k; ++j) g.rows.push_back(perm[static_cast<std::size_t>(j)]);
  return g;
}

// ---------------------------------------------------------------------------
// Reports

struct Assertion {
  std::string name;
  bool passed = false;
  double value = 0.0;
  double threshold = 0.0;
  std::string relation;  // "<=", ">=", "=="
};

inline Assertion assert_le(std::string name, double value, double threshold) {
  return {std::move(name), value <= threshold, value, threshold, "<="};
}
inline Assertion assert_ge(std::string name, double value, double threshold) {
  return {std::move(name), value >= threshold, value, threshold, ">="};
}
inline Assertion assert_eq(std::string name, double value, double expected) {
  return {std::move(name), value == expected, value, expected, "=="};
}

struct CsvTable {
  std::string name;
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  std::string render() const {
    std::ostringstream out;
    out << std::setprecision(17);
    for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
    out << '\n';
    for (const auto& r : rows) {
      for (std::size_t i = 0; i < r.size(); ++i) out << (i ? "," : "") << r[i];
      out << '\n';
    }
    return out.str();
  }
};

struct ExperimentResult {
  std::string name;
  std::string scenario;
  std::uint64_t seed = 0;
  std::size_t trials = 0;
  ordered_json metrics = ordered_json::object();
  std::vector<std::string> notes;
  std::vector<Assertion> assertions;
  std::vector<CsvTable> tables;

  bool passed() const {
    return std::all_of(assertions.begin(), assertions.end(), [](const Assertion& a) { return a.passed; });
  }

  ordered_json report() const {
    ordered_json j;
    j["name"] = name;
    j["scenario"] = scenario;
    j["seed"] = seed;
    j["build"] = build_tag();
    j["trials"] = trials;
    j["notes"] = notes;
    j["metrics"] = metrics;
    ordered_json list = ordered_json::array();
    for (const auto& a : assertions) {
      ordered_json e;
      e["name"] = a.name;
      e["passed"] = a.passed;
      e["value"] = a.value;
      e["relation"] = a.relation;
      e["threshold"] = a.threshold;
      list.push_back(std::move(e));
    }
    j["assertions"] = std::move(list);
    j["passed"] = passed();
    return j;
  }
};

inline ordered_json to_json(const Vec& v) { return ordered_json(std::vector<double>(v.data(), v.data() + v.size())); }

// ---------------------------------------------------------------------------
// Scenarios

struct RunOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> trials;
};

namespace detail {

inline double ceil_log2(double x) { return std::ceil(std::log2(x)); }

inline QueryPlan parse_plan(const ConfigNode& c, const GeneratedDesign& g) {
  QueryPlan plan;
  plan.setting = c.has("setting") ? parse_setting(c.need<std::string>("setting")) : g.setting;
  plan.eta = c.get<double>("eta", 1e-3);
  plan.eps = c.get<double>("eps", 1e-3);
  if (!(plan.eta > 0.0)) c.error("eta", "must be > 0");
  if (!(plan.eps >= 0.0)) c.error("eps", "must be >= 0");
  plan.rows = g.rows;
  if (c.has("rows")) {
    plan.rows.clear();
    for (double r : c.numbers("rows", {})) plan.rows.push_back(static_cast<int>(r));
  }
  plan.design_energy = c.get<double>("design_energy", g.energy);
  return plan;
}

inline ExperimentResult run_recover(const ConfigNode& root, ExperimentResult res) {
  const DesignConfig dcfg = parse_design(root.child("design"));
  const ConfigNode pcfg = root.child("protocol");
  const LatentPrior prior = parse_prior(root.child("prior"), dcfg.latent_dim);
  const auto acc = root.child("acceptance");

  Rng design_rng(res.seed, Stream::Model, 0);
  GeneratedDesign g = generate_design(dcfg, design_rng);
  QueryPlan plan = parse_plan(pcfg, g);
  const double noise = root.get<double>("noise", plan.eps);
  if (!(noise >= 0.0 && noise <= plan.eps)) root.error("noise", "must lie in [0, protocol.eps]");
  const Eigen::Index k = dcfg.latent_dim;
  const double min_success = acc.get<double>("min_success_rate", 1.0);
  const double factor = acc.get<double>("error_bound_factor", 0.0);

  std::size_t within = 0, exact_count = 0, under_cap = 0, varah_ok = 0;
  double max_error = 0.0, max_ratio = 0.0, max_bound = 0.0;
  std::size_t queries_seen = 0;
  CsvTable runs{"runs", {"run", "error", "bound", "queries", "design_inf_norm"}, {}};
  for (std::size_t s = 0; s < res.trials; ++s) {
    if (dcfg.resample && s > 0) {
      Rng r(res.seed, Stream::Model, s);
      g = generate_design(dcfg, r);
      plan.rows = g.rows;
      if (!pcfg.has("design_energy")) plan.design_energy = g.energy;
    }
    const DesignMatrix& a = g.design;
    Rng type_rng(res.seed, Stream::Harness, s);
    const Vec z = prior.sample(type_rng);
    const Vec t = prokhorov_perturb(a, z, ProkhorovKernel{noise, 0.0, 0.0}, type_rng);
    BidderOracle oracle = BidderOracle::truthful(t);
    const QueryProtocol protocol(a, plan);
    const RecoveryResult rec = protocol.run(oracle);
    const double err = inf_norm(Vec(rec.z_hat - z));
    const double bound = factor > 0.0 ? factor * (plan.eps + plan.eta) : rec.delta_out;
    within += err <= bound;
    max_error = std::max(max_error, err);
    max_bound = std::max(max_bound, bound);
    max_ratio = std::max(max_ratio, err / bound);
    queries_seen = std::max(queries_seen, oracle.query_count());

    const double range = 2.0 * (a.inf_norm() + plan.eps + plan.eta);
    const double expected = static_cast<double>(plan.rows.size()) * ceil_log2(range / plan.eta);
    exact_count += static_cast<double>(oracle.query_count()) == expected;
    if (plan.setting == Setting::Separable) {
      const double cap = static_cast<double>(k) * (ceil_log2(a.inf_norm()) + 2.0 * ceil_log2(1.0 / plan.eps) + 2.0);
      under_cap += static_cast<double>(oracle.query_count()) <= cap;
    }
    if (plan.setting == Setting::DiagDominant) {
      const Mat c = a.select_rows(plan.rows);
      const DiagDominance d = diag_dominance_params(c);
      const Mat ctc_inv = (c.transpose() * c).inverse();
      const double lhs = inf_norm(ctc_inv) * inf_norm(Mat(c.transpose()));
      varah_ok += lhs <= 2.0 * c.diagonal().cwiseAbs().maxCoeff() / (d.alpha * d.beta);
    }
    runs.rows.push_back({static_cast<double>(s), err, bound, static_cast<double>(oracle.query_count()), a.inf_norm()});
  }
  const double n = static_cast<double>(res.trials);
  res.metrics["setting"] = to_string(plan.setting);
  res.metrics["items"] = dcfg.items;
  res.metrics["latent_dim"] = k;
  res.metrics["eta"] = plan.eta;
  res.metrics["eps"] = plan.eps;
  res.metrics["noise_radius"] = noise;
  res.metrics["query_rows"] = plan.rows.size();
  res.metrics["max_error"] = max_error;
  res.metrics["max_bound"] = max_bound;
  res.metrics["max_error_to_bound"] = max_ratio;
  res.metrics["success_rate"] = within / n;
  res.metrics["max_queries_per_bidder"] = queries_seen;
  res.assertions.push_back(assert_ge("recovery_within_bound_rate", within / n, min_success));
  res.assertions.push_back(assert_eq("query_count_matches_formula_rate", exact_count / n, 1.0));
  if (plan.setting == Setting::Separable)
    res.assertions.push_back(assert_eq("query_count_under_cap_rate", under_cap / n, 1.0));
  if (plan.setting == Setting::DiagDominant)
    res.assertions.push_back(assert_eq("varah_inequality_rate", varah_ok / n, 1.0));
  res.tables.push_back(std::move(runs));
  return res;
}

inline ExperimentResult run_robustify(const ConfigNode& root, ExperimentResult res) {
  const ConfigNode rc = root.child("robustify");
  const auto k = rc.get<Eigen::Index>("latent_dim", 2);
  if (k < 1) rc.error("latent_dim", "must be >= 1");
  const auto draws = rc.get<std::size_t>("draws", res.trials);
  if (draws < 2) rc.error("draws", "must be >= 2");
  const double alpha = rc.get<double>("alpha", 0.01);
  const std::vector<double> deltas = rc.numbers("delta_grid", {0.05, 0.25});
  std::vector<ConfigNode> priors = rc.children("priors");
  if (priors.empty()) rc.error("priors", "at least one prior is required");
  for (double d : deltas)
    if (!(d > 0.0 && d <= 1.0)) rc.error("delta_grid", "widths must lie in (0, 1]");

  const double critical = ks_critical_value(alpha, draws, draws);
  CsvTable ks{"ks", {"prior", "delta_grid", "coordinate", "ks_statistic", "critical_value"}, {}};
  ordered_json cases = ordered_json::array();
  double worst = 0.0;
  for (std::size_t p = 0; p < priors.size(); ++p) {
    const LatentPrior prior = parse_prior(priors[p], k);
    for (std::size_t di = 0; di < deltas.size(); ++di) {
      Rng rng(res.seed, Stream::Mechanism, p * 1000 + di);
      std::vector<std::vector<double>> rounded(static_cast<std::size_t>(k)), fresh(static_cast<std::size_t>(k));
      int empty = 0;
      for (std::size_t s = 0; s < draws; ++s) {
        const Vec z = prior.sample(rng);
        const RandomGrid grid = build_random_grid(deltas[di], k, rng);
        Vec out;
        try {
          out = prior.conditional_cube_sample(round_to_grid(z, grid), grid.delta, rng);
        } catch (const Error& e) {
          if (e.kind() != ErrorKind::EmptyMass) throw;
          ++empty;
          continue;
        }
        const Vec ref = prior.sample(rng);
        for (Eigen::Index j = 0; j < k; ++j) {
          rounded[static_cast<std::size_t>(j)].push_back(out(j));
          fresh[static_cast<std::size_t>(j)].push_back(ref(j));
        }
      }
      double max_ks = 0.0;
      for (Eigen::Index j = 0; j < k; ++j) {
        const auto& a = rounded[static_cast<std::size_t>(j)];
        const auto& b = fresh[static_cast<std::size_t>(j)];
        const double d = ks_two_sample(a, b);
        const double crit = ks_critical_value(alpha, a.size(), b.size());
        max_ks = std::max(max_ks, d / crit);
        ks.rows.push_back({static_cast<double>(p), deltas[di], static_cast<double>(j), d, crit});
      }
      worst = std::max(worst, max_ks);
      ordered_json c;
      c["prior"] = p;
      c["delta_grid"] = deltas[di];
      c["empty_mass_cells"] = empty;
      c["max_ks_to_critical"] = max_ks;
      cases.push_back(std::move(c));
      res.assertions.push_back(assert_le("ks_prior" + std::to_string(p) + "_delta" + std::to_string(di) + "_max_ratio",
                                         max_ks, 1.0));
    }
  }
  res.metrics["latent_dim"] = k;
  res.metrics["draws"] = draws;
  res.metrics["alpha"] = alpha;
  res.metrics["ks_critical_value"] = critical;
  res.metrics["max_ks_to_critical"] = worst;
  res.metrics["marginal_cases"] = std::move(cases);
  res.tables.push_back(std::move(ks));

  if (root.has("coupling")) {
    const ConfigNode cc = root.child("coupling");
    const DesignConfig dcfg = parse_design(cc.child("design"));
    Rng design_rng(res.seed, Stream::Model, 0);
    const GeneratedDesign g = generate_design(dcfg, design_rng);
    const LatentPrior prior = parse_prior(cc.child("prior"), dcfg.latent_dim);
    const auto n = cc.get<std::size_t>("draws", res.trials);
    if (n < 1) cc.error("draws", "must be >= 1");
    ordered_json rows = ordered_json::array();
    std::size_t idx = 0;
    for (double eps1 : cc.numbers("eps1", {0.01, 0.05})) {
      if (!(eps1 > 0.0 && eps1 < 1.0)) cc.error("eps1", "radii must lie in (0, 1)");
      const ProkhorovKernel kernel = ProkhorovKernel::for_design(g.design, eps1, eps1);
      Rng rng(res.seed, Stream::Model, 1000 + idx++);
      std::vector<CoupledPair> pairs;
      pairs.reserve(n);
      for (std::size_t s = 0; s < n; ++s) pairs.push_back(sample_coupled(g.design, prior, kernel, rng));
      const double rate = verify_coupling(g.design, pairs, eps1);
      const double limit = eps1 + 3.0 * std::sqrt(eps1 / static_cast<double>(n));
      ordered_json r;
      r["eps1"] = eps1;
      r["violation_rate"] = rate;
      r["limit"] = limit;
      rows.push_back(std::move(r));
      std::ostringstream label;
      label << "coupling_violation_rate_eps1_" << eps1;
      res.assertions.push_back(assert_le(label.str(), rate, limit));
    }
    res.metrics["coupling"] = std::move(rows);
  }
  return res;
}

inline ExperimentResult run_concentration(const ConfigNode& root, ExperimentResult res) {
  const std::vector<ConfigNode> cases = root.children("cases");
  if (cases.empty()) root.error("cases", "at least one concentration case is required");
  ordered_json out = ordered_json::array();
  CsvTable sig{"singular_values", {"case", "trial", "sigma_max", "sigma_min", "upper_bound", "lower_bound"}, {}};
  for (std::size_t ci = 0; ci < cases.size(); ++ci) {
    const ConfigNode& c = cases[ci];
    const auto kind = c.need<std::string>("kind");
    const std::string label = c.get<std::string>("label", kind + std::to_string(ci));
    Rng rng(res.seed, Stream::Model, ci);
    ordered_json r;
    r["label"] = label;
    r["kind"] = kind;
    if (kind == "gaussian" || kind == "rademacher") {
      const auto dim = c.need<Eigen::Index>("dim");
      const auto k = c.need<Eigen::Index>("k");
      const int trials = c.get<int>("trials", static_cast<int>(res.trials));
      if (dim < 1) c.error("dim", "must be >= 1");
      if (k < 1 || k > dim) c.error("k", "must satisfy 1 <= k <= dim");
      if (trials < 1) c.error("trials", "must be >= 1");
      ConcentrationReport rep;
      if (kind == "gaussian") {
        const GaussianDesignSpec spec(Mat::Identity(dim, dim) * c.get<double>("variance", 1.0));
        rep = check_gaussian_concentration(spec, k, trials, rng);
        r["trace_over_rho"] = spec.trace() / spec.rho();
        r["boundary_64k"] = 64.0 * static_cast<double>(k);
      } else {
        const double bc = c.get<double>("c", 1.0);
        const WeakDependenceSpec spec{rademacher_sampler(dim, bc), Vec::Constant(dim, bc * bc), bc, 0.0};
        rep = check_weakdep_concentration(spec, k, trials, rng);
        r["v"] = spec.v();
      }
      r["dim"] = dim;
      r["k"] = k;
      r["trials"] = trials;
      r["admissible"] = rep.admissible;
      r["upper_bound"] = rep.upper_bound;
      r["lower_bound"] = rep.lower_bound;
      r["max_sigma_max"] = *std::max_element(rep.sigma_max.begin(), rep.sigma_max.end());
      r["min_sigma_min"] = *std::min_element(rep.sigma_min.begin(), rep.sigma_min.end());
      r["upper_violations"] = rep.upper_violations;
      r["lower_violations"] = rep.lower_violations;
      r["failure_bound"] = rep.failure_bound;
      r["failure_bound_alt"] = rep.failure_bound_alt;
      for (std::size_t t = 0; t < rep.trials(); ++t)
        sig.rows.push_back({static_cast<double>(ci), static_cast<double>(t), rep.sigma_max[t], rep.sigma_min[t],
                            rep.upper_bound, rep.lower_bound});
      res.assertions.push_back(assert_eq(label + "_violating_trials", rep.trials_violating, 0.0));
    } else if (kind == "net") {
      const auto rows = c.need<Eigen::Index>("rows");
      const int cols = c.need<int>("cols");
      const double eps = c.need<double>("eps");
      const int instances = c.get<int>("instances", 100);
      const double tol = c.get<double>("tolerance", 1e-8);
      if (rows < cols) c.error("rows", "must be >= cols");
      if (!(eps > 0.0 && eps < 1.0)) c.error("eps", "must lie in (0, 1)");
      const std::vector<Vec> net = epsilon_net(cols, eps);
      const double size_cap = std::pow(3.0 / eps, cols);
      int bracketed = 0;
      double min_upper_gap = std::numeric_limits<double>::infinity();
      double min_lower_gap = std::numeric_limits<double>::infinity();
      for (int s = 0; s < instances; ++s) {
        Mat m(rows, cols);
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
        const SpectralSummary ex = singular_extremes(m);
        const NetSandwich sw = net_sandwich(m, net, eps);
        const double up = sw.upper_sigma_max - ex.sigma_max;
        const double lo = ex.sigma_min - sw.lower_sigma_min;
        min_upper_gap = std::min(min_upper_gap, up);
        min_lower_gap = std::min(min_lower_gap, lo);
        bracketed += up > -tol && lo > -tol;
      }
      r["net_size"] = net.size();
      r["net_size_cap"] = size_cap;
      r["instances"] = instances;
      r["bracketed"] = bracketed;
      r["min_upper_gap"] = min_upper_gap;
      r["min_lower_gap"] = min_lower_gap;
      res.assertions.push_back(assert_le(label + "_net_size", static_cast<double>(net.size()), size_cap));
      res.assertions.push_back(assert_eq(label + "_bracketed_instances", bracketed, instances));
    } else if (kind == "tensorization") {
      const int copies = c.get<int>("copies", 2);
      const double tol = c.get<double>("tolerance", 1e-10);
      int passed = 0, products_zero = 0, products = 0;
      double worst = 0.0;
      ordered_json fx = ordered_json::array();
      const auto fixtures = joint_fixtures();
      for (const auto& f : fixtures) {
        const TensorizationReport t = tensorization_check(f.joint, copies, tol);
        passed += t.passed;
        worst = std::max(worst, t.max_entry_diff);
        if (f.product) {
          ++products;
          products_zero += influence_matrix(f.joint).matrix.cwiseAbs().maxCoeff() <= tol;
        }
        ordered_json e;
        e["fixture"] = f.name;
        e["influence_norm"] = t.norm_single;
        e["max_entry_diff"] = t.max_entry_diff;
        fx.push_back(std::move(e));
      }
      r["copies"] = copies;
      r["fixtures"] = std::move(fx);
      r["max_entry_diff"] = worst;
      res.assertions.push_back(assert_eq(label + "_fixtures_passed", passed, static_cast<double>(fixtures.size())));
      res.assertions.push_back(assert_eq(label + "_product_zero_influence", products_zero, products));
    } else {
      c.error("kind", "unknown case kind '" + kind + "' (gaussian, rademacher, net, tensorization)");
    }
    out.push_back(std::move(r));
  }
  res.metrics["cases"] = std::move(out);
  res.tables.push_back(std::move(sig));
  return res;
}

struct End2EndSetup {
  AuctionEnvironment env;
  std::shared_ptr<const MarketModel> market;
  LatentMechanism base;
  std::shared_ptr<const IndirectMechanism> composed;
  QueryPlan plan;
  Vec prices;
  double eps1 = 0.0;
  double jump_cap = 0.0;
  double max_value = 0.0;
  int lipschitz = 0;
};

inline End2EndSetup build_end2end(const ConfigNode& root, std::uint64_t seed) {
  End2EndSetup s;
  const DesignConfig dcfg = parse_design(root.child("design"));
  Rng design_rng(seed, Stream::Model, 0);
  const GeneratedDesign g = generate_design(dcfg, design_rng);
  const auto m = root.get<std::size_t>("bidders", 2);
  if (m < 1) root.error("bidders", "must be >= 1");

  const ConfigNode vc = root.child("valuation");
  const auto family = vc.get<std::string>("family", "cardinality");
  if (family != "cardinality") vc.error("family", "end2end supports the cardinality family");
  const int c = vc.get<int>("c", 2);
  if (c < 1) vc.error("c", "must be >= 1");
  const double mu = vc.get<double>("mu", 0.0);

  const ConfigNode kc = root.child("kernel");
  s.eps1 = kc.get<double>("eps1", 1e-3);
  if (!(s.eps1 >= 0.0 && s.eps1 < 1.0)) kc.error("eps1", "must lie in [0, 1)");
  s.jump_cap = kc.get<double>("jump_cap", g.design.inf_norm());
  const ProkhorovKernel kernel{s.eps1, kc.get<double>("jump_probability", s.eps1), s.jump_cap};
  try {
    kernel.validate();
  } catch (const Error& e) {
    kc.error("jump_probability", e.what());
  }

  s.env.design = g.design;
  s.env.seed = seed;
  for (std::size_t i = 0; i < m; ++i) {
    s.env.priors.push_back(parse_prior(root.child("prior"), dcfg.latent_dim));
    s.env.kernels.push_back(kernel);
    s.env.valuations.push_back(ConstrainedAdditiveValuation::c_demand(dcfg.items, c, mu));
  }
  s.env.validate();
  s.market = s.env.market();
  s.lipschitz = s.env.valuations[0].lipschitz();

  const ConfigNode mc = root.child("mechanism");
  const auto kind = mc.get<std::string>("kind", "posted_price");
  if (kind != "posted_price") mc.error("kind", "end2end supports posted_price");
  const double fraction = mc.get<double>("price_fraction", 0.6);
  if (!(fraction >= 0.0)) mc.error("price_fraction", "must be >= 0");
  // Fraction of each item's largest attainable value over z in [0,1]^k.
  s.prices = Vec(dcfg.items);
  for (Eigen::Index j = 0; j < dcfg.items; ++j)
    s.prices(j) = std::max(0.0, fraction * (mu + g.design.entries().row(j).cwiseMax(0.0).sum()));
  std::vector<int> order(m);
  std::iota(order.begin(), order.end(), 0);
  s.base = sequential_posted_price(s.market, s.prices, order);

  s.plan = parse_plan(root.child("protocol"), g);
  if (s.plan.eps < s.eps1) root.error("protocol.eps", "must be >= kernel.eps1");
  s.max_value = max_bidder_value(s.lipschitz, std::max(0.0, mu), g.design.inf_norm(), s.jump_cap);
  const double c0 = root.get<double>("c0", 1.0);
  if (!(c0 > 0.0)) root.error("c0", "must be > 0");
  s.composed = std::make_shared<const IndirectMechanism>(
      compose_algorithm1(s.base, s.env.priors, g.design, s.plan, s.eps1, s.plan.eps, s.lipschitz, c0, s.max_value));
  return s;
}

inline ExperimentResult run_end2end(const ConfigNode& root, ExperimentResult res) {
  const End2EndSetup s = build_end2end(root, res.seed);
  const ConfigNode bc = root.child("bic");
  const auto types = bc.get<std::size_t>("types", 500);
  BicOptions bic;
  bic.deviations = bc.get<std::size_t>("deviations", 16);
  bic.opponent_draws = bc.get<std::size_t>("opponent_draws", 256);
  bic.perturbation_scale = bc.get<double>("perturbation_scale", s.composed->delta_grid());
  if (bic.deviations < 1) bc.error("deviations", "must be >= 1");
  if (bic.opponent_draws < 1) bc.error("opponent_draws", "must be >= 1");
  const auto ir_trials = root.get<std::size_t>("ir_trials", res.trials);
  if (res.trials < 2) root.error("trials", "must be >= 2");

  const KappaBudget budget = kappa_budget(s.composed->budget());
  const Auction direct = Auction::direct(s.base);
  const Auction composed = Auction::indirect(s.composed);

  // Sample interaction: transcript and outcome of one run.
  {
    Rng rng(res.seed, Stream::Protocol, 0);
    const TypeProfile profile = draw_profile(s.env, rng);
    std::vector<BidderOracle> oracles;
    for (const auto& p : profile.types) oracles.push_back(BidderOracle::truthful(p.t));
    const IndirectOutcome o = s.composed->execute(oracles, rng);
    ordered_json sample = ordered_json::array();
    for (std::size_t i = 0; i < o.recoveries.size(); ++i) {
      const auto& r = o.recoveries[i];
      ordered_json b;
      b["rows"] = r.transcript.rows;
      b["y_hat"] = r.transcript.y_hat;
      b["queries"] = o.queries_answered[i];
      b["z"] = to_json(profile.types[i].z);
      b["z_hat"] = to_json(r.z_hat);
      b["bundle"] = o.robust.outcome.bundles[i].items();
      b["payment"] = o.robust.outcome.payments(static_cast<Eigen::Index>(i));
      sample.push_back(std::move(b));
    }
    res.metrics["sample_run"] = std::move(sample);
  }

  Rng rev_rng(res.seed, Stream::Harness, 1);
  Rng rev_rng_copy = rev_rng;
  const EstimateWithCI rev_hat = estimate_revenue(direct, s.env, res.trials, rev_rng);
  const EstimateWithCI rev = estimate_revenue(composed, s.env, res.trials, rev_rng_copy);
  const double combined_se = std::sqrt(rev_hat.std_error * rev_hat.std_error + rev.std_error * rev.std_error);
  const double rev_floor = rev_hat.mean - budget.revenue_loss_budget - 3.0 * combined_se;

  Rng bic_rng(res.seed, Stream::Harness, 2);
  const BICViolationCurve curve = estimate_bic_violation(composed, s.env, bic, types, bic_rng);
  const double delta_kappa = curve.delta(budget.kappa);
  const double bic_limit = s.eps1 + 3.0 * binomial_sigma(s.eps1, types);

  Rng ir_rng(res.seed, Stream::Harness, 3);
  const IRReport ir = check_ir(composed, s.env, ir_trials, ir_rng);
  const double ir_limit = s.eps1 + 3.0 * binomial_sigma(s.eps1, std::max<std::size_t>(ir.observations, 1));

  res.notes.push_back(
      "BIC violation is measured over a finite deviation set; the reported delta is a lower bound on the true "
      "violation mass");
  res.metrics["items"] = s.env.items();
  res.metrics["latent_dim"] = s.env.latent_dim();
  res.metrics["bidders"] = s.env.bidders();
  res.metrics["design_inf_norm"] = s.env.design.inf_norm();
  res.metrics["lipschitz"] = s.lipschitz;
  res.metrics["eps1"] = s.eps1;
  res.metrics["eps"] = s.plan.eps;
  res.metrics["eta"] = s.plan.eta;
  res.metrics["delta_grid"] = s.composed->delta_grid();
  res.metrics["delta_out"] = s.composed->protocol().delta_out();
  res.metrics["queries_per_bidder"] = s.composed->protocol().queries_per_bidder();
  res.metrics["rebate"] = s.composed->rebate();
  res.metrics["max_value_H"] = s.max_value;
  res.metrics["kappa"] = budget.kappa;
  res.metrics["revenue_loss_budget"] = budget.revenue_loss_budget;
  res.metrics["prices"] = to_json(s.prices);
  ordered_json revenue;
  revenue["latent_mechanism"] = {{"mean", rev_hat.mean}, {"std_error", rev_hat.std_error}, {"trials", rev_hat.trials}};
  revenue["composed"] = {{"mean", rev.mean}, {"std_error", rev.std_error}, {"trials", rev.trials}};
  revenue["combined_std_error"] = combined_se;
  revenue["floor"] = rev_floor;
  res.metrics["revenue"] = std::move(revenue);
  ordered_json bj;
  bj["types"] = types;
  bj["deviations"] = bic.deviations;
  bj["opponent_draws"] = bic.opponent_draws;
  bj["perturbation_scale"] = bic.perturbation_scale;
  bj["max_gain"] = curve.max_gain();
  bj["delta_at_kappa"] = delta_kappa;
  bj["delta_at_zero"] = curve.delta(0.0);
  bj["limit"] = bic_limit;
  res.metrics["bic"] = std::move(bj);
  ordered_json ij;
  ij["observations"] = ir.observations;
  ij["violations"] = ir.violations;
  ij["rate"] = ir.rate();
  ij["max_deficit"] = ir.max_deficit;
  ij["limit"] = ir_limit;
  res.metrics["ir"] = std::move(ij);

  res.assertions.push_back(assert_ge("revenue_composed_vs_floor", rev.mean, rev_floor));
  res.assertions.push_back(assert_le("bic_delta_at_kappa", delta_kappa, bic_limit));
  res.assertions.push_back(assert_le("ir_violation_rate", ir.rate(), ir_limit));

  CsvTable curve_table{"bic_curve", {"eps", "delta"}, {}};
  const double top = std::max(2.0 * budget.kappa, curve.max_gain());
  for (int i = 0; i <= 100; ++i) {
    const double e = top * i / 100.0;
    curve_table.rows.push_back({e, curve.delta(e)});
  }
  CsvTable gains{"bic_gains", {"rank", "gain"}, {}};
  for (std::size_t i = 0; i < curve.gains().size(); ++i) gains.rows.push_back({static_cast<double>(i), curve.gains()[i]});
  res.tables.push_back(std::move(curve_table));
  res.tables.push_back(std::move(gains));
  return res;
}

}  // namespace detail

inline const std::vector<std::string>& scenario_names() {
  static const std::vector<std::string> names{"recover", "robustify", "concentration", "end2end"};
  return names;
}

/// Runs `scenario` on an already-parsed config document.
inline ExperimentResult run_experiment(const json& doc, const std::string& scenario, const RunOverrides& ov = {}) {
  const ConfigNode root(doc, "");
  if (std::find(scenario_names().begin(), scenario_names().end(), scenario) == scenario_names().end())
    fail(ErrorKind::ConfigError, "unknown scenario '" + scenario + "'");
  if (root.has("scenario") && root.need<std::string>("scenario") != scenario)
    root.error("scenario", "config is for '" + root.need<std::string>("scenario") + "', not '" + scenario + "'");
  ExperimentResult res;
  res.scenario = scenario;
  res.name = root.get<std::string>("name", scenario);
  res.seed = ov.seed ? *ov.seed : root.get<std::uint64_t>("seed", 0);
  res.trials = ov.trials ? *ov.trials : root.get<std::size_t>("trials", 1000);
  if (res.trials < 1) root.error("trials", "must be >= 1");
  if (scenario == "recover") return detail::run_recover(root, std::move(res));
  if (scenario == "robustify") return detail::run_robustify(root, std::move(res));
  if (scenario == "concentration") return detail::run_concentration(root, std::move(res));
  return detail::run_end2end(root, std::move(res));
}

inline json load_config(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::ConfigError, "cannot open config '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::ConfigError, "config '" + path + "' is not valid JSON: " + e.what());
  }
}

inline ExperimentResult run_experiment(const std::string& config_path, const std::string& scenario,
                                       const RunOverrides& ov = {}) {
  const json doc = load_config(config_path);
  std::string chosen = scenario;
  if (chosen.empty()) {
    const ConfigNode root(doc, "");
    chosen = root.need<std::string>("scenario");
  }
  return run_experiment(doc, chosen, ov);
}

/// Writes <dir>/<name>.json and <dir>/<name>_<table>.csv; returns the JSON text.
inline std::string write_outputs(const ExperimentResult& res, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const std::string text = res.report().dump(2) + "\n";
  const std::filesystem::path base(dir);
  std::ofstream(base / (res.name + ".json"), std::ios::binary) << text;
  for (const auto& t : res.tables) std::ofstream(base / (res.name + "_" + t.name + ".csv"), std::ios::binary) << t.render();
  return text;
}

}  // namespace latmech
