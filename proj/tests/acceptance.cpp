#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "latmech/experiment.hpp"

using namespace latmech;

namespace {

const std::string kConfigDir = LATMECH_CONFIG_DIR;

struct Check {
  std::string label;
  bool passed = false;
  std::string detail;
};

struct Criterion {
  int id = 0;
  std::string title;
  double runtime_limit = 0.0;  // seconds, 0 = none
  std::function<std::vector<Check>()> body;
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::vector<Check> from_assertions(const ExperimentResult& res, const std::string& prefix = "") {
  std::vector<Check> out;
  for (const auto& a : res.assertions)
    if (a.name.rfind(prefix, 0) == 0)
      out.push_back({a.name, a.passed, fmt(a.value) + " " + a.relation + " " + fmt(a.threshold)});
  if (out.empty()) out.push_back({"assertions present (" + prefix + ")", false, "none found"});
  return out;
}

json concentration_subset(const std::string& kind) {
  json doc = load_config(kConfigDir + "/concentration.json");
  json kept = json::array();
  for (const auto& c : doc["cases"])
    if (c["kind"] == kind) kept.push_back(c);
  doc["cases"] = kept;
  return doc;
}

std::vector<Check> run_config(const std::string& file, const std::string& scenario, const std::string& prefix = "") {
  return from_assertions(run_experiment(kConfigDir + "/" + file, scenario), prefix);
}

std::vector<Check> dsic_certification() {
  DesignConfig dcfg;
  dcfg.kind = "separable";
  dcfg.items = 6;
  dcfg.latent_dim = 2;
  Rng rng(20240610, Stream::Model, 0);
  const GeneratedDesign g = generate_design(dcfg, rng);
  auto market = std::make_shared<MarketModel>(MarketModel{g.design, {}});
  for (int i = 0; i < 2; ++i) market->valuations.push_back(ConstrainedAdditiveValuation::c_demand(dcfg.items, 2));
  Vec prices(dcfg.items);
  for (Eigen::Index j = 0; j < dcfg.items; ++j) prices(j) = 0.6 * g.design.entries().row(j).cwiseMax(0.0).sum();
  const LatentMechanism mech = sequential_posted_price(market, prices, {0, 1});
  const DsicReport r = exhaustive_dsic_check(mech, *market, {0.0, 0.25, 0.5, 0.75, 1.0}, 1e-12);
  return {{"profiles_enumerated", r.profiles == 625, std::to_string(r.profiles) + " == 625"},
          {"profitable_deviations", r.profitable == 0,
           std::to_string(r.profitable) + " of " + std::to_string(r.deviations_checked) + ", max gain " + fmt(r.max_gain)}};
}

std::vector<Check> determinism() {
  const auto dir = std::filesystem::temp_directory_path() / "latmech_acceptance_determinism";
  std::filesystem::remove_all(dir);
  std::vector<Check> out;
  for (const auto& [file, scenario] : std::vector<std::pair<std::string, std::string>>{
           {"robustify-marginals.json", "robustify"}, {"separable-recovery.json", "recover"}}) {
    const std::string a = write_outputs(run_experiment(kConfigDir + "/" + file, scenario), (dir / "a").string());
    const std::string b = write_outputs(run_experiment(kConfigDir + "/" + file, scenario), (dir / "b").string());
    out.push_back({file + " byte-identical", a == b && !a.empty(), std::to_string(a.size()) + " bytes"});
  }
  std::filesystem::remove_all(dir);
  return out;
}

}  // namespace

int main() {
  ExperimentResult robustify;
  bool robustify_ready = false;
  auto robustify_result = [&]() -> const ExperimentResult& {
    if (!robustify_ready) {
      robustify = run_experiment(kConfigDir + "/robustify-marginals.json", "robustify");
      robustify_ready = true;
    }
    return robustify;
  };

  const std::vector<Criterion> criteria{
      {1, "separable recovery: error <= 4(eps+eta), exact query count", 5.0,
       [] { return run_config("separable-recovery.json", "recover"); }},
      {2, "diagonally dominant recovery and Varah inequality", 10.0,
       [] { return run_config("diag-dominant-recovery.json", "recover"); }},
      {3, "Gaussian concentration, Sigma = I_512 and I_640, k = 8", 20.0,
       [] { return from_assertions(run_experiment(concentration_subset("gaussian"), "concentration")); }},
      {4, "weak-dependence concentration, Rademacher m = 1024, k = 2", 20.0,
       [] { return from_assertions(run_experiment(concentration_subset("rademacher"), "concentration")); }},
      {5, "epsilon-net sandwich brackets singular values", 0.0,
       [] { return from_assertions(run_experiment(concentration_subset("net"), "concentration")); }},
      {6, "influence tensorization on 20 fixtures", 0.0,
       [] { return from_assertions(run_experiment(concentration_subset("tensorization"), "concentration")); }},
      {7, "coupling law violation rate", 0.0, [&] { return from_assertions(robustify_result(), "coupling_"); }},
      {8, "robustification preserves prior marginals (KS)", 0.0,
       [&] { return from_assertions(robustify_result(), "ks_"); }},
      {9, "end-to-end revenue, BIC and IR budget on the separable benchmark", 180.0,
       [] { return run_config("separable-benchmark.json", "end2end"); }},
      {10, "exhaustive DSIC of sequential posted pricing", 0.0, dsic_certification},
      {11, "same seed gives byte-identical JSON reports", 0.0, determinism},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    std::vector<Check> checks;
    try {
      checks = c.body();
    } catch (const std::exception& e) {
      checks.push_back({"run", false, e.what()});
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (c.runtime_limit > 0.0)
      checks.push_back({"runtime", secs < c.runtime_limit, fmt(secs) + " s < " + fmt(c.runtime_limit) + " s"});
    bool ok = true;
    for (const auto& ch : checks) ok = ok && ch.passed;
    failed += !ok;
    std::printf("%s [%d] %s (%.2f s)\n", ok ? "PASS" : "FAIL", c.id, c.title.c_str(), secs);
    for (const auto& ch : checks)
      std::printf("       %s %s: %s\n", ch.passed ? "ok  " : "FAIL", ch.label.c_str(), ch.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed (build %s)\n", static_cast<int>(criteria.size()) - failed, criteria.size(),
              build_tag());
  return failed == 0 ? 0 : 1;
}
