#include <chrono>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "latmech.hpp"

int main(int argc, char** argv) {
  CLI::App app{"latent-type auction experiments"};
  app.require_subcommand(1);

  std::string config, out = "reports";
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> trials;
  for (const auto& name : latmech::scenario_names()) {
    auto* sub = app.add_subcommand(name, "run the " + name + " scenario");
    sub->add_option("--config", config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "override the config seed");
    sub->add_option("--out", out, "report directory")->capture_default_str();
    sub->add_option("--trials", trials, "override the config trial count")->check(CLI::PositiveNumber);
  }
  CLI11_PARSE(app, argc, argv);
  const std::string scenario = app.get_subcommands().front()->get_name();

  try {
    const auto start = std::chrono::steady_clock::now();
    const latmech::ExperimentResult res = latmech::run_experiment(config, scenario, {seed, trials});
    latmech::write_outputs(res, out);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cout << res.name << " (" << scenario << ") seed=" << res.seed << " build=" << latmech::build_tag() << "\n";
    for (const auto& a : res.assertions)
      std::cout << (a.passed ? "  PASS " : "  FAIL ") << a.name << ": " << a.value << ' ' << a.relation << ' '
                << a.threshold << "\n";
    for (const auto& n : res.notes) std::cout << "  note: " << n << "\n";
    std::cout << "  wrote " << out << "/" << res.name << ".json in " << secs << " s\n";
    return res.passed() ? 0 : 1;
  } catch (const latmech::Error& e) {
    std::cerr << "error [" << latmech::to_string(e.kind()) << "]: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
