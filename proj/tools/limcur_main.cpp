// Command-line entry point: run a scenario configuration, list the preset
// catalogue, or re-verify a stored run manifest.
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "limcur/reduce.hpp"
#include "limcur/scenario.hpp"

namespace {

// Default output root: --out beats the config value, which beats
// $LIMCUR_OUT_ROOT/<name>, which beats ./runs/<name>.
std::string resolve_out_dir(const limcur::ScenarioConfig& cfg, const std::string& cli_out) {
  if (!cli_out.empty()) return cli_out;
  if (!cfg.out_dir.empty()) return cfg.out_dir;
  std::string root = "runs";
  if (const char* env = std::getenv("LIMCUR_OUT_ROOT"); env != nullptr && *env != '\0') root = env;
  return (std::filesystem::path(root) / cfg.name).string();
}

void print_summary(const limcur::ScenarioResult& result) {
  std::cout << "scenario: " << result.config.name << "\n";
  if (!result.stages.empty()) {
    std::cout << "stages:\n";
    for (const limcur::StageCapture& cap : result.stages) {
      std::cout << "  p = " << cap.report.p << "  e_p = " << cap.report.e_p
                << "  mu_total = " << cap.mu_total
                << "  interior_charge = " << cap.interior_charge << "\n";
    }
  }
  if (result.diagnostics_ran) {
    const limcur::DiagnosticsReport& d = result.diagnostics;
    std::cout << "diagnostics: e_inf_prime = " << d.e_inf_prime
              << "  duality_min_gap = " << d.duality_min_gap
              << "  support_mass = " << d.support.mass_fraction
              << "  decay_max_ratio = " << d.decay.max_ratio << "\n";
  }
  for (const limcur::AssertionResult& a : result.assertions) {
    std::cout << (a.pass ? "  pass " : "  FAIL ") << a.name << "  value = " << a.value
              << "  bound = " << a.bound << "\n";
  }
  if (!result.error.empty()) std::cout << "error: " << result.error << "\n";
  std::cout << "manifest: " << result.manifest_path << "\n";
  std::cout << (result.pass ? "PASS" : "FAIL") << " (" << result.wall_ms / 1000.0 << " s)\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"p-harmonic continuation laboratory for limiting currents"};
  app.require_subcommand(1);

  int threads = 1;
  app.add_option("--threads", threads, "worker thread count (default 1)")
      ->check(CLI::PositiveNumber);

  std::string config_path, run_out;
  CLI::App* run = app.add_subcommand("run", "run a scenario from a key=value config file");
  run->add_option("config", config_path, "configuration file")->required();
  run->add_option("--out", run_out, "output directory (overrides the config)");

  CLI::App* presets = app.add_subcommand("presets", "list the preset scenarios");

  std::string manifest_path;
  CLI::App* check = app.add_subcommand("check", "re-verify a stored run manifest");
  check->add_option("manifest", manifest_path, "manifest.json from a previous run")->required();

  CLI11_PARSE(app, argc, argv);
  limcur::set_worker_count(threads);

  try {
    if (run->parsed()) {
      limcur::ScenarioConfig cfg = limcur::load_config(config_path);
      cfg.out_dir = resolve_out_dir(cfg, run_out);
      const limcur::ScenarioResult result = limcur::run_scenario(cfg);
      print_summary(result);
      return result.pass ? 0 : 1;
    }
    if (presets->parsed()) {
      std::cout << limcur::preset_table();
      return 0;
    }
    if (check->parsed()) {
      std::string report;
      const int rc = limcur::check_manifest(manifest_path, &report);
      std::cout << report;
      std::cout << (rc == 0 ? "PASS" : "FAIL") << "\n";
      return rc;
    }
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 2;
  }
  return 2;
}
