// Scenario orchestration: named presets, flat key=value configuration files,
// the end-to-end run pipeline (mesh, continuation, per-stage pair/current
// construction, diagnostics, file exports), and manifest verification.
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "limcur/boundary.hpp"
#include "limcur/current.hpp"
#include "limcur/diagnostics.hpp"
#include "limcur/mesh.hpp"
#include "limcur/solver.hpp"

namespace limcur {

// Everything one run needs: geometry, boundary data, schedule, diagnostics
// knobs, output location, and the assertion set the scenario promises.
// Assertion knobs with negative bounds are disabled.
struct ScenarioConfig {
  std::string name = "custom";
  DomainSpec domain = DomainSpec::rectangle({0.0, 0.0}, {1.0, 1.0}, 0.05);
  int n_comp = 1;
  std::string data_expr = "0";  // semicolon-separated component expressions
  PSchedule schedule;
  DiagnosticsConfig diag;
  bool with_diagnostics = true;
  bool export_fields = false;  // per-stage vertex field CSVs
  std::string out_dir;         // resolved by the CLI when empty
  std::uint64_t seed = 20260816;
  std::string note;  // one-line description for the preset table

  double e_stage_value = -1.0;  // every stage: |e_p - value| <= e_stage_tol
  double e_stage_tol = 1e-8;
  double e_final_value = -1.0;  // final stage: relative deviation <= e_final_rel
  double e_final_rel = -1.0;
  double trace_value = -1.0;  // e_inf_prime relative deviation <= trace_rel
  double trace_rel = -1.0;
  double trace_bound = -1.0;       // absolute cap on e_inf_prime (open trace gap)
  bool assert_uniform = false;     // uniform mu and constant direction, every stage
  bool assert_degenerate = false;  // e_p = 0 branch end to end
  Vec2 du_star_target{0.0, 0.0};
  double du_star_tol_cells = -1.0;  // argmax within this many pitches of target
  double support_mass_min = -1.0;   // support tube fractions at the final stage
  double support_area_max = -1.0;
  double boundary_action_rel = -1.0;  // |dT(u0) - e M| / (e M)
  double deficit_bound = -1.0;        // duality equality deficit cap
  bool assert_decay = false;          // boundary strip ratios <= diag.decay_beta
  bool assert_theta = false;          // theta worst_ratio <= diag.theta_C
  bool assert_rigidity = false;       // rigidity support_positive
  bool assert_mass_comparison = false;

  std::vector<std::pair<std::string, std::string>> echo;  // raw key=value pairs
};

std::vector<std::string> preset_names();
// Throws std::invalid_argument on an unknown name.
ScenarioConfig preset_config(const std::string& name);
// Text table (name, components, domain, description) for the CLI listing.
std::string preset_table();

// Applies key=value overrides in order; a leading "preset" key selects the
// base config. Throws std::invalid_argument on unknown keys or bad values.
ScenarioConfig config_from_pairs(const std::vector<std::pair<std::string, std::string>>& kv);
// Flat key=value file: one pair per line, '#' comments, blank lines ignored.
ScenarioConfig load_config(const std::string& path);

// Exhaustive boundary chord quotient of the two-arc data over `samples`
// equally spaced unit-circle points; the grid contains the optimal antipodal
// horizontal pair, so the value is the exact supremum 1/2.
double two_arc_pair_oracle(int samples);

struct AssertionResult {
  std::string name;
  double value = 0.0;
  double bound = 0.0;
  bool pass = false;
};

// Per-stage capture: the solver report plus the derived pair/current scalars.
struct StageCapture {
  StageReport report;
  double mu_total = 0.0;
  double second_moment_rel = 0.0;  // |sum mu |F|^2 - e^2| / e^2, 0 when degenerate
  double flux_defect = 0.0;        // half-edge representation defect
  double interior_charge = 0.0;    // l2 interior charge norm
  double boundary_action = 0.0;    // dT(data interpolant) at this stage
  double joint_mass = 0.0;
  double pohozaev = 0.0;
  double geodesic = 0.0;
  double mu_uniform_dev = 0.0;  // max_c |mu_c * area / area_c - 1|
  double dir_dev = 0.0;         // max deviation from the first massy direction
};

struct ScenarioResult {
  ScenarioConfig config;
  TriMesh mesh;
  TangentialTrace trace;
  DirichletData bc;
  ContinuationReport continuation;
  std::vector<StageCapture> stages;
  std::vector<NodalField> states;  // converged state per stage
  MeasureFunctionPair final_pair;
  CurrentTuple final_current;
  DiagnosticsReport diagnostics;
  bool diagnostics_ran = false;
  std::vector<AssertionResult> assertions;
  bool pass = false;
  std::string error;  // nonempty when the run aborted early
  double wall_ms = 0.0;
  std::string manifest_path;
};

// Full pipeline. Writes the output layout under config.out_dir and always
// leaves a manifest there, marked failed when an error interrupts the run.
ScenarioResult run_scenario(const ScenarioConfig& config);

// Re-verifies a stored manifest: referenced files exist, per-stage scalars
// match the stage files, assertion rows still hold. Appends one line per
// check to `report`; returns 0 when everything passes.
int check_manifest(const std::string& path, std::string* report);

}  // namespace limcur
