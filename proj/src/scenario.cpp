// Scenario pipeline: preset catalogue, key=value configuration, the run
// orchestration from mesh build through diagnostics and file exports, and
// post-hoc manifest verification.
#include "limcur/scenario.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <utility>

#include "json.hpp"
#include "limcur/bank.hpp"
#include "limcur/energy.hpp"
#include "limcur/expression.hpp"
#include "limcur/reduce.hpp"

namespace limcur {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

std::string trimmed(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return {};
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

double parse_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double x = 0.0;
  try {
    x = std::stod(v, &used);
  } catch (const std::exception&) {
    throw std::invalid_argument("config key '" + key + "': not a number: '" + v + "'");
  }
  require(trimmed(v.substr(used)).empty(), "config key '" + key + "': trailing text in '" + v + "'");
  return x;
}

int parse_int(const std::string& key, const std::string& v) {
  double x = parse_double(key, v);
  require(x == std::floor(x), "config key '" + key + "': expected an integer, got '" + v + "'");
  return static_cast<int>(x);
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw std::invalid_argument("config key '" + key + "': expected a boolean, got '" + v + "'");
}

std::string indexed_name(const char* stem, std::size_t i, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%04zu.%s", stem, i, ext);
  return buf;
}

std::string domain_label(const DomainSpec& d) {
  std::ostringstream os;
  os.precision(6);
  if (d.shape == DomainSpec::Shape::Rectangle) {
    os << "rectangle [" << d.rect_lo.x << "," << d.rect_hi.x << "]x[" << d.rect_lo.y << ","
       << d.rect_hi.y << "]";
  } else if (d.shape == DomainSpec::Shape::Disk) {
    os << "disk r=" << d.radius << " at (" << d.centre.x << "," << d.centre.y << ")";
  } else {
    os << "polygon (" << d.polygon.size() << " vertices)";
  }
  os << ", h=" << d.h;
  return os.str();
}

// Doubling p schedule from 2 up to and including p_max.
std::vector<double> doubling_schedule(double p_max) {
  require(p_max >= 2.0, "schedule.p_max must be at least 2");
  std::vector<double> out;
  for (double p = 2.0; p <= p_max * (1.0 + 1e-12); p *= 2.0) out.push_back(p);
  require(std::abs(out.back() - p_max) <= 1e-9 * p_max,
          "schedule.p_max must be a power of two times 2");
  return out;
}

const char* kPresetNames[] = {"identity-square", "affine-square", "strip",
                              "aronsson-disk",   "two-arc-disk",  "constant"};

}  // namespace

std::vector<std::string> preset_names() {
  return {std::begin(kPresetNames), std::end(kPresetNames)};
}

double two_arc_pair_oracle(int samples) {
  require(samples >= 2, "two_arc_pair_oracle: need at least two samples");
  const std::size_t n = static_cast<std::size_t>(samples);
  std::vector<double> px(n), py(n), val(n);
  for (std::size_t j = 0; j < n; ++j) {
    const double th = 2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(n);
    px[j] = std::cos(th);
    py[j] = std::sin(th);
    val[j] = 1.0 - std::atan2(std::abs(py[j]), px[j]) / std::numbers::pi;
  }
  double best = 0.0;
  for (std::size_t j = 0; j + 1 < n; ++j) {
    for (std::size_t k = j + 1; k < n; ++k) {
      const double dx = px[j] - px[k], dy = py[j] - py[k];
      const double d2 = dx * dx + dy * dy;
      if (d2 <= 0.0) continue;
      const double q = std::abs(val[j] - val[k]) / std::sqrt(d2);
      if (q > best) best = q;
    }
  }
  return best;
}

ScenarioConfig preset_config(const std::string& name) {
  ScenarioConfig cfg;
  cfg.name = name;
  if (name == "identity-square") {
    cfg.domain = DomainSpec::rectangle({0.0, 0.0}, {1.0, 1.0}, 0.02);
    cfg.data_expr = "x1;x2";
    cfg.n_comp = 2;
    cfg.e_stage_value = std::numbers::sqrt2;
    cfg.e_stage_tol = 1e-8;
    cfg.assert_uniform = true;
    cfg.assert_rigidity = true;
    cfg.assert_mass_comparison = true;
    cfg.note = "vector identity data; uniform measure and constant direction at every stage";
  } else if (name == "affine-square") {
    cfg.domain = DomainSpec::rectangle({0.0, 0.0}, {1.0, 1.0}, 0.02);
    cfg.data_expr = "0.8*x1 + 0.6*x2; 0.5*x1 - 0.5*x2";
    cfg.n_comp = 2;
    cfg.e_stage_value = std::sqrt(1.5);
    cfg.e_stage_tol = 1e-8;
    cfg.assert_uniform = true;
    cfg.assert_rigidity = true;
    cfg.assert_mass_comparison = true;
    cfg.note = "generic affine data; the interpolated data stays exactly stationary";
  } else if (name == "strip") {
    cfg.domain = DomainSpec::rectangle({0.0, 0.0}, {1.0, 1.0}, 0.02);
    cfg.data_expr = "x1";
    cfg.n_comp = 1;
    cfg.schedule.tol = 1e-10;
    cfg.e_stage_value = 1.0;
    cfg.e_stage_tol = 1e-8;
    cfg.assert_uniform = true;
    cfg.deficit_bound = 1e-8;
    cfg.assert_rigidity = true;
    cfg.assert_mass_comparison = true;
    cfg.note = "scalar ramp; exact duality equality case, tight solver tolerance";
  } else if (name == "aronsson-disk") {
    const double r = std::numbers::sqrt2 / (std::numbers::sqrt2 + 1.0);
    const double c = 1.0 - r / std::numbers::sqrt2;
    cfg.domain = DomainSpec::disk({c, c}, r, 0.01);
    cfg.data_expr = "sign(x1)*abs(x1)^(4/3) - sign(x2)*abs(x2)^(4/3)";
    cfg.n_comp = 1;
    cfg.e_final_value = 4.0 * std::numbers::sqrt2 / 3.0;
    cfg.e_final_rel = 0.02;
    cfg.trace_value = 4.0 * std::numbers::sqrt2 / 3.0;
    cfg.trace_rel = 0.02;
    cfg.du_star_target = {1.0, 1.0};
    cfg.du_star_tol_cells = 2.0;
    cfg.assert_mass_comparison = true;
    cfg.note = "power-law data on a corner-tangent disk; gradient peaks at the far point";
  } else if (name == "two-arc-disk") {
    cfg.domain = DomainSpec::disk({0.0, 0.0}, 1.0, 0.01);
    cfg.data_expr = "1 - atan2(abs(x2), x1)/pi";
    cfg.n_comp = 1;
    cfg.e_final_value = two_arc_pair_oracle(2000);
    cfg.e_final_rel = 0.02;
    cfg.trace_bound = 0.36;
    cfg.support_mass_min = 0.9;
    cfg.support_area_max = 0.3;
    cfg.boundary_action_rel = 0.05;
    cfg.assert_decay = true;
    cfg.assert_theta = true;
    cfg.assert_rigidity = true;
    cfg.assert_mass_comparison = true;
    cfg.note = "arc-to-arc ramp; mass concentrates in a tube around the horizontal diameter";
  } else if (name == "constant") {
    cfg.domain = DomainSpec::rectangle({0.0, 0.0}, {1.0, 1.0}, 0.05);
    cfg.data_expr = "0.7";
    cfg.n_comp = 1;
    cfg.assert_degenerate = true;
    cfg.note = "constant data; degenerate zero-energy branch end to end";
  } else {
    throw std::invalid_argument("unknown preset '" + name + "'");
  }
  return cfg;
}

std::string preset_table() {
  std::ostringstream os;
  os << std::left << std::setw(17) << "name" << std::setw(7) << "comps" << std::setw(47)
     << "domain" << "description\n";
  for (const auto& name : preset_names()) {
    const ScenarioConfig cfg = preset_config(name);
    os << std::left << std::setw(17) << cfg.name << std::setw(7) << cfg.n_comp << std::setw(47)
       << domain_label(cfg.domain) << cfg.note << "\n";
  }
  return os.str();
}

ScenarioConfig config_from_pairs(const std::vector<std::pair<std::string, std::string>>& kv) {
  ScenarioConfig cfg;
  int explicit_n_comp = -1;
  double p_max = -1.0;
  bool first = true;
  for (const auto& [key, value] : kv) {
    if (key == "preset") {
      require(first, "config: 'preset' must be the first key so overrides are kept");
      cfg = preset_config(value);
    } else if (key == "name") {
      cfg.name = value;
    } else if (key == "data") {
      cfg.data_expr = value;
    } else if (key == "n_comp") {
      explicit_n_comp = parse_int(key, value);
    } else if (key == "out_dir" || key == "out") {
      cfg.out_dir = value;
    } else if (key == "seed") {
      cfg.seed = static_cast<std::uint64_t>(parse_double(key, value));
    } else if (key == "export_fields") {
      cfg.export_fields = parse_bool(key, value);
    } else if (key == "diagnostics") {
      cfg.with_diagnostics = parse_bool(key, value);
    } else if (key == "domain.shape") {
      if (value == "rectangle") {
        cfg.domain.shape = DomainSpec::Shape::Rectangle;
      } else if (value == "disk") {
        cfg.domain.shape = DomainSpec::Shape::Disk;
      } else {
        throw std::invalid_argument(
            "config key 'domain.shape': expected rectangle or disk; polygon domains are "
            "available through the library interface");
      }
    } else if (key == "domain.lo_x") {
      cfg.domain.rect_lo.x = parse_double(key, value);
    } else if (key == "domain.lo_y") {
      cfg.domain.rect_lo.y = parse_double(key, value);
    } else if (key == "domain.hi_x") {
      cfg.domain.rect_hi.x = parse_double(key, value);
    } else if (key == "domain.hi_y") {
      cfg.domain.rect_hi.y = parse_double(key, value);
    } else if (key == "domain.centre_x") {
      cfg.domain.centre.x = parse_double(key, value);
    } else if (key == "domain.centre_y") {
      cfg.domain.centre.y = parse_double(key, value);
    } else if (key == "domain.radius") {
      cfg.domain.radius = parse_double(key, value);
    } else if (key == "mesh.h") {
      cfg.domain.h = parse_double(key, value);
    } else if (key == "schedule.p_max") {
      p_max = parse_double(key, value);
    } else if (key == "schedule.tol") {
      cfg.schedule.tol = parse_double(key, value);
    } else if (key == "schedule.eps_floor") {
      cfg.schedule.eps_floor = parse_double(key, value);
    } else if (key == "schedule.newton_max") {
      cfg.schedule.newton_max = parse_int(key, value);
    } else if (key == "schedule.cg_max_iter") {
      cfg.schedule.cg_max_iter = parse_int(key, value);
    } else if (key == "schedule.polish_max_rounds") {
      cfg.schedule.polish_max_rounds = parse_int(key, value);
    } else if (key == "diag.bank_per_axis") {
      cfg.diag.bank_per_axis = parse_int(key, value);
    } else if (key == "diag.theta_points") {
      cfg.diag.theta_points = parse_int(key, value);
    } else if (key == "diag.theta_c") {
      cfg.diag.theta_C = parse_double(key, value);
    } else if (key == "diag.duality_draws") {
      cfg.diag.duality_draws = parse_int(key, value);
    } else if (key == "diag.support_threshold") {
      cfg.diag.support_threshold = parse_double(key, value);
    } else if (key == "diag.mass_competitors") {
      cfg.diag.mass_competitors = parse_int(key, value);
    } else if (key == "diag.decay_beta") {
      cfg.diag.decay_beta = parse_double(key, value);
    } else {
      throw std::invalid_argument("config: unknown key '" + key + "'");
    }
    cfg.echo.emplace_back(key, value);
    first = false;
  }
  if (p_max > 0.0) cfg.schedule.p_list = doubling_schedule(p_max);
  const std::size_t n_expr = parse_components(cfg.data_expr).size();
  if (explicit_n_comp >= 0) {
    require(static_cast<std::size_t>(explicit_n_comp) == n_expr,
            "config: n_comp does not match the number of data components");
  }
  cfg.n_comp = static_cast<int>(n_expr);
  require(cfg.n_comp >= 1, "config: at least one data component is required");
  require(cfg.domain.h > 0.0, "config: mesh.h must be positive");
  require(cfg.schedule.tol > 0.0, "config: schedule.tol must be positive");
  require(!cfg.schedule.p_list.empty(), "config: empty p schedule");
  return cfg;
}

ScenarioConfig load_config(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open config file '" + path + "'");
  std::vector<std::pair<std::string, std::string>> kv;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trimmed(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    require(eq != std::string::npos,
            path + ":" + std::to_string(line_no) + ": expected key = value");
    const std::string key = trimmed(line.substr(0, eq));
    const std::string value = trimmed(line.substr(eq + 1));
    require(!key.empty(), path + ":" + std::to_string(line_no) + ": empty key");
    kv.emplace_back(key, value);
  }
  return config_from_pairs(kv);
}

namespace {

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out.good()) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
  out.close();
  if (!out.good()) throw std::runtime_error("write failed for '" + path.string() + "'");
}

void write_json_file(const fs::path& path, const json& j) { write_text_file(path, j.dump(1) + "\n"); }

void write_fields_csv(const fs::path& path, const TriMesh& mesh, const NodalField& u,
                      const std::vector<double>* du_star_col) {
  std::ostringstream os;
  os.precision(17);
  os << "vertex,x,y";
  for (int k = 0; k < u.n_comp; ++k) os << ",u" << k;
  if (du_star_col) os << ",du_star";
  os << "\n";
  for (std::size_t i = 0; i < mesh.n_vertices(); ++i) {
    os << i << "," << mesh.vertices[i].x << "," << mesh.vertices[i].y;
    for (int k = 0; k < u.n_comp; ++k) os << "," << u.at(k, i);
    if (du_star_col) os << "," << (*du_star_col)[i];
    os << "\n";
  }
  write_text_file(path, os.str());
}

json vec2_json(const Vec2& v) { return json::array({v.x, v.y}); }

json stage_json(std::size_t index, const StageCapture& cap) {
  const StageReport& r = cap.report;
  json j;
  j["index"] = index;
  j["p"] = r.p;
  j["eps_final"] = r.eps_final;
  j["e_p"] = r.e_p;
  j["E_inf"] = r.E_inf;
  j["F_value"] = r.F_value;
  j["grad_norm"] = r.grad_norm;
  j["grad_rhs"] = r.grad_rhs;
  j["mu_residual"] = r.mu_residual;
  j["mu_rhs"] = r.mu_rhs;
  j["M"] = r.M;
  j["e_guess"] = r.e_guess;
  j["chain_prev_e"] = r.chain_prev_e;
  j["chain_Eq_at_up"] = r.chain_Eq_at_up;
  j["newton_iters"] = r.newton_iters;
  j["cg_iters"] = r.cg_iters;
  j["wall_ms"] = r.wall_ms;
  j["degenerate"] = r.degenerate;
  j["mu_total"] = cap.mu_total;
  j["second_moment_rel"] = cap.second_moment_rel;
  j["flux_defect"] = cap.flux_defect;
  j["interior_charge"] = cap.interior_charge;
  j["boundary_action"] = cap.boundary_action;
  j["joint_mass"] = cap.joint_mass;
  j["pohozaev"] = cap.pohozaev;
  j["geodesic"] = cap.geodesic;
  j["mu_uniform_dev"] = cap.mu_uniform_dev;
  j["dir_dev"] = cap.dir_dev;
  return j;
}

json diagnostics_json(const DiagnosticsReport& d) {
  json j;
  j["p"] = d.p;
  j["e"] = d.e;
  j["pohozaev"] = d.pohozaev;
  j["geodesic"] = d.geodesic;
  {
    json t;
    t["radii"] = d.theta.radii;
    t["worst_ratio"] = d.theta.worst_ratio;
    t["n_skipped"] = d.theta.n_skipped;
    json samples = json::array();
    for (const auto& s : d.theta.samples) {
      json e;
      e["x0"] = vec2_json(s.x0);
      e["theta"] = s.theta;
      e["violation_ratio"] = s.violation_ratio;
      e["worst_identity_mismatch"] = s.worst_identity_mismatch;
      e["skipped"] = s.skipped;
      samples.push_back(std::move(e));
    }
    t["samples"] = std::move(samples);
    j["theta"] = std::move(t);
  }
  {
    json s;
    s["threshold"] = d.support.threshold;
    s["mass_fraction"] = d.support.mass_fraction;
    s["area_fraction"] = d.support.area_fraction;
    s["max_density"] = d.support.max_density;
    s["empty"] = d.support.empty;
    s["n_cells"] = d.support.cells.size();
    s["cells"] = d.support.cells;
    j["support"] = std::move(s);
  }
  j["support_mean_du_star"] = d.support_mean_du_star;
  {
    json s;
    s["min"] = d.du_star_min;
    s["max"] = d.du_star_max;
    s["argmax_vertex"] = d.du_star_argmax;
    s["argmax_pos"] = vec2_json(d.du_star_argmax_pos);
    j["du_star"] = std::move(s);
  }
  {
    json s;
    s["min_gap"] = d.duality_min_gap;
    s["equality_deficit"] = d.duality_equality_deficit;
    s["draws"] = d.duality_draws_run;
    j["duality"] = std::move(s);
  }
  {
    json s;
    s["radii"] = d.decay.radii;
    s["ratios"] = d.decay.ratios;
    s["max_ratio"] = d.decay.max_ratio;
    s["asserted"] = d.decay_asserted;
    j["decay"] = std::move(s);
  }
  j["e_inf_prime"] = d.e_inf_prime;
  {
    json s;
    s["support_positive"] = d.rigidity.support_positive;
    s["n_slack"] = d.rigidity.n_slack;
    json entries = json::array();
    for (const auto& e : d.rigidity.entries) {
      json row;
      row["bump"] = e.bump;
      row["comp"] = e.comp;
      row["mass_fraction"] = e.mass_fraction;
      row["min_dE"] = e.min_dE;
      row["max_dE"] = e.max_dE;
      entries.push_back(std::move(row));
    }
    s["entries"] = std::move(entries);
    j["rigidity"] = std::move(s);
  }
  {
    json s;
    s["mass_T"] = d.mass_comparison.mass_T;
    s["mass_S"] = d.mass_comparison.mass_S;
    s["holds"] = d.mass_comparison.holds;
    s["worst_form_defect"] = d.mass_comparison.worst_form_defect;
    s["margin_min"] = d.mass_margin_min;
    s["competitors"] = d.mass_competitors_run;
    j["mass_comparison"] = std::move(s);
  }
  {
    json s;
    s["radii"] = d.mollify_radii;
    s["trace"] = d.mollify_trace;
    s["under_resolved"] = d.mollify_under_resolved;
    s["commutator"] = d.mollifier_commutator_norm;
    j["mollify"] = std::move(s);
  }
  j["boundary_action_data"] = d.boundary_action_data;
  return j;
}

// Scale for residual comparisons at stage tolerance tol: tol * (1 + e^2).
double stage_tol_scale(double tol, double e) { return tol * (1.0 + e * e); }

struct AssertionSink {
  std::vector<AssertionResult> rows;
  void add(const std::string& name, double value, double bound) {
    rows.push_back({name, value, bound, value <= bound});
  }
};

}  // namespace

ScenarioResult run_scenario(const ScenarioConfig& config) {
  const auto t0 = std::chrono::steady_clock::now();
  ScenarioResult R;
  R.config = config;
  const ScenarioConfig& cfg = R.config;
  require(!cfg.out_dir.empty(), "run_scenario: output directory is empty");
  const fs::path out(cfg.out_dir);
  fs::create_directories(out);

  std::vector<std::string> stage_files, field_files;
  bool have_flux = false;
  BoundaryMFPair final_flux;

  try {
    R.mesh = build_mesh(cfg.domain);
    const TriMesh& mesh = R.mesh;

    const std::vector<Expression> exprs = parse_components(cfg.data_expr);
    require(static_cast<int>(exprs.size()) == cfg.n_comp,
            "run_scenario: component count mismatch");
    const BoundaryFn data_fn = [&exprs](const Vec2& x, double* outv) {
      for (std::size_t k = 0; k < exprs.size(); ++k) outv[k] = exprs[k].eval(x.x, x.y);
    };

    R.bc.fixed = mesh.is_boundary_vertex;
    R.bc.values = NodalField(cfg.n_comp, mesh.n_vertices());
    {
      std::vector<double> tmp(static_cast<std::size_t>(cfg.n_comp));
      for (std::size_t i = 0; i < mesh.n_vertices(); ++i) {
        data_fn(mesh.vertices[i], tmp.data());
        for (int k = 0; k < cfg.n_comp; ++k) R.bc.values.at(k, i) = tmp[static_cast<std::size_t>(k)];
      }
    }

    R.trace = trace_tangential(mesh, cfg.n_comp, data_fn, 8);
    export_mesh_csv(mesh, (out / "mesh.csv").string());

    std::string continuation_error;
    try {
      R.continuation = continue_in_p(
          mesh, R.bc, cfg.schedule,
          [&R](const StageReport& sr, const NodalField& u) {
            StageCapture cap;
            cap.report = sr;
            R.stages.push_back(std::move(cap));
            R.states.push_back(u);
          },
          nullptr);
    } catch (const IterationCapError& ex) {
      std::ostringstream os;
      os << "continuation stalled at p = " << ex.p_value << ", eps = " << ex.eps_value
         << " (residual " << ex.residual << "): " << ex.what();
      continuation_error = os.str();
    }

    // Per-stage pair/current scalars, over whatever stages completed.
    const TestFieldBank bank =
        TestFieldBank::for_domain(cfg.domain, mesh, cfg.diag.bank_per_axis,
                                  cfg.diag.bank_margin_cells);
    std::vector<double> dir_ref;  // first massy direction seen, across stages
    for (std::size_t i = 0; i < R.stages.size(); ++i) {
      StageCapture& cap = R.stages[i];
      const StageReport& sr = cap.report;
      try {
        const NodalField& u = R.states[i];
        MeasureFunctionPair pair = make_pair(mesh, u, sr.p, sr.e_p);
        cap.mu_total = pair.mass;
        cap.second_moment_rel =
            pair.degenerate || sr.e_p <= 0.0
                ? 0.0
                : std::abs(pair.second_moment - sr.e_p * sr.e_p) / (sr.e_p * sr.e_p);
        CurrentTuple T = make_current(mesh, pair, sr.e_p);
        cap.interior_charge = T.interior_charge_norm;
        cap.joint_mass = T.joint_mass;
        cap.boundary_action = boundary_pairing(mesh, T, R.bc.values);
        BoundaryMFPair flux;
        const bool has_flux_pair = !pair.degenerate && sr.e_p > 0.0;
        if (has_flux_pair) {
          flux = discrete_flux_pair(mesh, u, sr.p, sr.e_p, sr.mu_residual, sr.mu_rhs);
          cap.flux_defect = flux.representation_defect;
        }
        cap.pohozaev = pohozaev_residual(mesh, pair, bank);
        cap.geodesic = geodesic_residual(mesh, T, bank);

        const std::size_t nk = static_cast<std::size_t>(pair.n_comp);
        double mu_dev = 0.0, dir_dev = 0.0;
        for (std::size_t c = 0; c < mesh.n_cells(); ++c) {
          if (!pair.degenerate) {
            const double rel = pair.mu[c] * mesh.area / mesh.cell_areas[c] - 1.0;
            mu_dev = std::max(mu_dev, std::abs(rel));
          }
          if (T.mass[c] > 0.0) {
            if (dir_ref.empty()) {
              dir_ref.resize(nk * 2);
              for (std::size_t k = 0; k < nk; ++k) {
                dir_ref[k * 2] = T.dir.at(c, static_cast<int>(k), 0);
                dir_ref[k * 2 + 1] = T.dir.at(c, static_cast<int>(k), 1);
              }
            }
            for (std::size_t k = 0; k < nk; ++k) {
              dir_dev = std::max(
                  dir_dev, std::abs(T.dir.at(c, static_cast<int>(k), 0) - dir_ref[k * 2]));
              dir_dev = std::max(
                  dir_dev, std::abs(T.dir.at(c, static_cast<int>(k), 1) - dir_ref[k * 2 + 1]));
            }
          }
        }
        cap.mu_uniform_dev = mu_dev;
        cap.dir_dev = dir_dev;

        if (i + 1 == R.stages.size() && continuation_error.empty()) {
          R.final_pair = std::move(pair);
          R.final_current = std::move(T);
          if (has_flux_pair) {
            final_flux = std::move(flux);
            have_flux = true;
          }
        }
        const std::string sname = indexed_name("stage", i, "json");
        write_json_file(out / sname, stage_json(i, cap));
        stage_files.push_back(sname);
        if (cfg.export_fields) {
          const std::string fname = indexed_name("fields", i, "csv");
          write_fields_csv(out / fname, mesh, u, nullptr);
          field_files.push_back(fname);
        }
      } catch (const std::exception& ex) {
        std::ostringstream os;
        os << "stage " << i << " (p = " << sr.p << "): " << ex.what();
        throw std::runtime_error(os.str());
      }
    }
    if (!continuation_error.empty()) throw std::runtime_error(continuation_error);
    require(!R.stages.empty(), "run_scenario: empty schedule produced no stages");

    export_current_csv(mesh, R.final_current, (out / "current.csv").string());
    export_boundary_csv(mesh, R.trace, have_flux ? &final_flux : nullptr,
                        (out / "boundary.csv").string());

    if (cfg.with_diagnostics) {
      try {
        DiagnosticsConfig dc = cfg.diag;
        dc.seed = cfg.seed;
        dc.assert_decay = cfg.assert_decay;
        R.diagnostics = run_diagnostics(mesh, cfg.domain, R.states.back(), R.final_pair,
                                        R.final_current, R.trace, R.bc, dc);
        R.diagnostics_ran = true;
        write_json_file(out / "diagnostics.json", diagnostics_json(R.diagnostics));
        const std::size_t last = R.stages.size() - 1;
        const std::string fname = indexed_name("fields", last, "csv");
        write_fields_csv(out / fname, mesh, R.states.back(), &R.diagnostics.du_star_field);
        if (field_files.empty() || field_files.back() != fname) field_files.push_back(fname);
      } catch (const std::exception& ex) {
        throw std::runtime_error(std::string("diagnostics: ") + ex.what());
      }
    }

    // Assertion sweep.
    AssertionSink sink;
    {
      const double tol = cfg.schedule.tol;
      double mu_excess = 0.0, sm_rel = 0.0, flux_defect = 0.0, interior_ratio = 0.0;
      for (const StageCapture& cap : R.stages) {
        mu_excess = std::max(mu_excess, cap.mu_total - 1.0);
        sm_rel = std::max(sm_rel, cap.second_moment_rel);
        flux_defect = std::max(flux_defect, cap.flux_defect);
        interior_ratio = std::max(
            interior_ratio, cap.interior_charge / stage_tol_scale(tol, cap.report.e_p));
      }
      sink.add("mu_total_excess", mu_excess, 1e-12);
      sink.add("second_moment_rel", sm_rel, 1e-12);
      sink.add("flux_identity_defect", flux_defect, 1e-10);
      sink.add("interior_charge_ratio", interior_ratio, 10.0);

      double e_drop = 0.0;
      for (std::size_t i = 1; i < R.stages.size(); ++i) {
        const double prev = R.stages[i - 1].report.e_p;
        const double cur = R.stages[i].report.e_p;
        e_drop = std::max(e_drop, (prev - cur) / stage_tol_scale(tol, cur));
      }
      sink.add("e_p_monotone_ratio", e_drop, 10.0);

      // Full pairwise chain E_q(u_q) <= E_q(u_p) <= E_p(u_p) for q < p.
      double chain = 0.0;
      for (std::size_t iq = 0; iq < R.stages.size(); ++iq) {
        const double q = R.stages[iq].report.p;
        const double Eq_uq = R.stages[iq].report.e_p;
        for (std::size_t ip = iq + 1; ip < R.stages.size(); ++ip) {
          const double Ep_up = R.stages[ip].report.e_p;
          const double Eq_up = eval_E_p(R.mesh, R.states[ip], {q, 0.0, 1.0});
          const double s = stage_tol_scale(tol, Ep_up);
          chain = std::max(chain, (Eq_uq - Eq_up) / s);
          chain = std::max(chain, (Eq_up - Ep_up) / s);
        }
      }
      sink.add("energy_chain_ratio", chain, 10.0);

      // Mass-estimate inequality on the final pair over a fixed 16-bump bank.
      {
        const TestFieldBank bank16 = TestFieldBank::for_domain(cfg.domain, R.mesh, 4, 2.0);
        double min_slack = 0.0;
        for (const ScalarBump& bump : bank16.entries) {
          const std::vector<double> xi = cell_means(R.mesh, bump);
          for (const double alpha : {0.5, 0.9}) {
            const MassEstimateCheck chk = mass_estimate_check(R.final_pair, xi, 1.0, alpha);
            min_slack = std::min(min_slack, chk.slack);
          }
        }
        sink.add("mass_estimate_slack", -min_slack, 1e-10);
      }

      if (cfg.e_stage_value > 0.0) {
        double dev = 0.0;
        for (const StageCapture& cap : R.stages)
          dev = std::max(dev, std::abs(cap.report.e_p - cfg.e_stage_value));
        sink.add("e_stage_abs_dev", dev, cfg.e_stage_tol);
      }
      if (cfg.e_final_value > 0.0 && cfg.e_final_rel > 0.0) {
        const double e = R.stages.back().report.e_p;
        sink.add("e_final_rel_dev", std::abs(e - cfg.e_final_value) / cfg.e_final_value,
                 cfg.e_final_rel);
      }
      if (cfg.trace_value > 0.0 && cfg.trace_rel > 0.0) {
        sink.add("trace_rel_dev",
                 std::abs(R.trace.e_inf_prime - cfg.trace_value) / cfg.trace_value,
                 cfg.trace_rel);
      }
      if (cfg.trace_bound > 0.0) sink.add("trace_slope_cap", R.trace.e_inf_prime, cfg.trace_bound);
      if (cfg.assert_uniform) {
        double mu_dev = 0.0, dir_dev = 0.0;
        for (const StageCapture& cap : R.stages) {
          mu_dev = std::max(mu_dev, cap.mu_uniform_dev);
          dir_dev = std::max(dir_dev, cap.dir_dev);
        }
        sink.add("mu_uniform_dev", mu_dev, 1e-8);
        sink.add("dir_constant_dev", dir_dev, 1e-8);
      }
      if (cfg.assert_degenerate) {
        double worst = 0.0;
        for (const StageCapture& cap : R.stages) {
          worst = std::max(worst, std::abs(cap.report.e_p));
          if (!cap.report.degenerate) worst = std::max(worst, 1.0);
        }
        if (!R.final_current.degenerate) worst = std::max(worst, 1.0);
        sink.add("degenerate_branch", worst, 0.0);
      }
      if (R.diagnostics_ran) {
        const DiagnosticsReport& d = R.diagnostics;
        sink.add("duality_min_gap", -d.duality_min_gap, 1e-10);
        if (cfg.deficit_bound > 0.0)
          sink.add("duality_equality_deficit", d.duality_equality_deficit, cfg.deficit_bound);
        if (cfg.du_star_tol_cells > 0.0) {
          const double dx = d.du_star_argmax_pos.x - cfg.du_star_target.x;
          const double dy = d.du_star_argmax_pos.y - cfg.du_star_target.y;
          sink.add("du_star_argmax_dist", std::sqrt(dx * dx + dy * dy),
                   cfg.du_star_tol_cells * R.mesh.target_h);
        }
        if (cfg.support_mass_min > 0.0)
          sink.add("support_mass_deficit", 1.0 - d.support.mass_fraction,
                   1.0 - cfg.support_mass_min);
        if (cfg.support_area_max > 0.0)
          sink.add("support_area_fraction", d.support.area_fraction, cfg.support_area_max);
        if (cfg.assert_decay) sink.add("decay_max_ratio", d.decay.max_ratio, cfg.diag.decay_beta);
        if (cfg.assert_theta) sink.add("theta_worst_ratio", d.theta.worst_ratio, cfg.diag.theta_C);
        if (cfg.boundary_action_rel > 0.0) {
          const double scale = d.e * R.final_current.joint_mass;
          const double dev =
              scale > 0.0 ? std::abs(d.boundary_action_data - scale) / scale : 0.0;
          sink.add("boundary_action_rel_dev", dev, cfg.boundary_action_rel);
        }
        if (cfg.assert_rigidity)
          sink.add("rigidity_support_positive", d.rigidity.support_positive ? 0.0 : 1.0, 0.0);
        if (cfg.assert_mass_comparison && d.mass_competitors_run > 0)
          sink.add("mass_comparison_holds", d.mass_comparison.holds ? 0.0 : 1.0, 0.0);
      }
    }
    R.assertions = std::move(sink.rows);
    R.pass = true;
    for (const AssertionResult& a : R.assertions) R.pass = R.pass && a.pass;
  } catch (const std::exception& ex) {
    R.error = ex.what();
    R.pass = false;
  }

  const auto t1 = std::chrono::steady_clock::now();
  R.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();

  // Manifest, written on success and failure alike.
  json m;
  m["name"] = cfg.name;
  m["software"] = {{"name", "limcur"}, {"version", "0.1.0"}};
  m["threads"] = worker_count();
  m["seed"] = cfg.seed;
  {
    json echo = json::array();
    for (const auto& [k, v] : cfg.echo) echo.push_back(json::array({k, v}));
    json c;
    c["echo"] = std::move(echo);
    c["data"] = cfg.data_expr;
    c["n_comp"] = cfg.n_comp;
    c["domain"] = domain_label(cfg.domain);
    c["p_max"] = cfg.schedule.p_list.empty() ? 0.0 : cfg.schedule.p_list.back();
    c["tol"] = cfg.schedule.tol;
    c["with_diagnostics"] = cfg.with_diagnostics;
    c["export_fields"] = cfg.export_fields;
    m["config"] = std::move(c);
  }
  if (!R.mesh.vertices.empty()) {
    m["mesh"] = {{"n_vertices", R.mesh.n_vertices()},
                 {"n_cells", R.mesh.n_cells()},
                 {"h_max", R.mesh.h_max},
                 {"target_h", R.mesh.target_h},
                 {"area", R.mesh.area}};
  }
  {
    json files;
    files["mesh"] = "mesh.csv";
    files["stages"] = stage_files;
    files["fields"] = field_files;
    if (!R.stages.empty() && R.error.empty()) {
      files["current"] = "current.csv";
      files["boundary"] = "boundary.csv";
    }
    if (R.diagnostics_ran) files["diagnostics"] = "diagnostics.json";
    m["files"] = std::move(files);
  }
  {
    json rows = json::array();
    for (std::size_t i = 0; i < R.stages.size(); ++i) rows.push_back(stage_json(i, R.stages[i]));
    m["stage_summary"] = std::move(rows);
  }
  m["e_inf_of_data_interpolant"] = R.continuation.e_inf_of_data_interpolant;
  m["e_inf_prime"] = R.trace.e_inf_prime;
  if (R.diagnostics_ran) {
    const DiagnosticsReport& d = R.diagnostics;
    json s;
    s["pohozaev"] = d.pohozaev;
    s["geodesic"] = d.geodesic;
    s["theta_worst_ratio"] = d.theta.worst_ratio;
    s["theta_C"] = cfg.diag.theta_C;
    s["theta_skipped"] = d.theta.n_skipped;
    s["support_mass_fraction"] = d.support.mass_fraction;
    s["support_area_fraction"] = d.support.area_fraction;
    s["support_mean_du_star"] = d.support_mean_du_star;
    s["du_star_max"] = d.du_star_max;
    s["du_star_argmax_pos"] = vec2_json(d.du_star_argmax_pos);
    s["duality_min_gap"] = d.duality_min_gap;
    s["duality_equality_deficit"] = d.duality_equality_deficit;
    s["duality_draws"] = d.duality_draws_run;
    s["decay_max_ratio"] = d.decay.max_ratio;
    s["decay_asserted"] = d.decay_asserted;
    s["rigidity_support_positive"] = d.rigidity.support_positive;
    s["rigidity_slack"] = d.rigidity.n_slack;
    s["mass_margin_min"] = d.mass_margin_min;
    s["mass_competitors_run"] = d.mass_competitors_run;
    s["mass_holds"] = d.mass_comparison.holds;
    s["mollifier_commutator"] = d.mollifier_commutator_norm;
    s["boundary_action_data"] = d.boundary_action_data;
    m["diagnostics_summary"] = std::move(s);
  }
  {
    json rows = json::array();
    for (const AssertionResult& a : R.assertions) {
      rows.push_back(
          {{"name", a.name}, {"value", a.value}, {"bound", a.bound}, {"pass", a.pass}});
    }
    m["assertions"] = std::move(rows);
  }
  m["pass"] = R.pass;
  if (!R.error.empty()) m["error"] = R.error;
  m["wall_ms"] = R.wall_ms;

  const fs::path mpath = out / "manifest.json";
  write_json_file(mpath, m);
  R.manifest_path = mpath.string();
  return R;
}

namespace {

// Stage-summary keys cross-checked against the per-stage files.
const char* kStageCheckKeys[] = {"p",
                                 "e_p",
                                 "eps_final",
                                 "mu_total",
                                 "second_moment_rel",
                                 "flux_defect",
                                 "interior_charge",
                                 "boundary_action",
                                 "joint_mass",
                                 "pohozaev",
                                 "geodesic"};

}  // namespace

int check_manifest(const std::string& path, std::string* report) {
  std::ostringstream os;
  int fails = 0;
  const auto note = [&](bool ok, const std::string& what) {
    os << (ok ? "OK   " : "FAIL ") << what << "\n";
    if (!ok) ++fails;
  };
  json m;
  try {
    std::ifstream in(path);
    if (!in.good()) throw std::runtime_error("cannot open '" + path + "'");
    in >> m;
  } catch (const std::exception& ex) {
    os << "FAIL manifest unreadable: " << ex.what() << "\n";
    if (report) *report = os.str();
    return 1;
  }
  const fs::path dir = fs::path(path).parent_path();

  std::vector<std::string> referenced;
  if (m.contains("files")) {
    for (const auto& [key, value] : m["files"].items()) {
      if (value.is_string()) {
        referenced.push_back(value.get<std::string>());
      } else if (value.is_array()) {
        for (const auto& f : value) referenced.push_back(f.get<std::string>());
      }
      (void)key;
    }
  }
  for (const std::string& f : referenced)
    note(fs::exists(dir / f), "file exists: " + f);

  if (m.contains("stage_summary") && m.contains("files") && m["files"].contains("stages")) {
    const auto& rows = m["stage_summary"];
    const auto& names = m["files"]["stages"];
    note(rows.size() == names.size(), "stage summary matches stage file count");
    for (std::size_t i = 0; i < std::min(rows.size(), names.size()); ++i) {
      const fs::path sp = dir / names[static_cast<int>(i)].get<std::string>();
      json sj;
      std::ifstream in(sp);
      if (!in.good()) {
        note(false, "stage file readable: " + sp.string());
        continue;
      }
      try {
        in >> sj;
      } catch (const std::exception&) {
        note(false, "stage file parses: " + sp.string());
        continue;
      }
      bool match = true;
      for (const char* key : kStageCheckKeys) {
        if (!rows[static_cast<int>(i)].contains(key) || !sj.contains(key) ||
            rows[static_cast<int>(i)][key].get<double>() != sj[key].get<double>()) {
          match = false;
        }
      }
      note(match, "stage scalars match: " + sp.string());
    }
  }

  if (m.contains("diagnostics_summary") && m.contains("files") &&
      m["files"].contains("diagnostics")) {
    const fs::path dp = dir / m["files"]["diagnostics"].get<std::string>();
    json dj;
    std::ifstream in(dp);
    bool ok = in.good();
    if (ok) {
      try {
        in >> dj;
      } catch (const std::exception&) {
        ok = false;
      }
    }
    if (ok) {
      const auto& s = m["diagnostics_summary"];
      ok = s["duality_min_gap"].get<double>() == dj["duality"]["min_gap"].get<double>() &&
           s["duality_equality_deficit"].get<double>() ==
               dj["duality"]["equality_deficit"].get<double>() &&
           s["theta_worst_ratio"].get<double>() == dj["theta"]["worst_ratio"].get<double>() &&
           s["decay_max_ratio"].get<double>() == dj["decay"]["max_ratio"].get<double>() &&
           s["pohozaev"].get<double>() == dj["pohozaev"].get<double>() &&
           s["geodesic"].get<double>() == dj["geodesic"].get<double>();
    }
    note(ok, "diagnostics summary matches diagnostics.json");
  }

  bool all_pass = true;
  if (m.contains("assertions")) {
    for (const auto& row : m["assertions"]) {
      const std::string name = row["name"].get<std::string>();
      const double value = row["value"].get<double>();
      const double bound = row["bound"].get<double>();
      const bool stored = row["pass"].get<bool>();
      const bool holds = value <= bound;
      note(holds && stored == holds, "assertion " + name);
      all_pass = all_pass && holds;
    }
  }
  const bool stored_pass = m.value("pass", false);
  const bool has_error = m.contains("error");
  note(!has_error, "run completed without error");
  note(stored_pass == (all_pass && !has_error), "pass flag consistent");
  note(stored_pass, "manifest passes");

  if (report) *report = os.str();
  return fails == 0 ? 0 : 1;
}

}  // namespace limcur
