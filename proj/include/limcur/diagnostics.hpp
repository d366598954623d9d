// Quantitative checks on computed states: stationarity residuals, density
// monotonicity, support extraction, pointwise gradient envelopes, duality
// gaps, boundary decay, rigidity probes, and local mass comparisons.
#pragma once

#include <cstdint>
#include <vector>

#include "limcur/bank.hpp"
#include "limcur/boundary.hpp"
#include "limcur/current.hpp"
#include "limcur/fields.hpp"
#include "limcur/mesh.hpp"
#include "limcur/solver.hpp"

namespace limcur {

// Inner-variation residual: max over bank bumps and coordinate directions of
// the exactly integrated stationarity defect, normalised by e^2 and the
// field's gradient scale. Zero to roundoff when both the gradient magnitude
// and the measure are uniform.
double pohozaev_residual(const TriMesh& mesh, const MeasureFunctionPair& pair,
                         const TestFieldBank& bank);

// First-variation-of-length residual of the current against compactly
// supported vector fields, normalised by joint mass and gradient scale.
double geodesic_residual(const TriMesh& mesh, const CurrentTuple& T, const TestFieldBank& bank);

struct ThetaSample {
  Vec2 x0;
  std::vector<double> theta;             // ||T||(B_r)/r per radius
  double violation_ratio = 0.0;          // max over consecutive s < r of (theta_s - theta_r) * s / h
  double worst_identity_mismatch = 0.0;  // |(theta_r - theta_s) - shell integral|
  bool skipped = false;                  // largest radius reached the boundary
};

struct ThetaReport {
  std::vector<double> radii;
  std::vector<ThetaSample> samples;
  double worst_ratio = 0.0;
  int n_skipped = 0;
};

// Density ratios theta_r over a radius grid at each sample point, with the
// monotonicity-violation statistic and the shell-integral identity mismatch.
ThetaReport theta_monotonicity(const TriMesh& mesh, const CurrentTuple& T,
                               const std::vector<Vec2>& points, const std::vector<double>& radii);

// Gauss-panel polar quadrature of the misalignment shell integral for a
// uniform density with constant direction; closed form density*pi*(r - s).
double theta_shell_oracle(double density, double s, double r);

// max |Du| over cells meeting the closed ball B_r*(q), one value per query.
std::vector<double> du_star(const TriMesh& mesh, const CellMatField& Du,
                            const std::vector<Vec2>& queries, double r_star);
std::vector<double> du_star_vertices(const TriMesh& mesh, const CellMatField& Du, double r_star);

struct SupportReport {
  double threshold = 0.1;
  std::vector<std::size_t> cells;  // ascending
  double mass_fraction = 0.0;
  double area_fraction = 0.0;
  double max_density = 0.0;
  bool empty = false;  // M(T) = 0
};

// Cells whose mass density is at least threshold times the maximum density.
SupportReport extract_support(const TriMesh& mesh, const CurrentTuple& T, double threshold);

// Per-multiplier duality gaps for one competitor u with E_inf(u) <= e:
// gap(chi) = e * int chi d||T|| + sum_k int u_k (dir_k . Dchi) d||T||,
// integrated exactly cell by cell.
std::vector<double> duality_gap(const TriMesh& mesh, const CurrentTuple& T, const NodalField& u,
                                double e, const TestFieldBank& bank);

struct DecayReport {
  std::vector<double> radii;
  std::vector<double> ratios;  // ||T||(strip r/2) / ||T||(strip r)
  double max_ratio = 0.0;
};

// Boundary-strip mass ratios at each radius (strips by barycentre distance).
DecayReport boundary_decay(const TriMesh& mesh, const CurrentTuple& T,
                           const std::vector<double>& radii);

struct RigidityEntry {
  std::size_t bump = 0;
  int comp = 0;
  double mass_fraction = 0.0;  // of M(T), over cells the bump support touches
  double min_dE = 0.0, max_dE = 0.0;
};

struct RigidityReport {
  std::vector<RigidityEntry> entries;
  bool support_positive = true;  // every entry with mass_fraction >= 0.1 has min_dE > 0
  int n_slack = 0;               // entries with min_dE <= 0 (flat directions)
};

// Exact sup-norm energy change E_inf(u + t * bump * e_comp) - E_inf(u) over a
// t grid, for every bank bump and component.
RigidityReport rigidity_probe(const TriMesh& mesh, const NodalField& u, const CurrentTuple& T,
                              const TestFieldBank& bank, const std::vector<double>& t_grid);

// T plus the rotated gradient of a nodal stream function (one per component);
// preserves every boundary charge exactly, so the result is an admissible
// competitor wherever the stream is compactly supported.
CurrentTuple competitor_from_stream(const TriMesh& mesh, const CurrentTuple& T,
                                    const NodalField& psi);

struct MassComparison {
  double mass_T = 0.0, mass_S = 0.0;  // over the comparison cells
  bool holds = false;                 // mass_T <= mass_S + tol scale
  double worst_form_defect = 0.0;     // boundary-form agreement residual
};

// Compares ||T||(K) with ||S||(K) for a competitor agreeing with T outside K
// (in_K flags per cell). Throws std::invalid_argument naming the worst test
// form if S violates the agreement precondition.
MassComparison local_mass_comparison(const TriMesh& mesh, const CurrentTuple& T,
                                     const std::vector<char>& in_K, const CurrentTuple& S,
                                     const TestFieldBank& forms, double tol);

struct DiagnosticsConfig {
  int bank_per_axis = 5;
  double bank_margin_cells = 2.0;
  int theta_points = 10;
  std::vector<double> theta_radii_cells{4.0, 8.0, 16.0, 32.0};
  double theta_C = 4.0;
  double du_star_radius_cells = 2.0;
  double support_threshold = 0.1;
  int duality_draws = 100;
  std::vector<double> decay_radii{0.2, 0.1, 0.05};
  double decay_beta = 0.95;
  bool assert_decay = false;  // scenario sets this when the trace gap is open
  std::vector<double> rigidity_t{-0.05, -0.02, -0.01, 0.01, 0.02, 0.05};
  int mass_competitors = 20;
  std::vector<double> mollifier_radii_cells{8.0, 4.0, 2.0};
  std::uint64_t seed = 20260816;
};

struct DiagnosticsReport {
  double p = 0.0, e = 0.0;
  double pohozaev = 0.0;
  double geodesic = 0.0;
  ThetaReport theta;
  SupportReport support;
  double support_mean_du_star = 0.0;
  std::vector<double> du_star_field;  // per vertex
  double du_star_min = 0.0, du_star_max = 0.0;
  std::size_t du_star_argmax = 0;
  Vec2 du_star_argmax_pos;
  double duality_min_gap = 0.0;        // over draws and multipliers
  double duality_equality_deficit = 0.0;  // max |gap| for the converged state
  int duality_draws_run = 0;
  DecayReport decay;
  double e_inf_prime = 0.0;
  bool decay_asserted = false;
  RigidityReport rigidity;
  MassComparison mass_comparison;
  double mass_margin_min = 0.0;  // min of mass_S - mass_T over competitors
  int mass_competitors_run = 0;
  std::vector<double> mollify_radii;
  std::vector<double> mollify_trace;
  bool mollify_under_resolved = false;
  double mollifier_commutator_norm = 0.0;
  double boundary_action_data = 0.0;  // boundary pairing with the data interpolant
};

// Full per-scenario diagnostic sweep on the final stage.
DiagnosticsReport run_diagnostics(const TriMesh& mesh, const DomainSpec& domain,
                                  const NodalField& u, const MeasureFunctionPair& pair,
                                  const CurrentTuple& T, const TangentialTrace& trace,
                                  const DirichletData& bc, const DiagnosticsConfig& config);

}  // namespace limcur
