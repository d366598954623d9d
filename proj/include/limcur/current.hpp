// Measure-function pairs and the associated tuple of 1-currents built from a
// converged state: cell masses and unit directions, boundary charges, form
// pairings, mollified representatives and weak-convergence comparisons.
#pragma once

#include <functional>
#include <vector>

#include "limcur/fields.hpp"
#include "limcur/mesh.hpp"

namespace limcur {

struct MeasureFunctionPair {
  double p = 2.0;
  double e = 0.0;
  int n_comp = 1;
  bool degenerate = false;        // e = 0 path: mu = normalised Lebesgue, F = 0
  std::vector<double> mu;         // per-cell weight, sum <= 1 + 1e-12
  CellMatField F;                 // per-cell matrix (the gradient at stage p)
  double mass = 0.0;              // sum of mu
  double second_moment = 0.0;     // sum mu_c |F_c|^2, equals e^2 at convergence
};

// mu_c = (area_c/area) * (|Du_c|/e)^(p-2) in the log domain; F = Du. With
// e = 0 returns the degenerate convention and sets the flag.
MeasureFunctionPair make_pair(const TriMesh& mesh, const NodalField& u, double p, double e);

struct CurrentTuple {
  int n_comp = 1;
  double e = 0.0;
  std::vector<double> mass;        // per-cell ||T|| weight (0 where F = 0)
  CellMatField dir;                // unit N x 2 direction where mass > 0, else 0
  double joint_mass = 0.0;         // sum of mass
  // Charge of the boundary operator against every nodal hat; interior
  // entries are the (small) interior residual of the converged state.
  NodalField charge;
  double interior_charge_norm = 0.0;  // l2 over interior vertices
  double total_charge_max = 0.0;      // max_k |sum_v charge(k, v)|
  bool degenerate = false;
};

// ||T|| = e * mu on cells with |F| > 0, direction F/|F| (Frobenius). For the
// degenerate pair: mass = mu (conventional unit scale), direction the first
// coordinate direction in the first component.
CurrentTuple make_current(const TriMesh& mesh, const MeasureFunctionPair& pair, double e);

// T(omega) = sum_c mass_c sum_k omega(c, k, :) . dir(c, k, :), with omega
// sampled per cell (one covector per component).
double pair_with_form(const TriMesh& mesh, const CurrentTuple& T, const CellMatField& omega);

// Boundary action on a nodal field through the exact vertex charges
// restricted to boundary vertices.
double boundary_pairing(const TriMesh& mesh, const CurrentTuple& T, const NodalField& v);

// Interior boundarylessness functional: sum over interior vertices of
// charge . sigma for a nodal test field sigma (zero on the boundary).
double interior_boundary_residual(const TriMesh& mesh, const CurrentTuple& T,
                                  const NodalField& sigma);

struct MollifierSpec {
  double radius = 0.0;
  enum class Mode { InteriorOnly, BoundaryAdapted } mode = Mode::BoundaryAdapted;
};

struct MollifiedField {
  CellMatField field;
  std::vector<char> excluded;  // cells skipped in interior-only mode
  bool under_resolved = false; // radius < 2h
};

// Kernel average of a cell field over B_radius(barycentre) with the radial
// quartic bump (1 - (d/r)^2)^2, renormalised over the cells present
// (boundary-adapted) or restricted to cells farther than radius from the
// boundary (interior-only).
MollifiedField mollify(const TriMesh& mesh, const CellMatField& f, const MollifierSpec& spec);

// L^2(mu) distances between f and its mollification for each radius in
// `radii` (typically decreasing): sum_c mu_c |f_eps(c) - f(c)|_F^2.
std::vector<double> mollified_distance_trace(const TriMesh& mesh, const CellMatField& f,
                                             const std::vector<double>& mu,
                                             const std::vector<double>& radii,
                                             MollifierSpec::Mode mode);

// Max Frobenius mismatch between mollify(d/dx_j f) and d/dx_j mollify(f) on
// cells far enough from the boundary; reported, never asserted.
double mollifier_commutator(const TriMesh& mesh, const NodalField& v, double radius);

struct WeakCompareReport {
  std::vector<double> entries;     // |(eta + F:phi) dmu_A - same dmu_B| per bank entry
  double strong_surrogate = 0.0;   // |sum mu_A |F_A|^2 - sum mu_B |F_B|^2|
};

// Fixed internal bank: eta in {1, x, y, x^2, xy, y^2}; phi = q(x) E_kj for
// q in {1, x, y} and each matrix direction. Barycentre sampling.
WeakCompareReport compare_pairs(const TriMesh& mesh, const MeasureFunctionPair& A,
                                const MeasureFunctionPair& B);

struct MassEstimateCheck {
  double lhs = 0.0;    // alpha^2 e^2 int xi dmu
  double rhs = 0.0;    // int xi |F|^2 dmu + alpha^p e^2 max xi
  double slack = 0.0;  // rhs - lhs
};

// xi_values holds one value in [0, xi_max] per cell (e.g. exact cell means
// of a nonnegative bump).
MassEstimateCheck mass_estimate_check(const MeasureFunctionPair& pair,
                                      const std::vector<double>& xi_values, double xi_max,
                                      double alpha);

// CSV export: cell id, barycentre, mass density, direction components.
void export_current_csv(const TriMesh& mesh, const CurrentTuple& T, const std::string& path);

}  // namespace limcur
