// Normalised L^p gradient energies on P1 fields:
//   E_p(u)   = M * ( mean_c a_c * ((|Du_c|^2 + eps^2)^{1/2} / M)^p )^{1/p}
//   F_p(u)   = (M/p) * mean_c a_c * ((|Du_c|^2 + eps^2) / M^2)^{p/2}
// with a_c = area_c / area(domain). All powers run in the log domain, so
// evaluation stays finite up to p = 2^14. F_p is the solver's objective;
// its gradient and exact second variation are exposed with Dirichlet
// constraints applied as zeroed rows/columns.
#pragma once

#include <vector>

#include "limcur/fields.hpp"
#include "limcur/mesh.hpp"

namespace limcur {

struct EnergyParams {
  double p = 2.0;   // >= 2
  double eps = 0.0; // >= 0
  double M = 1.0;   // > 0, normalisation scale
};

double eval_E_p(const TriMesh& mesh, const CellMatField& Du, const EnergyParams& params);
double eval_E_p(const TriMesh& mesh, const NodalField& u, const EnergyParams& params);

double eval_F_p(const TriMesh& mesh, const CellMatField& Du, const EnergyParams& params);
double eval_F_p(const TriMesh& mesh, const NodalField& u, const EnergyParams& params);

// Max of |Du_c| over cells (the eps-free sup seminorm of the interpolant).
double eval_E_inf(const TriMesh& mesh, const CellMatField& Du);
double eval_E_inf(const TriMesh& mesh, const NodalField& u);

// The returned gradient equals exp(log_scale) times the gradient of
// (1/p) * mean_c a_c (|Du|^2+eps^2)^{p/2}; log_scale = (1-p) log M.
struct GradInfo {
  double log_scale = 0.0;
};

// Gradient of F_p. Entries at vertices with fixed_vertex[i] != 0 are zero.
// Throws std::domain_error naming p and M if any entry is non-finite.
NodalField grad_F_p(const TriMesh& mesh, const NodalField& u, const EnergyParams& params,
                    const std::vector<char>& fixed_vertex, GradInfo* info = nullptr);

// One assembled matrix entry in component-major dof order
// (dof = component * n_vertices + vertex).
struct HessEntry {
  int row = 0, col = 0;
  double value = 0.0;
};

// Exact second variation of F_p frozen at a base state. apply() treats input
// and output entries at fixed vertices as zero (constrained subspace).
class HessOp {
 public:
  HessOp(const TriMesh& mesh, const NodalField& u, const EnergyParams& params,
         const std::vector<char>& fixed_vertex);

  void apply(const NodalField& w, NodalField& out) const;
  // Diagonal of the operator per dof (component-major); 1.0 at fixed dofs.
  std::vector<double> diagonal() const;
  // Assembled lower triangle (row >= col) of the same operator, one entry per
  // cell contribution (not merged), plus unit diagonals at fixed dofs.
  std::vector<HessEntry> lower_triangle() const;

  const CellMatField& base_gradient() const { return Du_; }

 private:
  const TriMesh& mesh_;
  EnergyParams params_;
  int n_comp_;
  std::vector<char> fixed_;
  CellMatField Du_;
  std::vector<double> w_;          // a_c (s_c/M^2)^{p/2-1}
  std::vector<double> curv_;       // (p-2)/s_c, 0 where s_c = 0
  mutable std::vector<double> cell_scratch_;
};

// eps-free residual of the rescaled Euler-Lagrange equation in mu_p form:
//   r(k, v) = sum_c a_c (|Du_c|/e)^{p-2} Du_c(k,:) . grad(phi_v)|_c
// evaluated at free vertices only (zero at fixed ones). This is the interior
// boundarylessness functional of the associated current divided by e.
NodalField mu_weighted_residual(const TriMesh& mesh, const NodalField& u, double p, double e,
                                const std::vector<char>& fixed_vertex);

// l2 norm over all entries.
double field_norm(const NodalField& f);

}  // namespace limcur
