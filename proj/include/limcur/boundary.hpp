// Tangential analysis of boundary data (sub-chord difference quotients) and
// the discrete flux pair of a converged state: an exact per-boundary-vertex
// charge realisation plus derived per-edge density/flux data for export.
#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "limcur/fields.hpp"
#include "limcur/mesh.hpp"

namespace limcur {

// Evaluates the boundary data: fills out[0..n_comp) at point x.
using BoundaryFn = std::function<void(const Vec2& x, double* out)>;

struct TangentialTrace {
  int n_comp = 1;
  int subdivisions = 8;
  std::vector<double> edge_slope;    // per boundary edge: max sub-chord quotient
  std::vector<double> vertex_alpha;  // per mesh.boundary_vertices entry
  double e_inf_prime = 0.0;
  std::size_t critical_edge = 0;     // argmax edge index (lowest on ties)
  bool degenerate = false;           // e_inf_prime == 0
};

// Max difference quotients of u0 over `subdiv` equal sub-chords of every
// boundary edge; quotients take the Euclidean norm across components.
TangentialTrace trace_tangential(const TriMesh& mesh, int n_comp, const BoundaryFn& u0,
                                 int subdiv = 8);

// Boundary vertex (mesh vertex id) whose adjacent edges carry the largest
// tangential slope; lowest id on ties.
std::size_t locate_critical(const TriMesh& mesh, const TangentialTrace& trace);

class NotConvergedError : public std::runtime_error {
 public:
  NotConvergedError(const std::string& msg, double residual_norm)
      : std::runtime_error(msg), residual(residual_norm) {}
  double residual;
};

struct BoundaryMFPair {
  double p = 2.0;
  double e = 0.0;
  int n_comp = 1;
  // Exact realisation: charge q(k, v) at boundary vertex v is the
  // mu_p-weighted residual functional applied to the hat of v. Indexed by
  // position in mesh.boundary_vertices.
  std::vector<std::vector<double>> vertex_charge;  // [component][boundary vertex]
  // Derived per-edge view: nonnegative density m and flux f per component,
  // with the half-edge charges g that reproduce the vertex charges.
  std::vector<double> m;                            // per boundary edge
  std::vector<std::vector<double>> f;               // [component][edge]
  std::vector<std::vector<double>> half_charge;     // [component][2 * edge]; [2e] touches a, [2e+1] touches b
  double representation_defect = 0.0;               // max vertex-equation residual of the half-edge solve
};

// Builds the flux pair of a converged state. `residual_norm` is the caller's
// converged eps-free residual and `residual_bound` its acceptance threshold;
// residual_norm > residual_bound raises NotConvergedError carrying the norm.
BoundaryMFPair discrete_flux_pair(const TriMesh& mesh, const NodalField& u, double p, double e,
                                  double residual_norm, double residual_bound);

// Pairing of the flux pair with a nodal test field through the exact vertex
// charges: sum_k sum_v q(k, v) phi_k(v).
double flux_pairing(const TriMesh& mesh, const BoundaryMFPair& pair, const NodalField& phi);

// Same pairing through the derived half-edge charges (P1-exact averages).
double flux_pairing_edges(const TriMesh& mesh, const BoundaryMFPair& pair, const NodalField& phi);

// CSV export: edge id, midpoint, tangential slope of the data, m, f components.
void export_boundary_csv(const TriMesh& mesh, const TangentialTrace& trace,
                         const BoundaryMFPair* pair, const std::string& path);

}  // namespace limcur
