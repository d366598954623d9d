// Minimisation of the scaled p-energy F_p over P1 fields with Dirichlet data:
// damped Newton on the exact second variation (sparse direct factorisation
// with an iterative fallback, Armijo backtracking), an epsilon-continuation
// ladder per stage, and warm-started continuation across a doubling schedule
// of p values.
#pragma once

#include <functional>
#include <stdexcept>
#include <vector>

#include "limcur/energy.hpp"
#include "limcur/fields.hpp"
#include "limcur/mesh.hpp"

namespace limcur {

struct PSchedule {
  std::vector<double> p_list = {2, 4, 8, 16, 32, 64, 128, 256, 512, 1024};
  double tol = 1e-9;              // stage acceptance tolerance (relative)
  int newton_max = 60;            // Newton iterations per epsilon step
  double backtrack_factor = 0.5;  // Armijo step shrink
  double armijo_c = 1e-4;
  int backtrack_max = 60;
  double cg_forcing_min = 1e-8;   // clamp for the inexact-Newton forcing term
  double cg_forcing_max = 0.1;
  int cg_max_iter = 5000;
  double eps_floor = 1e-8;
  double eps_factor = 0.1;        // geometric epsilon ladder
  int polish_max_rounds = 12;     // eps-free residual polish at the floor
};

// Dirichlet constraint: `fixed` marks constrained vertices. `values` holds
// the data interpolated at every vertex; constrained vertices take their
// trace from it and the whole field provides the data-interpolant energy
// bound reported by the continuation.
struct DirichletData {
  std::vector<char> fixed;
  NodalField values;
};

struct FixedPResult {
  NodalField u;
  double F = 0.0;
  double grad_norm = 0.0;
  double grad_rhs = 0.0;
  int newton_iters = 0;
  int cg_iters = 0;
  bool converged = false;
  bool stalled = false;  // objective flat to machine precision before the gradient test passed
};

// Raised when an iteration cap is hit; carries the best iterate found.
class IterationCapError : public std::runtime_error {
 public:
  IterationCapError(std::string msg, NodalField best_iterate, double residual_norm, double p,
                    double eps)
      : std::runtime_error(std::move(msg)),
        best(std::move(best_iterate)),
        residual(residual_norm),
        p_value(p),
        eps_value(eps) {}
  NodalField best;
  double residual;
  double p_value;
  double eps_value;
};

// Minimises F_p at fixed (p, eps, M) from u_init (which must satisfy the
// Dirichlet data). Stops when ||grad|| <= tol * (1 + |F|) and, if given, when
// extra_stop(u) also holds. Guarantees F non-increasing across iterations and
// untouched Dirichlet entries; throws IterationCapError on a cap.
FixedPResult solve_fixed_p(const TriMesh& mesh, const DirichletData& bc, NodalField u_init,
                           const EnergyParams& params, const PSchedule& opts, double tol,
                           const std::function<bool(const NodalField&)>& extra_stop = nullptr);

struct StageReport {
  double p = 0.0;
  double eps_final = 0.0;
  double e_p = 0.0;          // E_p of the converged state, eps = 0
  double E_inf = 0.0;        // sup-seminorm of the converged state
  double F_value = 0.0;
  double grad_norm = 0.0;    // scaled-gradient test, left side
  double grad_rhs = 0.0;     // scaled-gradient test, right side
  double mu_residual = 0.0;  // eps-free mu-normalised residual, left side
  double mu_rhs = 0.0;       // and its right side tol * (1 + e_p^2)
  double M = 0.0;            // frozen normalisation scale
  double e_guess = 0.0;      // base of the epsilon ladder
  double chain_prev_e = 0.0;     // e_q of the previous stage (0 for first)
  double chain_Eq_at_up = 0.0;   // E_q evaluated at this stage's minimiser
  int newton_iters = 0;
  int cg_iters = 0;
  double wall_ms = 0.0;
  bool degenerate = false;   // constant-data branch, e_p = 0
};

struct ContinuationReport {
  std::vector<StageReport> stages;
  double e_inf_of_data_interpolant = 0.0;
};

using StageCallback = std::function<void(const StageReport&, const NodalField&)>;

// Runs the full schedule with warm starts. The initial iterate interpolates
// the Dirichlet data on the boundary and its mean in the interior; the p = 2
// stage then produces the discrete harmonic extension. on_stage (optional)
// receives each converged stage. On an iteration cap the error propagates
// after the callback has seen all completed stages.
ContinuationReport continue_in_p(const TriMesh& mesh, const DirichletData& bc,
                                 const PSchedule& opts, const StageCallback& on_stage = nullptr,
                                 NodalField* final_state = nullptr);

}  // namespace limcur
