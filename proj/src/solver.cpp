#include "limcur/solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include "limcur/reduce.hpp"

namespace limcur {

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  return det_sum(a.size(), [&](std::size_t i) { return a[i] * b[i]; });
}

void axpy(double alpha, const std::vector<double>& x, std::vector<double>& y) {
  parallel_for(y.size(), [&](std::size_t i) { y[i] += alpha * x[i]; });
}

// Preconditioned CG for H d = -g on the free subspace. Returns iterations.
int solve_newton_step(const HessOp& H, const NodalField& g, double rel_tol, int max_iter,
                      NodalField& d) {
  std::size_t n = g.v.size();
  const std::vector<double> diag = H.diagonal();
  d = NodalField(g.n_comp, g.n_vertices);
  NodalField Ap(g.n_comp, g.n_vertices);
  std::vector<double> r(n), z(n), p(n);
  parallel_for(n, [&](std::size_t i) { r[i] = -g.v[i]; });
  // At large p most cell weights underflow; preconditioning by a denormal
  // diagonal would flood the step with junk along directions the residual
  // cannot see. Restrict the solve to nodes with meaningful curvature.
  double diag_max = 0.0;
  for (double v : diag) diag_max = std::max(diag_max, v);
  const double diag_cut = diag_max * 1e-30;
  auto precondition = [&](const std::vector<double>& rr, std::vector<double>& zz) {
    parallel_for(n, [&](std::size_t i) { zz[i] = diag[i] > diag_cut ? rr[i] / diag[i] : 0.0; });
  };
  precondition(r, z);
  p = z;
  double rz = dot(r, z);
  double r0 = std::sqrt(dot(r, r));
  if (r0 == 0.0) return 0;
  double target = rel_tol * r0;
  int it = 0;
  NodalField pw(g.n_comp, g.n_vertices);
  for (; it < max_iter; ++it) {
    pw.v = p;
    H.apply(pw, Ap);
    double pAp = dot(p, Ap.v);
    if (!(pAp > 0.0)) break;  // numerical curvature loss; keep current d
    double alpha = rz / pAp;
    axpy(alpha, p, d.v);
    axpy(-alpha, Ap.v, r);
    if (std::sqrt(dot(r, r)) <= target) {
      ++it;
      break;
    }
    precondition(r, z);
    double rz_next = dot(r, z);
    double beta = rz_next / rz;
    rz = rz_next;
    parallel_for(n, [&](std::size_t i) { p[i] = z[i] + beta * p[i]; });
  }
  return it;
}

// Direct solve of H d = -g through a sparse LDLT factorisation. The cell
// weights span the full double range at large p, so the assembled system is
// equilibrated by its diagonal first; dofs whose diagonal sits below a
// relative floor (all incident weights underflowed) are floored so the dead
// block solves to a zero step instead of junk. Returns false when the
// factorisation or the solution is unusable.
bool solve_newton_direct(const HessOp& H, const NodalField& g, NodalField& d) {
  const std::size_t n = g.v.size();
  auto entries = H.lower_triangle();
  std::vector<double> diag(n, 0.0);
  for (const auto& e : entries)
    if (e.row == e.col) diag[e.row] += e.value;
  double diag_max = 0.0;
  for (double v : diag) diag_max = std::max(diag_max, v);
  if (!(diag_max > 0.0) || !std::isfinite(diag_max)) return false;
  const double floor = diag_max * 1e-30;
  std::vector<double> scale(n);
  for (std::size_t i = 0; i < n; ++i) scale[i] = 1.0 / std::sqrt(std::max(diag[i], floor));
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(entries.size() + n);
  for (const auto& e : entries)
    trips.emplace_back(e.row, e.col, e.value * scale[e.row] * scale[e.col]);
  for (std::size_t i = 0; i < n; ++i)
    if (diag[i] < floor)
      trips.emplace_back(static_cast<int>(i), static_cast<int>(i),
                         floor * scale[i] * scale[i]);
  Eigen::SparseMatrix<double> A(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  A.setFromTriplets(trips.begin(), trips.end());
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>, Eigen::Lower> ldlt(A);
  if (ldlt.info() != Eigen::Success) return false;
  Eigen::VectorXd rhs(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) rhs[static_cast<Eigen::Index>(i)] = -g.v[i] * scale[i];
  Eigen::VectorXd y = ldlt.solve(rhs);
  if (ldlt.info() != Eigen::Success) return false;
  d = NodalField(g.n_comp, g.n_vertices);
  for (std::size_t i = 0; i < n; ++i) {
    double di = y[static_cast<Eigen::Index>(i)] * scale[i];
    if (!std::isfinite(di)) return false;
    d.v[i] = di;
  }
  return true;
}

std::vector<double> eps_ladder(double e_guess, double p, const PSchedule& opts) {
  std::vector<double> ladder;
  // The p = 2 objective is quadratic and eps only shifts it by a constant.
  double eps0 = p > 2.0 ? e_guess / p : opts.eps_floor;
  if (eps0 > opts.eps_floor) {
    for (double e = eps0; e > opts.eps_floor; e *= opts.eps_factor) ladder.push_back(e);
  }
  ladder.push_back(opts.eps_floor);
  return ladder;
}

}  // namespace

FixedPResult solve_fixed_p(const TriMesh& mesh, const DirichletData& bc, NodalField u_init,
                           const EnergyParams& params, const PSchedule& opts, double tol,
                           const std::function<bool(const NodalField&)>& extra_stop) {
  FixedPResult res;
  res.u = std::move(u_init);
  res.u.check_shape(res.u.n_comp, mesh.n_vertices(), "solve_fixed_p");
  double F = eval_F_p(mesh, res.u, params);
  NodalField trial(res.u.n_comp, res.u.n_vertices);
  int flat_steps = 0;
  for (int newton = 0; newton < opts.newton_max; ++newton) {
    NodalField g = grad_F_p(mesh, res.u, params, bc.fixed);
    double gnorm = field_norm(g);
    double rhs = tol * (1.0 + std::abs(F));
    res.grad_norm = gnorm;
    res.grad_rhs = rhs;
    res.F = F;
    res.newton_iters = newton;
    if (gnorm <= rhs && (!extra_stop || extra_stop(res.u))) {
      res.converged = true;
      return res;
    }
    HessOp H(mesh, res.u, params, bc.fixed);
    NodalField d;
    if (!solve_newton_direct(H, g, d)) {
      double forcing = std::clamp(std::sqrt(gnorm / (1.0 + std::abs(F))), opts.cg_forcing_min,
                                  opts.cg_forcing_max);
      res.cg_iters += solve_newton_step(H, g, forcing, opts.cg_max_iter, d);
    }
    double gd = dot(g.v, d.v);
    if (!(gd < 0.0)) {
      // Fall back to preconditioned steepest descent if CG returned garbage.
      auto diag = H.diagonal();
      parallel_for(d.v.size(), [&](std::size_t i) {
        d.v[i] = diag[i] > 0.0 ? -g.v[i] / diag[i] : 0.0;
      });
      gd = dot(g.v, d.v);
      if (!(gd < 0.0)) {
        throw IterationCapError("solve_fixed_p: no descent direction at p=" +
                                    std::to_string(params.p) + ", eps=" + std::to_string(params.eps),
                                std::move(res.u), gnorm, params.p, params.eps);
      }
    }
    double t = 1.0;
    bool accepted = false;
    const double F_before = F;
    for (int bt = 0; bt < opts.backtrack_max; ++bt) {
      parallel_for(trial.v.size(),
                   [&](std::size_t i) { trial.v[i] = res.u.v[i] + t * d.v[i]; });
      double Ft = eval_F_p(mesh, trial, params);
      if (std::isfinite(Ft) && Ft <= F + opts.armijo_c * t * gd) {
        res.u.v.swap(trial.v);
        F = Ft;
        accepted = true;
        break;
      }
      t *= opts.backtrack_factor;
    }
    // The objective is convex, so a run of iterations with no representable
    // decrease means the iterate already minimises F in double precision.
    // Return it; the stage-level residual criterion judges acceptability.
    double floor_df = 8.0 * std::numeric_limits<double>::epsilon() * std::abs(F_before);
    flat_steps = (!accepted || F_before - F <= floor_df) ? flat_steps + 1 : 0;
    if (flat_steps >= 3) {
      res.stalled = true;
      res.converged = gnorm <= rhs;
      return res;
    }
  }
  NodalField g = grad_F_p(mesh, res.u, params, bc.fixed);
  throw IterationCapError("solve_fixed_p: Newton cap (" + std::to_string(opts.newton_max) +
                              ") at p=" + std::to_string(params.p) +
                              ", eps=" + std::to_string(params.eps),
                          std::move(res.u), field_norm(g), params.p, params.eps);
}

ContinuationReport continue_in_p(const TriMesh& mesh, const DirichletData& bc,
                                 const PSchedule& opts, const StageCallback& on_stage,
                                 NodalField* final_state) {
  if (bc.fixed.size() != mesh.n_vertices())
    throw std::invalid_argument("continue_in_p: Dirichlet mask size mismatch");
  const int n_comp = bc.values.n_comp;
  ContinuationReport report;

  // Initial iterate: boundary data on constrained vertices, area-weighted
  // boundary mean elsewhere; the p = 2 stage turns this into the discrete
  // harmonic extension.
  NodalField u(n_comp, mesh.n_vertices());
  for (int k = 0; k < n_comp; ++k) {
    double wsum = 0.0, vsum = 0.0;
    for (const auto& be : mesh.boundary_edges) {
      vsum += 0.5 * be.len * (bc.values.at(k, be.a) + bc.values.at(k, be.b));
      wsum += be.len;
    }
    double mean = wsum > 0.0 ? vsum / wsum : 0.0;
    for (std::size_t v = 0; v < mesh.n_vertices(); ++v)
      u.at(k, v) = bc.fixed[v] ? bc.values.at(k, v) : mean;
  }
  report.e_inf_of_data_interpolant = [&] {
    NodalField interp = bc.values;
    return eval_E_inf(mesh, interp);
  }();

  // Constant data per component: the interpolant itself is optimal with zero
  // energy at every p. The mean fill above can sit a few ulps off the
  // constant, so start from the interpolant to keep the gradient exactly zero.
  const bool degenerate_data = !(report.e_inf_of_data_interpolant > 1e-300);
  if (degenerate_data) u = bc.values;

  double e_guess = report.e_inf_of_data_interpolant;
  double prev_e = 0.0;
  double sub_ratio = 2.0;  // exponent step between internal warm-start solves
  for (double p : opts.p_list) {
    auto t0 = std::chrono::steady_clock::now();
    StageReport stage;
    stage.p = p;
    stage.e_guess = e_guess;
    stage.chain_prev_e = prev_e;

    if (degenerate_data) {
      stage.degenerate = true;
      stage.M = 1.0;
      stage.e_p = 0.0;
      stage.E_inf = eval_E_inf(mesh, u);
      stage.eps_final = 0.0;
      stage.chain_Eq_at_up = 0.0;
      stage.wall_ms = 0.0;
      report.stages.push_back(stage);
      if (on_stage) on_stage(stage, u);
      prev_e = 0.0;
      continue;
    }
    FixedPResult last;
    int newton_total = 0, cg_total = 0;

    // Runs the epsilon ladder at one exponent from the current iterate.
    auto run_ladder = [&](double p_run) {
      double scale = eval_E_inf(mesh, u);
      double e_ref = scale > 0.0 ? scale : e_guess;
      double M_run = std::max({scale, e_ref / p_run, 1e-300});
      for (double eps : eps_ladder(e_ref, p_run, opts)) {
        EnergyParams params{p_run, eps, M_run};
        last = solve_fixed_p(mesh, bc, std::move(u), params, opts, opts.tol);
        u = std::move(last.u);
        newton_total += last.newton_iters;
        cg_total += last.cg_iters;
        if (p_run == p) {
          stage.eps_final = eps;
          stage.M = M_run;
        }
      }
    };

    // A doubled exponent can put the warm start outside the Newton basin.
    // Approach the target through geometric sub-steps with an adaptive ratio:
    // shrink it when the budget runs out mid-jump (keeping the best iterate),
    // widen it again when sub-steps come cheap. Only the target is reported.
    double p_cur = report.stages.empty() ? p : report.stages.back().p;
    if (!(p_cur < p)) {
      run_ladder(p);
    } else {
      int fails = 0;
      while (p_cur < p) {
        double p_next = std::min(p, p_cur * sub_ratio);
        if (p_next >= p * (1.0 - 1e-9)) p_next = p;
        int newton_before = newton_total;
        try {
          run_ladder(p_next);
          p_cur = p_next;
          int used = newton_total - newton_before;
          if (3 * used <= opts.newton_max)
            sub_ratio = std::min(2.0, sub_ratio * sub_ratio);
          else if (2 * used >= opts.newton_max)
            sub_ratio = std::max(1.02, std::sqrt(sub_ratio));
        } catch (IterationCapError& err) {
          u = std::move(err.best);
          sub_ratio = std::sqrt(sub_ratio);
          if (++fails > 12 || sub_ratio < 1.01) throw;
        }
      }
    }

    // Polish at the eps floor until the eps-free mu-normalised residual of
    // the stage is below tol * (1 + e_p^2). The safeguarded solver with a
    // tightening gradient target does the bulk of the work. Its objective
    // comparisons go flat at machine precision before the residual target at
    // large p, so once it stops paying, switch to damped Newton judged by the
    // residual itself; a round no step length can improve reports the stage's
    // residual floor honestly.
    double working_tol = opts.tol;
    bool endgame = false;
    NodalField trial(u.n_comp, u.n_vertices);
    for (int round = 0; round <= opts.polish_max_rounds; ++round) {
      double e_p = eval_E_p(mesh, u, EnergyParams{p, 0.0, stage.M});
      NodalField r = mu_weighted_residual(mesh, u, p, e_p, bc.fixed);
      double rn = field_norm(r);
      stage.e_p = e_p;
      stage.mu_residual = rn;
      stage.mu_rhs = opts.tol * (1.0 + e_p * e_p);
      if (rn <= stage.mu_rhs) break;
      if (round == opts.polish_max_rounds)
        throw IterationCapError("continue_in_p: residual polish cap at p=" + std::to_string(p),
                                std::move(u), rn, p, opts.eps_floor);
      EnergyParams params{p, opts.eps_floor, stage.M};
      if (!endgame) {
        working_tol *= 0.25;
        try {
          last = solve_fixed_p(mesh, bc, std::move(u), params, opts, working_tol);
          u = std::move(last.u);
          newton_total += last.newton_iters;
          cg_total += last.cg_iters;
          if (last.stalled) endgame = true;
        } catch (IterationCapError& err) {
          u = std::move(err.best);
          endgame = true;
        }
        continue;
      }
      NodalField g = grad_F_p(mesh, u, params, bc.fixed);
      HessOp H(mesh, u, params, bc.fixed);
      NodalField d;
      if (!solve_newton_direct(H, g, d)) {
        // Direction accuracy only needs to match the contraction still wanted.
        double forcing = std::clamp(0.3 * stage.mu_rhs / rn, 1e-4, 1e-2);
        cg_total += solve_newton_step(H, g, forcing, opts.cg_max_iter, d);
      }
      newton_total += 1;
      bool improved = false;
      double t = 1.0;
      for (int bt = 0; bt < 12; ++bt) {
        parallel_for(trial.v.size(), [&](std::size_t i) { trial.v[i] = u.v[i] + t * d.v[i]; });
        double e_t = eval_E_p(mesh, trial, EnergyParams{p, 0.0, stage.M});
        NodalField r_t = mu_weighted_residual(mesh, trial, p, e_t, bc.fixed);
        double rn_t = field_norm(r_t);
        if (rn_t < rn) {
          u.v.swap(trial.v);
          improved = true;
          break;
        }
        t *= 0.5;
      }
      if (!improved)
        throw IterationCapError("continue_in_p: residual polish floor at p=" + std::to_string(p),
                                std::move(u), rn, p, opts.eps_floor);
    }

    stage.E_inf = eval_E_inf(mesh, u);
    stage.F_value = last.F;
    stage.grad_norm = last.grad_norm;
    stage.grad_rhs = last.grad_rhs;
    stage.newton_iters = newton_total;
    stage.cg_iters = cg_total;
    stage.chain_Eq_at_up =
        prev_e > 0.0 ? eval_E_p(mesh, u, EnergyParams{report.stages.back().p, 0.0, stage.M}) : 0.0;
    stage.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                        .count();
    report.stages.push_back(stage);
    if (on_stage) on_stage(stage, u);
    e_guess = stage.e_p;
    prev_e = stage.e_p;
  }
  if (final_state) *final_state = std::move(u);
  return report;
}

}  // namespace limcur
