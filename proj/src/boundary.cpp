#include "limcur/boundary.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "limcur/energy.hpp"

namespace limcur {

TangentialTrace trace_tangential(const TriMesh& mesh, int n_comp, const BoundaryFn& u0,
                                 int subdiv) {
  if (n_comp < 1) throw std::invalid_argument("trace_tangential: n_comp must be >= 1");
  if (subdiv < 1) throw std::invalid_argument("trace_tangential: subdiv must be >= 1");
  TangentialTrace trace;
  trace.n_comp = n_comp;
  trace.subdivisions = subdiv;
  trace.edge_slope.assign(mesh.boundary_edges.size(), 0.0);
  std::vector<double> va(n_comp), vb(n_comp);
  for (std::size_t e = 0; e < mesh.boundary_edges.size(); ++e) {
    const auto& be = mesh.boundary_edges[e];
    const Vec2 a = mesh.vertices[be.a];
    const Vec2 d = mesh.vertices[be.b] - a;
    double seg = be.len / subdiv;
    double worst = 0.0;
    u0(a, va.data());
    for (int s = 1; s <= subdiv; ++s) {
      Vec2 x = a + (static_cast<double>(s) / subdiv) * d;
      u0(x, vb.data());
      double diff2 = 0.0;
      for (int k = 0; k < n_comp; ++k) {
        double dv = vb[k] - va[k];
        diff2 += dv * dv;
      }
      worst = std::max(worst, std::sqrt(diff2) / seg);
      va.swap(vb);
    }
    trace.edge_slope[e] = worst;
  }
  // Per-vertex slope: max over edges touching the vertex.
  trace.vertex_alpha.assign(mesh.boundary_vertices.size(), 0.0);
  auto bv_index = [&](std::size_t v) {
    auto it = std::lower_bound(mesh.boundary_vertices.begin(), mesh.boundary_vertices.end(), v);
    return static_cast<std::size_t>(it - mesh.boundary_vertices.begin());
  };
  for (std::size_t e = 0; e < mesh.boundary_edges.size(); ++e) {
    const auto& be = mesh.boundary_edges[e];
    for (std::size_t v : {be.a, be.b}) {
      std::size_t i = bv_index(v);
      trace.vertex_alpha[i] = std::max(trace.vertex_alpha[i], trace.edge_slope[e]);
    }
  }
  trace.e_inf_prime = 0.0;
  trace.critical_edge = 0;
  for (std::size_t e = 0; e < trace.edge_slope.size(); ++e) {
    if (trace.edge_slope[e] > trace.e_inf_prime) {
      trace.e_inf_prime = trace.edge_slope[e];
      trace.critical_edge = e;
    }
  }
  trace.degenerate = trace.e_inf_prime == 0.0;
  return trace;
}

std::size_t locate_critical(const TriMesh& mesh, const TangentialTrace& trace) {
  double best = -1.0;
  std::size_t best_v = mesh.n_vertices();
  for (std::size_t i = 0; i < mesh.boundary_vertices.size(); ++i) {
    if (trace.vertex_alpha[i] > best) {
      best = trace.vertex_alpha[i];
      best_v = mesh.boundary_vertices[i];
    }
  }
  return best_v;
}

namespace {

// Solves the SPD cyclic tridiagonal system (alpha on the diagonal, beta on
// the sub/super diagonals and the two corners) via Sherman-Morrison over a
// plain Thomas solve.
void solve_cyclic_tridiag(double alpha, double beta, std::vector<double>& rhs) {
  std::size_t n = rhs.size();
  if (n == 1) {
    rhs[0] /= (alpha + 2 * beta);
    return;
  }
  if (n == 2) {
    // Both off-diagonal and corner couple the same pair: effective 2x2.
    double b = 2 * beta;
    double det = alpha * alpha - b * b;
    double r0 = rhs[0], r1 = rhs[1];
    rhs[0] = (alpha * r0 - b * r1) / det;
    rhs[1] = (alpha * r1 - b * r0) / det;
    return;
  }
  const double gamma = -alpha;
  std::vector<double> diag(n, alpha);
  diag[0] -= gamma;
  diag[n - 1] -= beta * beta / gamma;
  auto thomas = [&](std::vector<double>& x) {
    std::vector<double> c(n, 0.0);
    c[0] = beta / diag[0];
    x[0] /= diag[0];
    for (std::size_t i = 1; i < n; ++i) {
      double m = diag[i] - beta * c[i - 1];
      c[i] = beta / m;
      x[i] = (x[i] - beta * x[i - 1]) / m;
    }
    for (std::size_t i = n - 1; i-- > 0;) x[i] -= c[i] * x[i + 1];
  };
  std::vector<double> u(n, 0.0);
  u[0] = gamma;
  u[n - 1] = beta;
  thomas(rhs);
  thomas(u);
  double vy = rhs[0] + rhs[n - 1] * beta / gamma;
  double vq = u[0] + u[n - 1] * beta / gamma;
  double factor = vy / (1.0 + vq);
  for (std::size_t i = 0; i < n; ++i) rhs[i] -= factor * u[i];
}

}  // namespace

BoundaryMFPair discrete_flux_pair(const TriMesh& mesh, const NodalField& u, double p, double e,
                                  double residual_norm, double residual_bound) {
  if (residual_norm > residual_bound)
    throw NotConvergedError("discrete_flux_pair: state not converged (residual " +
                                std::to_string(residual_norm) + " > bound " +
                                std::to_string(residual_bound) + ")",
                            residual_norm);
  if (!(e > 0.0)) throw std::invalid_argument("discrete_flux_pair: e must be positive");
  BoundaryMFPair pair;
  pair.p = p;
  pair.e = e;
  pair.n_comp = u.n_comp;

  // Exact vertex charges: the mu_p-weighted residual functional on all hats.
  std::vector<char> no_mask(mesh.n_vertices(), 0);
  NodalField r = mu_weighted_residual(mesh, u, p, e, no_mask);
  pair.vertex_charge.assign(u.n_comp, std::vector<double>(mesh.boundary_vertices.size(), 0.0));
  for (int k = 0; k < u.n_comp; ++k)
    for (std::size_t i = 0; i < mesh.boundary_vertices.size(); ++i)
      pair.vertex_charge[k][i] = r.at(k, mesh.boundary_vertices[i]);

  // Edge density m from the owning cell.
  CellMatField Du = cell_gradient(mesh, u);
  pair.m.assign(mesh.boundary_edges.size(), 0.0);
  const double loge = std::log(e);
  for (std::size_t ei = 0; ei < mesh.boundary_edges.size(); ++ei) {
    double s = Du.frob2(mesh.boundary_edges[ei].cell);
    if (s <= 0.0) {
      pair.m[ei] = p == 2.0 ? 1.0 / mesh.area : 0.0;
      continue;
    }
    double lw = (p - 2.0) * (0.5 * std::log(s) - loge);
    pair.m[ei] = lw < -745.0 ? 0.0 : std::exp(lw) / mesh.area;
    if (!std::isfinite(pair.m[ei]))
      throw std::domain_error("discrete_flux_pair: non-finite edge density at p=" +
                              std::to_string(p));
  }

  // Half-edge charges per cycle and component: least-norm solution of the
  // vertex equations (3/4 near + 1/4 far per adjacent half), computed through
  // the normal equations, which are cyclic tridiagonal (20/16 diag, 6/16 off).
  pair.half_charge.assign(u.n_comp, std::vector<double>(2 * mesh.boundary_edges.size(), 0.0));
  pair.f.assign(u.n_comp, std::vector<double>(mesh.boundary_edges.size(), 0.0));
  auto bv_index = [&](std::size_t v) {
    auto it = std::lower_bound(mesh.boundary_vertices.begin(), mesh.boundary_vertices.end(), v);
    return static_cast<std::size_t>(it - mesh.boundary_vertices.begin());
  };
  pair.representation_defect = 0.0;
  for (const auto& cycle : mesh.boundary_cycles) {
    std::size_t n = cycle.size();
    for (int k = 0; k < u.n_comp; ++k) {
      // Vertex order along the cycle: vertex i is the shared endpoint
      // edge[i-1].b == edge[i].a.
      std::vector<double> q(n);
      for (std::size_t i = 0; i < n; ++i)
        q[i] = pair.vertex_charge[k][bv_index(mesh.boundary_edges[cycle[i]].a)];
      // lambda = (A A^T)^{-1} q, then g = A^T lambda.
      std::vector<double> lambda = q;
      solve_cyclic_tridiag(20.0 / 16.0, 6.0 / 16.0, lambda);
      for (std::size_t i = 0; i < n; ++i) {
        std::size_t ei = cycle[i];
        double la = lambda[i];             // vertex at edge start
        double lb = lambda[(i + 1) % n];   // vertex at edge end
        pair.half_charge[k][2 * ei] = 0.75 * la + 0.25 * lb;
        pair.half_charge[k][2 * ei + 1] = 0.25 * la + 0.75 * lb;
      }
      // Defect of the vertex equations under the derived representation.
      for (std::size_t i = 0; i < n; ++i) {
        std::size_t eprev = cycle[(i + n - 1) % n], ecur = cycle[i];
        double lhs = 0.75 * (pair.half_charge[k][2 * ecur] + pair.half_charge[k][2 * eprev + 1]) +
                     0.25 * (pair.half_charge[k][2 * ecur + 1] + pair.half_charge[k][2 * eprev]);
        pair.representation_defect = std::max(pair.representation_defect, std::abs(lhs - q[i]));
      }
    }
  }
  double max_m = 0.0;
  for (double mv : pair.m) max_m = std::max(max_m, mv);
  for (int k = 0; k < u.n_comp; ++k)
    for (std::size_t ei = 0; ei < mesh.boundary_edges.size(); ++ei) {
      double mL = pair.m[ei] * mesh.boundary_edges[ei].len;
      // Density floor: far from the current's support m underflows and the
      // flux magnitude is pure noise; report zero there.
      pair.f[k][ei] = (pair.m[ei] > 1e-14 * max_m && mL > 0.0)
                          ? (pair.half_charge[k][2 * ei] + pair.half_charge[k][2 * ei + 1]) / mL
                          : 0.0;
    }
  return pair;
}

double flux_pairing(const TriMesh& mesh, const BoundaryMFPair& pair, const NodalField& phi) {
  phi.check_shape(pair.n_comp, mesh.n_vertices(), "flux_pairing");
  double s = 0.0;
  for (int k = 0; k < pair.n_comp; ++k)
    for (std::size_t i = 0; i < mesh.boundary_vertices.size(); ++i)
      s += pair.vertex_charge[k][i] * phi.at(k, mesh.boundary_vertices[i]);
  return s;
}

double flux_pairing_edges(const TriMesh& mesh, const BoundaryMFPair& pair, const NodalField& phi) {
  phi.check_shape(pair.n_comp, mesh.n_vertices(), "flux_pairing_edges");
  double s = 0.0;
  for (int k = 0; k < pair.n_comp; ++k)
    for (std::size_t ei = 0; ei < mesh.boundary_edges.size(); ++ei) {
      const auto& be = mesh.boundary_edges[ei];
      double fa = phi.at(k, be.a), fb = phi.at(k, be.b);
      s += pair.half_charge[k][2 * ei] * (0.75 * fa + 0.25 * fb) +
           pair.half_charge[k][2 * ei + 1] * (0.25 * fa + 0.75 * fb);
    }
  return s;
}

void export_boundary_csv(const TriMesh& mesh, const TangentialTrace& trace,
                         const BoundaryMFPair* pair, const std::string& path) {
  std::FILE* fp = std::fopen(path.c_str(), "w");
  if (!fp) throw std::runtime_error("export_boundary_csv: cannot open " + path);
  std::fprintf(fp, "edge,mid_x,mid_y,tangential_slope,m");
  int n_comp = pair ? pair->n_comp : trace.n_comp;
  for (int k = 0; k < n_comp; ++k) std::fprintf(fp, ",f%d", k + 1);
  std::fprintf(fp, "\n");
  for (std::size_t e = 0; e < mesh.boundary_edges.size(); ++e) {
    const auto& be = mesh.boundary_edges[e];
    Vec2 mid = (mesh.vertices[be.a] + mesh.vertices[be.b]) * 0.5;
    std::fprintf(fp, "%zu,%.17g,%.17g,%.17g,%.17g", e, mid.x, mid.y, trace.edge_slope[e],
                 pair ? pair->m[e] : 0.0);
    for (int k = 0; k < n_comp; ++k)
      std::fprintf(fp, ",%.17g", pair ? pair->f[k][e] : 0.0);
    std::fprintf(fp, "\n");
  }
  std::fclose(fp);
}

}  // namespace limcur
