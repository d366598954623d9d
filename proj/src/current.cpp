#include "limcur/current.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

#include "limcur/reduce.hpp"

namespace limcur {

namespace {

// Same fixed-order incidence gather as the energy assembly, without a fixed
// mask: every vertex, boundary included, receives its full charge.
NodalField gather_all(const TriMesh& mesh, int n_comp, const std::vector<double>& cell_contrib) {
  NodalField out(n_comp, mesh.n_vertices());
  parallel_for(mesh.n_vertices(), [&](std::size_t v) {
    for (int k = 0; k < n_comp; ++k) {
      double s = 0.0;
      for (std::uint32_t it = mesh.vc_offset[v]; it < mesh.vc_offset[v + 1]; ++it) {
        auto [c, loc] = mesh.vc_items[it];
        s += cell_contrib[(static_cast<std::size_t>(c) * 3 + loc) * n_comp + k];
      }
      out.at(k, v) = s;
    }
  });
  return out;
}

}  // namespace

MeasureFunctionPair make_pair(const TriMesh& mesh, const NodalField& u, double p, double e) {
  u.check_shape(u.n_comp, mesh.n_vertices(), "make_pair");
  if (!(p >= 2.0)) throw std::invalid_argument("make_pair: p must be >= 2");
  if (!(e >= 0.0)) throw std::invalid_argument("make_pair: e must be >= 0");
  MeasureFunctionPair pair;
  pair.p = p;
  pair.e = e;
  pair.n_comp = u.n_comp;
  std::size_t nc = mesh.n_cells();
  const double inv_area = 1.0 / mesh.area;
  if (e == 0.0) {
    pair.degenerate = true;
    pair.mu.resize(nc);
    for (std::size_t c = 0; c < nc; ++c) pair.mu[c] = mesh.cell_areas[c] * inv_area;
    pair.F = CellMatField(u.n_comp, nc);
    pair.mass = det_sum(pair.mu);
    pair.second_moment = 0.0;
    return pair;
  }
  pair.F = cell_gradient(mesh, u);
  pair.mu.resize(nc);
  const double loge = std::log(e);
  parallel_for(nc, [&](std::size_t c) {
    double s = pair.F.frob2(c);
    if (s <= 0.0) {
      pair.mu[c] = p == 2.0 ? mesh.cell_areas[c] * inv_area : 0.0;
      return;
    }
    double lw = (p - 2.0) * (0.5 * std::log(s) - loge);
    pair.mu[c] = lw < -745.0 ? 0.0 : mesh.cell_areas[c] * inv_area * std::exp(lw);
  });
  pair.mass = det_sum(pair.mu);
  pair.second_moment = det_sum(nc, [&](std::size_t c) { return pair.mu[c] * pair.F.frob2(c); });
  if (!std::isfinite(pair.mass) || !std::isfinite(pair.second_moment))
    throw std::domain_error("make_pair: non-finite measure at p=" + std::to_string(p) +
                            ", e=" + std::to_string(e));
  return pair;
}

CurrentTuple make_current(const TriMesh& mesh, const MeasureFunctionPair& pair, double e) {
  std::size_t nc = mesh.n_cells();
  if (pair.mu.size() != nc || pair.F.n_cells != nc)
    throw std::invalid_argument("make_current: pair does not match mesh");
  CurrentTuple T;
  T.n_comp = pair.n_comp;
  T.e = e;
  T.degenerate = pair.degenerate;
  T.mass.assign(nc, 0.0);
  T.dir = CellMatField(pair.n_comp, nc);
  T.charge = NodalField(pair.n_comp, mesh.n_vertices());
  if (pair.degenerate) {
    // Unit mass with a fixed direction; the weak boundary form vanishes.
    for (std::size_t c = 0; c < nc; ++c) {
      T.mass[c] = pair.mu[c];
      T.dir.at(c, 0, 0) = 1.0;
    }
    T.joint_mass = det_sum(T.mass);
    return T;
  }
  parallel_for(nc, [&](std::size_t c) {
    double f2 = pair.F.frob2(c);
    if (f2 <= 0.0) return;
    T.mass[c] = e * pair.mu[c];
    double inv = 1.0 / std::sqrt(f2);
    for (int k = 0; k < pair.n_comp; ++k)
      for (int j = 0; j < 2; ++j) T.dir.at(c, k, j) = pair.F.at(c, k, j) * inv;
  });
  T.joint_mass = det_sum(T.mass);
  // Charge through the measure-weighted weak form: its interior part is the
  // converged residual, its boundary part realises the boundary action.
  const int n_comp = pair.n_comp;
  std::vector<double> contrib(nc * 3 * n_comp);
  parallel_for(nc, [&](std::size_t c) {
    for (int i = 0; i < 3; ++i) {
      const Vec2& g = mesh.hat_grads[c][i];
      for (int k = 0; k < n_comp; ++k)
        contrib[(c * 3 + i) * n_comp + k] =
            pair.mu[c] * (pair.F.at(c, k, 0) * g.x + pair.F.at(c, k, 1) * g.y);
    }
  });
  T.charge = gather_all(mesh, n_comp, contrib);
  std::size_t nv = mesh.n_vertices();
  double in2 = det_sum(nv, [&](std::size_t v) {
    if (mesh.is_boundary_vertex[v]) return 0.0;
    double s = 0.0;
    for (int k = 0; k < n_comp; ++k) s += T.charge.at(k, v) * T.charge.at(k, v);
    return s;
  });
  T.interior_charge_norm = std::sqrt(in2);
  for (int k = 0; k < n_comp; ++k) {
    double tot = det_sum(nv, [&](std::size_t v) { return T.charge.at(k, v); });
    T.total_charge_max = std::max(T.total_charge_max, std::abs(tot));
  }
  return T;
}

double pair_with_form(const TriMesh& mesh, const CurrentTuple& T, const CellMatField& omega) {
  std::size_t nc = mesh.n_cells();
  if (omega.n_cells != nc || omega.n_comp != T.n_comp)
    throw std::invalid_argument("pair_with_form: form shape mismatch");
  return det_sum(nc, [&](std::size_t c) {
    if (T.mass[c] == 0.0) return 0.0;
    double s = 0.0;
    for (int k = 0; k < T.n_comp; ++k)
      s += omega.at(c, k, 0) * T.dir.at(c, k, 0) + omega.at(c, k, 1) * T.dir.at(c, k, 1);
    return T.mass[c] * s;
  });
}

double boundary_pairing(const TriMesh& mesh, const CurrentTuple& T, const NodalField& v) {
  v.check_shape(T.n_comp, mesh.n_vertices(), "boundary_pairing");
  return det_sum(mesh.boundary_vertices.size(), [&](std::size_t i) {
    std::size_t vert = mesh.boundary_vertices[i];
    double s = 0.0;
    for (int k = 0; k < T.n_comp; ++k) s += T.charge.at(k, vert) * v.at(k, vert);
    return s;
  });
}

double interior_boundary_residual(const TriMesh& mesh, const CurrentTuple& T,
                                  const NodalField& sigma) {
  sigma.check_shape(T.n_comp, mesh.n_vertices(), "interior_boundary_residual");
  return det_sum(mesh.n_vertices(), [&](std::size_t v) {
    if (mesh.is_boundary_vertex[v]) return 0.0;
    double s = 0.0;
    for (int k = 0; k < T.n_comp; ++k) s += T.charge.at(k, v) * sigma.at(k, v);
    return s;
  });
}

namespace {

double bump(double d, double radius) {
  if (d >= radius) return 0.0;
  double t = 1.0 - (d / radius) * (d / radius);
  return t * t;
}

}  // namespace

MollifiedField mollify(const TriMesh& mesh, const CellMatField& f, const MollifierSpec& spec) {
  std::size_t nc = mesh.n_cells();
  if (f.n_cells != nc) throw std::invalid_argument("mollify: field does not match mesh");
  if (!(spec.radius > 0.0)) throw std::invalid_argument("mollify: radius must be positive");
  MollifiedField out;
  out.field = CellMatField(f.n_comp, nc);
  out.excluded.assign(nc, 0);
  out.under_resolved = spec.radius < 2.0 * mesh.h_max;
  std::vector<Vec2> bary(nc);
  for (std::size_t c = 0; c < nc; ++c) bary[c] = mesh.barycentre(c);
  if (spec.mode == MollifierSpec::Mode::InteriorOnly) {
    std::vector<double> dist = mesh.barycentre_boundary_distances();
    for (std::size_t c = 0; c < nc; ++c)
      if (dist[c] < spec.radius) out.excluded[c] = 1;
  }
  PointGrid grid(bary, spec.radius);
  const int n_comp = f.n_comp;
  parallel_for(nc, [&](std::size_t c) {
    if (out.excluded[c]) {
      for (int k = 0; k < n_comp; ++k)
        for (int j = 0; j < 2; ++j) out.field.at(c, k, j) = f.at(c, k, j);
      return;
    }
    double den = 0.0;
    double num[4][2] = {{0, 0}, {0, 0}, {0, 0}, {0, 0}};
    grid.for_neighbours(bary[c], [&](std::uint32_t j) {
      double w = mesh.cell_areas[j] * bump((bary[c] - bary[j]).norm(), spec.radius);
      if (w == 0.0) return;
      den += w;
      for (int k = 0; k < n_comp; ++k)
        for (int jj = 0; jj < 2; ++jj) num[k][jj] += w * f.at(j, k, jj);
    });
    for (int k = 0; k < n_comp; ++k)
      for (int jj = 0; jj < 2; ++jj) out.field.at(c, k, jj) = num[k][jj] / den;
  });
  return out;
}

std::vector<double> mollified_distance_trace(const TriMesh& mesh, const CellMatField& f,
                                             const std::vector<double>& mu,
                                             const std::vector<double>& radii,
                                             MollifierSpec::Mode mode) {
  if (mu.size() != mesh.n_cells())
    throw std::invalid_argument("mollified_distance_trace: mu size mismatch");
  std::vector<double> out;
  out.reserve(radii.size());
  for (double r : radii) {
    MollifierSpec spec;
    spec.radius = r;
    spec.mode = mode;
    MollifiedField mol = mollify(mesh, f, spec);
    out.push_back(det_sum(mesh.n_cells(), [&](std::size_t c) {
      if (mol.excluded[c]) return 0.0;
      double s = 0.0;
      for (int k = 0; k < f.n_comp; ++k)
        for (int j = 0; j < 2; ++j) {
          double d = mol.field.at(c, k, j) - f.at(c, k, j);
          s += d * d;
        }
      return mu[c] * s;
    }));
  }
  return out;
}

double mollifier_commutator(const TriMesh& mesh, const NodalField& v, double radius) {
  v.check_shape(v.n_comp, mesh.n_vertices(), "mollifier_commutator");
  if (!(radius > 0.0)) throw std::invalid_argument("mollifier_commutator: radius must be positive");
  std::size_t nc = mesh.n_cells(), nv = mesh.n_vertices();
  MollifierSpec spec;
  spec.radius = radius;
  spec.mode = MollifierSpec::Mode::BoundaryAdapted;
  MollifiedField mol_grad = mollify(mesh, cell_gradient(mesh, v), spec);

  // Vertex-sampled mollification of v itself, then the gradient of its
  // interpolant.
  std::vector<Vec2> bary(nc);
  std::vector<double> cell_mean(static_cast<std::size_t>(v.n_comp) * nc);
  for (std::size_t c = 0; c < nc; ++c) {
    bary[c] = mesh.barycentre(c);
    const auto& t = mesh.tris[c];
    for (int k = 0; k < v.n_comp; ++k)
      cell_mean[static_cast<std::size_t>(k) * nc + c] =
          (v.at(k, t[0]) + v.at(k, t[1]) + v.at(k, t[2])) / 3.0;
  }
  PointGrid grid(bary, radius);
  NodalField smooth(v.n_comp, nv);
  parallel_for(nv, [&](std::size_t w) {
    double den = 0.0;
    double num[4] = {0, 0, 0, 0};
    grid.for_neighbours(mesh.vertices[w], [&](std::uint32_t j) {
      double kw = mesh.cell_areas[j] * bump((mesh.vertices[w] - bary[j]).norm(), radius);
      if (kw == 0.0) return;
      den += kw;
      for (int k = 0; k < v.n_comp; ++k) num[k] += kw * cell_mean[static_cast<std::size_t>(k) * nc + j];
    });
    for (int k = 0; k < v.n_comp; ++k) smooth.at(k, w) = den > 0.0 ? num[k] / den : 0.0;
  });
  CellMatField grad_mol = cell_gradient(mesh, smooth);

  std::vector<double> dist = mesh.barycentre_boundary_distances();
  double worst = 0.0;
  for (std::size_t c = 0; c < nc; ++c) {
    if (dist[c] < 2.0 * radius) continue;
    double s = 0.0;
    for (int k = 0; k < v.n_comp; ++k)
      for (int j = 0; j < 2; ++j) {
        double d = mol_grad.field.at(c, k, j) - grad_mol.at(c, k, j);
        s += d * d;
      }
    worst = std::max(worst, std::sqrt(s));
  }
  return worst;
}

WeakCompareReport compare_pairs(const TriMesh& mesh, const MeasureFunctionPair& A,
                                const MeasureFunctionPair& B) {
  if (A.n_comp != B.n_comp) throw std::invalid_argument("compare_pairs: component mismatch");
  if (A.mu.size() != mesh.n_cells() || B.mu.size() != mesh.n_cells())
    throw std::invalid_argument("compare_pairs: pair does not match mesh");
  std::size_t nc = mesh.n_cells();
  std::vector<Vec2> bary(nc);
  for (std::size_t c = 0; c < nc; ++c) bary[c] = mesh.barycentre(c);
  WeakCompareReport rep;
  auto scalar_entry = [&](auto&& eta) {
    double a = det_sum(nc, [&](std::size_t c) { return A.mu[c] * eta(bary[c]); });
    double b = det_sum(nc, [&](std::size_t c) { return B.mu[c] * eta(bary[c]); });
    rep.entries.push_back(std::abs(a - b));
  };
  scalar_entry([](const Vec2&) { return 1.0; });
  scalar_entry([](const Vec2& x) { return x.x; });
  scalar_entry([](const Vec2& x) { return x.y; });
  scalar_entry([](const Vec2& x) { return x.x * x.x; });
  scalar_entry([](const Vec2& x) { return x.x * x.y; });
  scalar_entry([](const Vec2& x) { return x.y * x.y; });
  for (int k = 0; k < A.n_comp; ++k)
    for (int j = 0; j < 2; ++j) {
      auto matrix_entry = [&](auto&& q) {
        double a = det_sum(nc, [&](std::size_t c) { return A.mu[c] * q(bary[c]) * A.F.at(c, k, j); });
        double b = det_sum(nc, [&](std::size_t c) { return B.mu[c] * q(bary[c]) * B.F.at(c, k, j); });
        rep.entries.push_back(std::abs(a - b));
      };
      matrix_entry([](const Vec2&) { return 1.0; });
      matrix_entry([](const Vec2& x) { return x.x; });
      matrix_entry([](const Vec2& x) { return x.y; });
    }
  rep.strong_surrogate = std::abs(A.second_moment - B.second_moment);
  return rep;
}

MassEstimateCheck mass_estimate_check(const MeasureFunctionPair& pair,
                                      const std::vector<double>& xi_values, double xi_max,
                                      double alpha) {
  if (xi_values.size() != pair.mu.size())
    throw std::invalid_argument("mass_estimate_check: xi size mismatch");
  if (!(alpha > 0.0 && alpha <= 1.0))
    throw std::invalid_argument("mass_estimate_check: alpha must be in (0, 1]");
  if (!(xi_max >= 0.0)) throw std::invalid_argument("mass_estimate_check: xi_max must be >= 0");
  for (double x : xi_values)
    if (!(x >= 0.0 && x <= xi_max))
      throw std::invalid_argument("mass_estimate_check: xi values must lie in [0, xi_max]");
  std::size_t nc = pair.mu.size();
  double int_xi = det_sum(nc, [&](std::size_t c) { return xi_values[c] * pair.mu[c]; });
  double int_xi_f2 =
      det_sum(nc, [&](std::size_t c) { return xi_values[c] * pair.mu[c] * pair.F.frob2(c); });
  MassEstimateCheck out;
  double e2 = pair.e * pair.e;
  out.lhs = alpha * alpha * e2 * int_xi;
  out.rhs = int_xi_f2 + std::pow(alpha, pair.p) * e2 * xi_max;
  out.slack = out.rhs - out.lhs;
  return out;
}

void export_current_csv(const TriMesh& mesh, const CurrentTuple& T, const std::string& path) {
  std::FILE* fp = std::fopen(path.c_str(), "w");
  if (!fp) throw std::runtime_error("export_current_csv: cannot open " + path);
  std::fprintf(fp, "cell,bx,by,mass");
  for (int k = 0; k < T.n_comp; ++k) std::fprintf(fp, ",t%d_x,t%d_y", k + 1, k + 1);
  std::fprintf(fp, "\n");
  for (std::size_t c = 0; c < mesh.n_cells(); ++c) {
    Vec2 b = mesh.barycentre(c);
    std::fprintf(fp, "%zu,%.17g,%.17g,%.17g", c, b.x, b.y, T.mass[c]);
    for (int k = 0; k < T.n_comp; ++k)
      std::fprintf(fp, ",%.17g,%.17g", T.dir.at(c, k, 0), T.dir.at(c, k, 1));
    std::fprintf(fp, "\n");
  }
  std::fclose(fp);
}

}  // namespace limcur
