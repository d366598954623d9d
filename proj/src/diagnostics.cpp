// Diagnostics on computed states: stationarity and geodesic residuals,
// density-ratio monotonicity, support extraction, gradient envelopes, duality
// gaps, boundary decay, rigidity probes and local mass comparisons.
#include "limcur/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

#include "limcur/energy.hpp"
#include "limcur/quadrature.hpp"
#include "limcur/reduce.hpp"

namespace limcur {

namespace {

// Cells whose bounding box overlaps the support box of the bump, ascending.
std::vector<std::uint32_t> bump_cover(const TriMesh& mesh, const ScalarBump& bump) {
  std::vector<std::uint32_t> cover;
  const double lx = bump.centre.x - bump.hx, hx = bump.centre.x + bump.hx;
  const double ly = bump.centre.y - bump.hy, hy = bump.centre.y + bump.hy;
  for (std::size_t c = 0; c < mesh.n_cells(); ++c) {
    const auto& t = mesh.tris[c];
    double ax = mesh.vertices[t[0]].x, bx = ax;
    double ay = mesh.vertices[t[0]].y, by = ay;
    for (int i = 1; i < 3; ++i) {
      ax = std::min(ax, mesh.vertices[t[i]].x);
      bx = std::max(bx, mesh.vertices[t[i]].x);
      ay = std::min(ay, mesh.vertices[t[i]].y);
      by = std::max(by, mesh.vertices[t[i]].y);
    }
    if (bx >= lx && ax <= hx && by >= ly && ay <= hy)
      cover.push_back(static_cast<std::uint32_t>(c));
  }
  return cover;
}

struct CellMoments {
  std::uint32_t cell = 0;
  double c0 = 0.0;                            // int chi
  Vec2 g{0.0, 0.0};                           // int grad chi
  double m[2][2] = {{0.0, 0.0}, {0.0, 0.0}};  // m[j][i] = int x_j d_i chi
};

struct BumpMoments {
  std::vector<CellMoments> cells;  // ascending cell id
  double sup_grad = 0.0;           // max |grad chi| over quadrature points
};

// Per-cell moments of one bump. On banks snapped to a structured mesh the
// integrands are polynomial on every cell, so the rule is exact.
BumpMoments bump_moments(const TriMesh& mesh, const ScalarBump& bump) {
  BumpMoments out;
  const std::vector<std::uint32_t> cover = bump_cover(mesh, bump);
  out.cells.resize(cover.size());
  std::vector<double> sups(cover.size(), 0.0);
  parallel_for(cover.size(), [&](std::size_t idx) {
    const std::uint32_t c = cover[idx];
    const auto& t = mesh.tris[c];
    double acc[7] = {0, 0, 0, 0, 0, 0, 0};
    double local_sup = 0.0;
    integrate_tri_acc(
        mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]],
        [&](const Vec2& x, double w, double* a) {
          const double chi = bump.value(x);
          const Vec2 gr = bump.grad(x);
          local_sup = std::max(local_sup, std::sqrt(gr.x * gr.x + gr.y * gr.y));
          a[0] += w * chi;
          a[1] += w * gr.x;
          a[2] += w * gr.y;
          a[3] += w * x.x * gr.x;
          a[4] += w * x.x * gr.y;
          a[5] += w * x.y * gr.x;
          a[6] += w * x.y * gr.y;
        },
        acc);
    CellMoments cm;
    cm.cell = c;
    cm.c0 = acc[0];
    cm.g = {acc[1], acc[2]};
    cm.m[0][0] = acc[3];
    cm.m[0][1] = acc[4];
    cm.m[1][0] = acc[5];
    cm.m[1][1] = acc[6];
    out.cells[idx] = cm;
    sups[idx] = local_sup;
  });
  for (double s : sups) out.sup_grad = std::max(out.sup_grad, s);
  return out;
}

std::vector<BumpMoments> all_moments(const TriMesh& mesh, const TestFieldBank& bank) {
  std::vector<BumpMoments> mom;
  mom.reserve(bank.entries.size());
  for (const ScalarBump& b : bank.entries) mom.push_back(bump_moments(mesh, b));
  return mom;
}

double pohozaev_from_moments(const TriMesh& mesh, const MeasureFunctionPair& pair,
                             const std::vector<BumpMoments>& mom) {
  if (pair.degenerate || pair.e <= 0.0) return 0.0;
  double worst = 0.0;
  for (const BumpMoments& bm : mom) {
    if (bm.cells.empty() || bm.sup_grad <= 0.0) continue;
    double r0 = 0.0, r1 = 0.0;
    for (const CellMoments& cm : bm.cells) {
      const std::size_t c = cm.cell;
      const double dens = pair.mu[c] / mesh.cell_areas[c];
      double f00 = 0.0, f01 = 0.0, f11 = 0.0, s = 0.0;
      for (int k = 0; k < pair.n_comp; ++k) {
        const double a = pair.F.at(c, k, 0), b = pair.F.at(c, k, 1);
        f00 += a * a;
        f01 += a * b;
        f11 += b * b;
      }
      s = f00 + f11;
      r0 += dens * (f00 * cm.g.x + f01 * cm.g.y - (s / pair.p) * cm.g.x);
      r1 += dens * (f01 * cm.g.x + f11 * cm.g.y - (s / pair.p) * cm.g.y);
    }
    const double scale = pair.e * pair.e * bm.sup_grad;
    worst = std::max(worst, std::max(std::abs(r0), std::abs(r1)) / scale);
  }
  return worst;
}

double geodesic_from_moments(const TriMesh& mesh, const CurrentTuple& T,
                             const std::vector<BumpMoments>& mom) {
  if (T.joint_mass <= 0.0) return 0.0;
  double worst = 0.0;
  for (const BumpMoments& bm : mom) {
    if (bm.cells.empty() || bm.sup_grad <= 0.0) continue;
    double r0 = 0.0, r1 = 0.0;
    for (const CellMoments& cm : bm.cells) {
      const std::size_t c = cm.cell;
      const double dens = T.mass[c] / mesh.cell_areas[c];
      if (dens == 0.0) continue;
      double a0 = 0.0, a1 = 0.0;
      for (int k = 0; k < T.n_comp; ++k) {
        const double t0 = T.dir.at(c, k, 0), t1 = T.dir.at(c, k, 1);
        const double proj = t0 * cm.g.x + t1 * cm.g.y;
        a0 += t0 * proj;
        a1 += t1 * proj;
      }
      r0 += dens * a0;
      r1 += dens * a1;
    }
    const double scale = T.joint_mass * bm.sup_grad;
    worst = std::max(worst, std::max(std::abs(r0), std::abs(r1)) / scale);
  }
  return worst;
}

// Exact per-cell gaps: u is affine on each cell, so int u_k d_i chi reduces
// to the stored moments.
std::vector<double> gaps_from_moments(const TriMesh& mesh, const CurrentTuple& T,
                                      const std::vector<double>& ubar, const CellMatField& Du,
                                      double e, const std::vector<BumpMoments>& mom) {
  std::vector<double> gaps;
  gaps.reserve(mom.size());
  const int nk = T.n_comp;
  for (const BumpMoments& bm : mom) {
    double acc = 0.0;
    for (const CellMoments& cm : bm.cells) {
      const std::size_t c = cm.cell;
      const double mass = T.mass[c];
      if (mass == 0.0) continue;
      const Vec2 b = mesh.barycentre(c);
      double term = e * cm.c0;
      for (int k = 0; k < nk; ++k) {
        const double t0 = T.dir.at(c, k, 0), t1 = T.dir.at(c, k, 1);
        const double d0 = Du.at(c, k, 0), d1 = Du.at(c, k, 1);
        const double a0 = ubar[c * nk + k] - (d0 * b.x + d1 * b.y);
        const double i0 = a0 * cm.g.x + d0 * cm.m[0][0] + d1 * cm.m[1][0];
        const double i1 = a0 * cm.g.y + d0 * cm.m[0][1] + d1 * cm.m[1][1];
        term += t0 * i0 + t1 * i1;
      }
      acc += (mass / mesh.cell_areas[c]) * term;
    }
    gaps.push_back(acc);
  }
  return gaps;
}

// Barycentre values of a nodal field, indexed c * n_comp + k.
std::vector<double> barycentre_values(const TriMesh& mesh, const NodalField& u) {
  const std::size_t nc = mesh.n_cells();
  std::vector<double> ubar(nc * u.n_comp);
  parallel_for(nc, [&](std::size_t c) {
    const auto& t = mesh.tris[c];
    for (int k = 0; k < u.n_comp; ++k)
      ubar[c * u.n_comp + k] =
          (u.at(k, t[0]) + u.at(k, t[1]) + u.at(k, t[2])) * (1.0 / 3.0);
  });
  return ubar;
}

double dist2_point_seg(const Vec2& x, const Vec2& a, const Vec2& b) {
  const Vec2 ab = b - a;
  const double l2 = ab.x * ab.x + ab.y * ab.y;
  double t = l2 > 0.0 ? ((x.x - a.x) * ab.x + (x.y - a.y) * ab.y) / l2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const Vec2 d{x.x - (a.x + t * ab.x), x.y - (a.y + t * ab.y)};
  return d.x * d.x + d.y * d.y;
}

double dist2_point_tri(const Vec2& x, const Vec2& v0, const Vec2& v1, const Vec2& v2) {
  // inside the positively oriented triangle when left of every edge
  if (cross(v1 - v0, x - v0) >= 0.0 && cross(v2 - v1, x - v1) >= 0.0 &&
      cross(v0 - v2, x - v2) >= 0.0)
    return 0.0;
  return std::min({dist2_point_seg(x, v0, v1), dist2_point_seg(x, v1, v2),
                   dist2_point_seg(x, v2, v0)});
}

// Portable symmetric uniform draw in [-1, 1] from the raw generator stream.
double unit_sym(std::mt19937_64& rng) {
  return 2.0 * (static_cast<double>(rng() >> 11) * 0x1.0p-53) - 1.0;
}

}  // namespace

double pohozaev_residual(const TriMesh& mesh, const MeasureFunctionPair& pair,
                         const TestFieldBank& bank) {
  return pohozaev_from_moments(mesh, pair, all_moments(mesh, bank));
}

double geodesic_residual(const TriMesh& mesh, const CurrentTuple& T, const TestFieldBank& bank) {
  return geodesic_from_moments(mesh, T, all_moments(mesh, bank));
}

ThetaReport theta_monotonicity(const TriMesh& mesh, const CurrentTuple& T,
                               const std::vector<Vec2>& points,
                               const std::vector<double>& radii) {
  ThetaReport rep;
  rep.radii = radii;
  const double h = mesh.target_h;
  for (const Vec2& x0 : points) {
    ThetaSample s;
    s.x0 = x0;
    const BallCover cover = balls_and_shells(mesh, x0, radii);
    s.skipped = !cover.exceeds_boundary_dist.empty() &&
                cover.exceeds_boundary_dist.back() != 0;
    s.theta.resize(radii.size(), 0.0);
    for (std::size_t i = 0; i < radii.size(); ++i) {
      double m = 0.0;
      for (std::size_t c : cover.cells[i]) m += T.mass[c];
      s.theta[i] = m / radii[i];
    }
    for (std::size_t i = 0; i + 1 < radii.size(); ++i) {
      const double drop = (s.theta[i] - s.theta[i + 1]) * radii[i] / h;
      s.violation_ratio = std::max(s.violation_ratio, drop);
      // shell = cells in the larger ball but not the smaller (both ascending)
      double rhs = 0.0;
      const auto& small = cover.cells[i];
      const auto& big = cover.cells[i + 1];
      std::size_t j = 0;
      for (std::size_t c : big) {
        while (j < small.size() && small[j] < c) ++j;
        if (j < small.size() && small[j] == c) continue;
        const Vec2 d = mesh.barycentre(c) - x0;
        const double dist = std::sqrt(d.x * d.x + d.y * d.y);
        if (dist <= 0.0) continue;
        double align2 = 0.0;
        for (int k = 0; k < T.n_comp; ++k) {
          const double a =
              (d.x * T.dir.at(c, k, 0) + d.y * T.dir.at(c, k, 1)) / dist;
          align2 += a * a;
        }
        rhs += T.mass[c] * (1.0 - align2) / dist;
      }
      s.worst_identity_mismatch = std::max(
          s.worst_identity_mismatch, std::abs((s.theta[i + 1] - s.theta[i]) - rhs));
    }
    if (!s.skipped) rep.worst_ratio = std::max(rep.worst_ratio, s.violation_ratio);
    if (s.skipped) ++rep.n_skipped;
    rep.samples.push_back(std::move(s));
  }
  return rep;
}

double theta_shell_oracle(double density, double s, double r) {
  if (!(s > 0.0) || !(r > s))
    throw std::invalid_argument("theta_shell_oracle: need 0 < s < r");
  const int np_rad = 4, np_ang = 8;
  const double two_pi = 2.0 * std::numbers::pi;
  double total = 0.0;
  for (int ir = 0; ir < np_rad; ++ir) {
    const double r0 = s + (r - s) * ir / np_rad;
    const double r1 = s + (r - s) * (ir + 1) / np_rad;
    for (int ia = 0; ia < np_ang; ++ia) {
      const double a0 = two_pi * ia / np_ang;
      const double a1 = two_pi * (ia + 1) / np_ang;
      for (int i = 0; i < kGaussN; ++i) {
        const double rho = r0 + (r1 - r0) * kGaussX[i];
        const double wr = (r1 - r0) * kGaussW[i];
        for (int j = 0; j < kGaussN; ++j) {
          const double phi = a0 + (a1 - a0) * kGaussX[j];
          const double wa = (a1 - a0) * kGaussW[j];
          const double sp = std::sin(phi);
          total += wr * wa * density * (sp * sp / rho) * rho;
        }
      }
    }
  }
  return total;
}

std::vector<double> du_star(const TriMesh& mesh, const CellMatField& Du,
                            const std::vector<Vec2>& queries, double r_star) {
  if (Du.n_cells != mesh.n_cells())
    throw std::invalid_argument("du_star: gradient field does not match the mesh");
  if (!(r_star >= 2.0 * mesh.target_h * (1.0 - 1e-12)))
    throw std::invalid_argument("du_star: radius below twice the mesh pitch");
  const std::size_t nc = mesh.n_cells();
  std::vector<double> mag(nc), reach(nc);
  std::vector<Vec2> bary(nc);
  parallel_for(nc, [&](std::size_t c) {
    mag[c] = std::sqrt(Du.frob2(c));
    bary[c] = mesh.barycentre(c);
    const auto& t = mesh.tris[c];
    double m2 = 0.0;
    for (int i = 0; i < 3; ++i) {
      const Vec2 d = mesh.vertices[t[i]] - bary[c];
      m2 = std::max(m2, d.x * d.x + d.y * d.y);
    }
    reach[c] = std::sqrt(m2);
  });
  const PointGrid grid(bary, r_star + mesh.h_max);
  const double r2 = r_star * r_star;
  std::vector<double> out(queries.size(), 0.0);
  parallel_for(queries.size(), [&](std::size_t qi) {
    const Vec2 x = queries[qi];
    double best = 0.0;
    grid.for_neighbours(x, [&](std::uint32_t c) {
      if (mag[c] <= best) return;
      const Vec2 d = bary[c] - x;
      const double d2 = d.x * d.x + d.y * d.y;
      const double far = r_star + reach[c];
      if (d2 > far * far) return;
      if (d2 > r2) {
        const auto& t = mesh.tris[c];
        if (dist2_point_tri(x, mesh.vertices[t[0]], mesh.vertices[t[1]],
                            mesh.vertices[t[2]]) > r2)
          return;
      }
      best = mag[c];
    });
    out[qi] = best;
  });
  return out;
}

std::vector<double> du_star_vertices(const TriMesh& mesh, const CellMatField& Du,
                                     double r_star) {
  return du_star(mesh, Du, mesh.vertices, r_star);
}

SupportReport extract_support(const TriMesh& mesh, const CurrentTuple& T, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0))
    throw std::invalid_argument("extract_support: threshold must lie in (0, 1)");
  SupportReport rep;
  rep.threshold = threshold;
  const std::size_t nc = mesh.n_cells();
  double maxd = 0.0;
  for (std::size_t c = 0; c < nc; ++c)
    maxd = std::max(maxd, T.mass[c] / mesh.cell_areas[c]);
  rep.max_density = maxd;
  if (T.joint_mass <= 0.0 || maxd <= 0.0) {
    rep.empty = true;
    return rep;
  }
  double msel = 0.0, asel = 0.0;
  for (std::size_t c = 0; c < nc; ++c) {
    if (T.mass[c] / mesh.cell_areas[c] >= threshold * maxd) {
      rep.cells.push_back(c);
      msel += T.mass[c];
      asel += mesh.cell_areas[c];
    }
  }
  rep.mass_fraction = msel / T.joint_mass;
  rep.area_fraction = asel / mesh.area;
  return rep;
}

std::vector<double> duality_gap(const TriMesh& mesh, const CurrentTuple& T, const NodalField& u,
                                double e, const TestFieldBank& bank) {
  u.check_shape(T.n_comp, mesh.n_vertices(), "duality_gap");
  const CellMatField Du = cell_gradient(mesh, u);
  return gaps_from_moments(mesh, T, barycentre_values(mesh, u), Du, e,
                           all_moments(mesh, bank));
}

DecayReport boundary_decay(const TriMesh& mesh, const CurrentTuple& T,
                           const std::vector<double>& radii) {
  DecayReport rep;
  rep.radii = radii;
  const std::vector<double> dist = mesh.barycentre_boundary_distances();
  for (double r : radii) {
    if (!(r > 0.0)) throw std::invalid_argument("boundary_decay: radii must be positive");
    double inner = 0.0, outer = 0.0;
    for (std::size_t c = 0; c < mesh.n_cells(); ++c) {
      if (dist[c] < r) {
        outer += T.mass[c];
        if (dist[c] < 0.5 * r) inner += T.mass[c];
      }
    }
    rep.ratios.push_back(outer > 0.0 ? inner / outer : 0.0);
  }
  for (double v : rep.ratios) rep.max_ratio = std::max(rep.max_ratio, v);
  return rep;
}

RigidityReport rigidity_probe(const TriMesh& mesh, const NodalField& u, const CurrentTuple& T,
                              const TestFieldBank& bank, const std::vector<double>& t_grid) {
  u.check_shape(T.n_comp, mesh.n_vertices(), "rigidity_probe");
  if (t_grid.empty()) throw std::invalid_argument("rigidity_probe: empty t grid");
  RigidityReport rep;
  const std::size_t nc = mesh.n_cells();
  const CellMatField Du = cell_gradient(mesh, u);
  std::vector<double> s0(nc);
  double e2 = 0.0;
  for (std::size_t c = 0; c < nc; ++c) {
    s0[c] = Du.frob2(c);
    e2 = std::max(e2, s0[c]);
  }
  const double e_base = std::sqrt(e2);
  std::vector<char> in_cover(nc, 0);
  for (std::size_t bi = 0; bi < bank.entries.size(); ++bi) {
    const ScalarBump& bump = bank.entries[bi];
    const std::vector<std::uint32_t> cover = bump_cover(mesh, bump);
    for (std::uint32_t c : cover) in_cover[c] = 1;
    double max_out2 = 0.0;
    for (std::size_t c = 0; c < nc; ++c)
      if (!in_cover[c]) max_out2 = std::max(max_out2, s0[c]);
    // exact per-cell data for the perturbed seminorm
    std::vector<double> q(cover.size());
    std::vector<double> bpair(cover.size() * T.n_comp);
    double mass_cov = 0.0;
    for (std::size_t idx = 0; idx < cover.size(); ++idx) {
      const std::size_t c = cover[idx];
      mass_cov += T.mass[c];
      const auto& t = mesh.tris[c];
      Vec2 dphi{0.0, 0.0};
      for (int i = 0; i < 3; ++i)
        dphi = dphi + bump.value(mesh.vertices[t[i]]) * mesh.hat_grads[c][i];
      q[idx] = dphi.x * dphi.x + dphi.y * dphi.y;
      for (int k = 0; k < T.n_comp; ++k)
        bpair[idx * T.n_comp + k] = Du.at(c, k, 0) * dphi.x + Du.at(c, k, 1) * dphi.y;
    }
    const double mf = T.joint_mass > 0.0 ? mass_cov / T.joint_mass : 0.0;
    for (int k = 0; k < T.n_comp; ++k) {
      RigidityEntry ent;
      ent.bump = bi;
      ent.comp = k;
      ent.mass_fraction = mf;
      bool first = true;
      for (double t : t_grid) {
        double max_in2 = 0.0;
        for (std::size_t idx = 0; idx < cover.size(); ++idx) {
          const double v = s0[cover[idx]] + 2.0 * t * bpair[idx * T.n_comp + k] +
                           t * t * q[idx];
          max_in2 = std::max(max_in2, v);
        }
        const double dE = std::sqrt(std::max(0.0, std::max(max_out2, max_in2))) - e_base;
        ent.min_dE = first ? dE : std::min(ent.min_dE, dE);
        ent.max_dE = first ? dE : std::max(ent.max_dE, dE);
        first = false;
      }
      if (ent.mass_fraction >= 0.1 && !(ent.min_dE > 0.0)) rep.support_positive = false;
      if (ent.min_dE <= 0.0) ++rep.n_slack;
      rep.entries.push_back(ent);
    }
    for (std::uint32_t c : cover) in_cover[c] = 0;
  }
  return rep;
}

CurrentTuple competitor_from_stream(const TriMesh& mesh, const CurrentTuple& T,
                                    const NodalField& psi) {
  psi.check_shape(T.n_comp, mesh.n_vertices(), "competitor_from_stream");
  CurrentTuple S;
  S.n_comp = T.n_comp;
  S.e = T.e;
  S.degenerate = T.degenerate;
  S.charge = T.charge;
  S.interior_charge_norm = T.interior_charge_norm;
  S.total_charge_max = T.total_charge_max;
  const std::size_t nc = mesh.n_cells();
  S.mass.assign(nc, 0.0);
  S.dir = CellMatField(T.n_comp, nc);
  const CellMatField Dpsi = cell_gradient(mesh, psi);
  std::vector<double> V(2 * T.n_comp);
  for (std::size_t c = 0; c < nc; ++c) {
    double m2 = 0.0;
    for (int k = 0; k < T.n_comp; ++k) {
      // rotated stream gradient: perp(Dpsi) = (-d2 psi, d1 psi)
      const double vx = T.mass[c] * T.dir.at(c, k, 0) -
                        mesh.cell_areas[c] * Dpsi.at(c, k, 1);
      const double vy = T.mass[c] * T.dir.at(c, k, 1) +
                        mesh.cell_areas[c] * Dpsi.at(c, k, 0);
      V[2 * k] = vx;
      V[2 * k + 1] = vy;
      m2 += vx * vx + vy * vy;
    }
    const double m = std::sqrt(m2);
    S.mass[c] = m;
    if (m > 0.0)
      for (int k = 0; k < T.n_comp; ++k) {
        S.dir.at(c, k, 0) = V[2 * k] / m;
        S.dir.at(c, k, 1) = V[2 * k + 1] / m;
      }
  }
  S.joint_mass = det_sum(S.mass);
  return S;
}

MassComparison local_mass_comparison(const TriMesh& mesh, const CurrentTuple& T,
                                     const std::vector<char>& in_K, const CurrentTuple& S,
                                     const TestFieldBank& forms, double tol) {
  if (in_K.size() != mesh.n_cells())
    throw std::invalid_argument("local_mass_comparison: in_K size mismatch");
  if (S.n_comp != T.n_comp)
    throw std::invalid_argument("local_mass_comparison: component count mismatch");
  const std::size_t nc = mesh.n_cells();
  const double scale = 1.0 + T.joint_mass;
  double worst_cell = 0.0;
  std::size_t worst_c = 0;
  for (std::size_t c = 0; c < nc; ++c) {
    if (in_K[c]) continue;
    double d2 = 0.0;
    for (int k = 0; k < T.n_comp; ++k)
      for (int j = 0; j < 2; ++j) {
        const double d = S.mass[c] * S.dir.at(c, k, j) - T.mass[c] * T.dir.at(c, k, j);
        d2 += d * d;
      }
    if (d2 > worst_cell) {
      worst_cell = d2;
      worst_c = c;
    }
  }
  worst_cell = std::sqrt(worst_cell);
  if (worst_cell > tol * scale)
    throw std::invalid_argument("local_mass_comparison: competitor differs outside K (cell " +
                                std::to_string(worst_c) + ", defect " +
                                std::to_string(worst_cell) + ")");
  MassComparison cmp;
  double worst_form = 0.0;
  std::size_t worst_bump = 0;
  int worst_comp = 0;
  for (std::size_t bi = 0; bi < forms.entries.size(); ++bi) {
    const std::vector<std::uint32_t> cover = bump_cover(mesh, forms.entries[bi]);
    for (int k = 0; k < T.n_comp; ++k) {
      double acc = 0.0;
      for (std::uint32_t c : cover) {
        const auto& t = mesh.tris[c];
        Vec2 dphi{0.0, 0.0};
        for (int i = 0; i < 3; ++i)
          dphi = dphi + forms.entries[bi].value(mesh.vertices[t[i]]) * mesh.hat_grads[c][i];
        acc += (S.mass[c] * S.dir.at(c, k, 0) - T.mass[c] * T.dir.at(c, k, 0)) * dphi.x +
               (S.mass[c] * S.dir.at(c, k, 1) - T.mass[c] * T.dir.at(c, k, 1)) * dphi.y;
      }
      if (std::abs(acc) > worst_form) {
        worst_form = std::abs(acc);
        worst_bump = bi;
        worst_comp = k;
      }
    }
  }
  cmp.worst_form_defect = worst_form;
  if (worst_form > tol * scale)
    throw std::invalid_argument(
        "local_mass_comparison: boundary pairing mismatch on form bump " +
        std::to_string(worst_bump) + " component " + std::to_string(worst_comp) +
        " (defect " + std::to_string(worst_form) + ")");
  double mt = 0.0, ms = 0.0;
  for (std::size_t c = 0; c < nc; ++c) {
    if (!in_K[c]) continue;
    mt += T.mass[c];
    ms += S.mass[c];
  }
  cmp.mass_T = mt;
  cmp.mass_S = ms;
  cmp.holds = mt <= ms + tol * scale;
  return cmp;
}

DiagnosticsReport run_diagnostics(const TriMesh& mesh, const DomainSpec& domain,
                                  const NodalField& u, const MeasureFunctionPair& pair,
                                  const CurrentTuple& T, const TangentialTrace& trace,
                                  const DirichletData& bc, const DiagnosticsConfig& config) {
  DiagnosticsReport rep;
  rep.p = pair.p;
  rep.e = pair.e;
  const std::size_t nc = mesh.n_cells();
  const int nk = pair.n_comp;
  u.check_shape(nk, mesh.n_vertices(), "run_diagnostics");

  const TestFieldBank bank =
      TestFieldBank::for_domain(domain, mesh, config.bank_per_axis, config.bank_margin_cells);
  const std::vector<BumpMoments> moments = all_moments(mesh, bank);

  rep.pohozaev = pohozaev_from_moments(mesh, pair, moments);
  rep.geodesic = geodesic_from_moments(mesh, T, moments);

  // area-weighted centroid anchors the interior sampling constructions
  Vec2 centre{0.0, 0.0};
  for (std::size_t c = 0; c < nc; ++c)
    centre = centre + mesh.cell_areas[c] * mesh.barycentre(c);
  centre = centre * (1.0 / mesh.area);
  const double dc = mesh.dist_to_boundary(centre);

  {
    std::vector<double> radii;
    for (double rc : config.theta_radii_cells) radii.push_back(rc * mesh.target_h);
    const double rmax = radii.empty() ? 0.0 : radii.back();
    double ring = std::min(0.45 * dc, dc - 1.1 * rmax);
    if (!(ring > 0.0)) ring = 0.25 * dc;  // samples get flagged as skipped
    std::vector<Vec2> pts;
    for (int i = 0; i < config.theta_points; ++i) {
      const double a = 2.0 * std::numbers::pi * i / config.theta_points;
      pts.push_back({centre.x + ring * std::cos(a), centre.y + ring * std::sin(a)});
    }
    rep.theta = theta_monotonicity(mesh, T, pts, radii);
  }

  const double r_star = config.du_star_radius_cells * mesh.target_h;
  rep.du_star_field = du_star_vertices(mesh, pair.F, r_star);
  rep.du_star_min = std::numeric_limits<double>::infinity();
  for (std::size_t v = 0; v < rep.du_star_field.size(); ++v) {
    rep.du_star_min = std::min(rep.du_star_min, rep.du_star_field[v]);
    rep.du_star_max = std::max(rep.du_star_max, rep.du_star_field[v]);
  }
  if (rep.du_star_field.empty()) rep.du_star_min = 0.0;
  // The maximum is attained on a plateau: every vertex whose ball meets the
  // hottest cell carries the same value. Localise the peak by taking the tied
  // vertex nearest that cell rather than an arbitrary plateau point.
  {
    std::size_t hot = 0;
    double hot_mag = -1.0;
    for (std::size_t c = 0; c < mesh.n_cells(); ++c) {
      const double m = pair.F.frob2(c);
      if (m > hot_mag) {
        hot_mag = m;
        hot = c;
      }
    }
    const Vec2 peak = mesh.n_cells() > 0 ? mesh.barycentre(hot) : Vec2{0.0, 0.0};
    double best_d2 = std::numeric_limits<double>::infinity();
    for (std::size_t v = 0; v < rep.du_star_field.size(); ++v) {
      if (rep.du_star_field[v] != rep.du_star_max) continue;
      const Vec2 d = mesh.vertices[v] - peak;
      const double d2 = d.x * d.x + d.y * d.y;
      if (d2 < best_d2) {
        best_d2 = d2;
        rep.du_star_argmax = v;
      }
    }
  }
  rep.du_star_argmax_pos = mesh.vertices[rep.du_star_argmax];

  rep.support = extract_support(mesh, T, config.support_threshold);
  if (!rep.support.empty && !rep.support.cells.empty()) {
    std::vector<Vec2> qs;
    qs.reserve(rep.support.cells.size());
    for (std::size_t c : rep.support.cells) qs.push_back(mesh.barycentre(c));
    const std::vector<double> ds = du_star(mesh, pair.F, qs, r_star);
    double sum = 0.0;
    for (double v : ds) sum += v;
    rep.support_mean_du_star = sum / static_cast<double>(ds.size());
  }

  {
    const std::vector<double> deficit =
        gaps_from_moments(mesh, T, barycentre_values(mesh, u), pair.F, pair.e, moments);
    for (double g : deficit)
      rep.duality_equality_deficit = std::max(rep.duality_equality_deficit, std::abs(g));
    if (!T.degenerate && pair.e > 0.0 && !bank.entries.empty()) {
      std::mt19937_64 rng(config.seed);
      NodalField w(nk, mesh.n_vertices());
      double min_gap = std::numeric_limits<double>::infinity();
      for (int d = 0; d < config.duality_draws; ++d) {
        for (int k = 0; k < nk; ++k) {
          const double c0 = unit_sym(rng);
          const double cx = unit_sym(rng);
          const double cy = unit_sym(rng);
          const double cxx = unit_sym(rng);
          const double cxy = unit_sym(rng);
          const double cyy = unit_sym(rng);
          const double cb = unit_sym(rng);
          const ScalarBump& shape = bank.entries[rng() % bank.entries.size()];
          for (std::size_t v = 0; v < mesh.n_vertices(); ++v) {
            const Vec2 x = mesh.vertices[v];
            w.at(k, v) = c0 + cx * x.x + cy * x.y + cxx * x.x * x.x + cxy * x.x * x.y +
                         cyy * x.y * x.y + cb * shape.value(x);
          }
        }
        CellMatField Dw = cell_gradient(mesh, w);
        const double E = eval_E_inf(mesh, Dw);
        if (E > 0.0) {
          const double sc = pair.e / E;
          for (double& val : w.v) val *= sc;
          for (double& val : Dw.m) val *= sc;
        }
        const std::vector<double> gaps =
            gaps_from_moments(mesh, T, barycentre_values(mesh, w), Dw, pair.e, moments);
        for (double g : gaps) min_gap = std::min(min_gap, g);
        ++rep.duality_draws_run;
      }
      rep.duality_min_gap = rep.duality_draws_run > 0 ? min_gap : 0.0;
    }
  }

  rep.decay = boundary_decay(mesh, T, config.decay_radii);
  rep.e_inf_prime = trace.e_inf_prime;
  rep.decay_asserted = config.assert_decay;

  rep.rigidity = rigidity_probe(mesh, u, T, bank, config.rigidity_t);

  {
    const double kr = std::min(0.45 * dc, std::max(0.35 * dc, 12.0 * mesh.target_h));
    if (kr >= 10.0 * mesh.target_h && kr < dc && T.joint_mass > 0.0 &&
        config.mass_competitors > 0) {
      std::vector<char> in_K(nc, 0);
      double max_v = 0.0;
      for (std::size_t c = 0; c < nc; ++c) {
        const Vec2 d = mesh.barycentre(c) - centre;
        if (d.x * d.x + d.y * d.y <= kr * kr) {
          in_K[c] = 1;
          max_v = std::max(max_v, T.mass[c]);
        }
      }
      const double half = 0.8 * kr / std::numbers::sqrt2;
      const TestFieldBank streams = TestFieldBank::grid_on_box(
          {centre.x - half, centre.y - half}, {centre.x + half, centre.y + half}, 2,
          {0.0, 0.0}, {0.0, 0.0});
      std::vector<NodalField> stream_interp;
      stream_interp.reserve(streams.entries.size());
      for (const ScalarBump& b : streams.entries)
        stream_interp.push_back(interpolate_bump(mesh, b));
      if (max_v > 0.0 && !streams.entries.empty()) {
        std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ull);
        double margin_min = std::numeric_limits<double>::infinity();
        MassComparison worst;
        for (int d = 0; d < config.mass_competitors; ++d) {
          NodalField psi(nk, mesh.n_vertices());
          for (int k = 0; k < nk; ++k)
            for (std::size_t bi = 0; bi < stream_interp.size(); ++bi) {
              const double coeff = unit_sym(rng);
              for (std::size_t v = 0; v < mesh.n_vertices(); ++v)
                psi.at(k, v) += coeff * stream_interp[bi].at(0, v);
            }
          // scale the stream so the added cell vectors are about half the
          // strongest current cell inside K
          const CellMatField Dpsi = cell_gradient(mesh, psi);
          double mp = 0.0;
          for (std::size_t c = 0; c < nc; ++c)
            mp = std::max(mp, mesh.cell_areas[c] * std::sqrt(Dpsi.frob2(c)));
          if (mp > 0.0) {
            const double sc = 0.5 * max_v / mp;
            for (double& val : psi.v) val *= sc;
          }
          const CurrentTuple S = competitor_from_stream(mesh, T, psi);
          const MassComparison cmp = local_mass_comparison(mesh, T, in_K, S, bank, 1e-9);
          const double margin = cmp.mass_S - cmp.mass_T;
          if (margin < margin_min) {
            margin_min = margin;
            worst = cmp;
          }
          ++rep.mass_competitors_run;
        }
        rep.mass_comparison = worst;
        rep.mass_margin_min = margin_min;
      }
    }
  }

  {
    std::vector<double> radii;
    for (double rc : config.mollifier_radii_cells) radii.push_back(rc * mesh.target_h);
    rep.mollify_radii = radii;
    rep.mollify_trace = mollified_distance_trace(mesh, pair.F, pair.mu, radii,
                                                 MollifierSpec::Mode::BoundaryAdapted);
    for (double r : radii)
      if (r < 2.0 * mesh.target_h) rep.mollify_under_resolved = true;
    rep.mollifier_commutator_norm = mollifier_commutator(mesh, u, 4.0 * mesh.target_h);
  }

  rep.boundary_action_data = boundary_pairing(mesh, T, bc.values);
  return rep;
}

}  // namespace limcur
