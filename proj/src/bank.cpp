#include "limcur/bank.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "limcur/quadrature.hpp"

namespace limcur {

namespace {

double profile(double t) {
  if (t <= -1.0 || t >= 1.0) return 0.0;
  double s = 1.0 - t * t;
  return s * s * s;
}

double profile_deriv(double t) {
  if (t <= -1.0 || t >= 1.0) return 0.0;
  double s = 1.0 - t * t;
  return -6.0 * t * s * s;
}

}  // namespace

double ScalarBump::value(const Vec2& x) const {
  return profile((x.x - centre.x) / hx) * profile((x.y - centre.y) / hy);
}

Vec2 ScalarBump::grad(const Vec2& x) const {
  double tx = (x.x - centre.x) / hx, ty = (x.y - centre.y) / hy;
  return {profile_deriv(tx) / hx * profile(ty), profile(tx) * profile_deriv(ty) / hy};
}

bool ScalarBump::inside(const Vec2& x) const {
  return std::abs(x.x - centre.x) < hx && std::abs(x.y - centre.y) < hy;
}

namespace {

double snap_down(double v, double pitch) {
  if (pitch <= 0.0) return v;
  double s = std::floor(v / pitch + 1e-9) * pitch;
  return s > 0.0 ? s : pitch;
}

double snap_nearest(double v, double origin, double pitch) {
  if (pitch <= 0.0) return v;
  return origin + std::round((v - origin) / pitch) * pitch;
}

}  // namespace

TestFieldBank TestFieldBank::grid_on_box(Vec2 lo, Vec2 hi, int per_axis, Vec2 margin, Vec2 pitch) {
  if (per_axis < 1) throw std::invalid_argument("grid_on_box: per_axis must be >= 1");
  double ux0 = lo.x + margin.x, ux1 = hi.x - margin.x;
  double uy0 = lo.y + margin.y, uy1 = hi.y - margin.y;
  if (!(ux1 > ux0 && uy1 > uy0)) throw std::invalid_argument("grid_on_box: margin swallows box");
  double cw = (ux1 - ux0) / per_axis, ch = (uy1 - uy0) / per_axis;
  TestFieldBank bank;
  double hx = snap_down(0.5 * cw, pitch.x), hy = snap_down(0.5 * ch, pitch.y);
  for (int iy = 0; iy < per_axis; ++iy)
    for (int ix = 0; ix < per_axis; ++ix) {
      ScalarBump b;
      b.centre = {snap_nearest(ux0 + (ix + 0.5) * cw, lo.x, pitch.x),
                  snap_nearest(uy0 + (iy + 0.5) * ch, lo.y, pitch.y)};
      b.hx = hx;
      b.hy = hy;
      bank.entries.push_back(b);
    }
  return bank;
}

TestFieldBank TestFieldBank::grid_on_disk(Vec2 centre, double radius, int per_axis, double margin) {
  double half = (radius - margin) / std::sqrt(2.0);
  if (!(half > 0.0)) throw std::invalid_argument("grid_on_disk: margin swallows disk");
  return grid_on_box({centre.x - half, centre.y - half}, {centre.x + half, centre.y + half},
                     per_axis, {0.0, 0.0}, {0.0, 0.0});
}

namespace {

// Proper or touching intersection of segments pq and rs.
bool segments_intersect(const Vec2& p, const Vec2& q, const Vec2& r, const Vec2& s) {
  auto orient = [](const Vec2& a, const Vec2& b, const Vec2& c) {
    return cross(b - a, c - a);
  };
  double o1 = orient(p, q, r), o2 = orient(p, q, s);
  double o3 = orient(r, s, p), o4 = orient(r, s, q);
  if (((o1 > 0) != (o2 > 0)) && ((o3 > 0) != (o4 > 0)) && o1 != 0 && o2 != 0 && o3 != 0 && o4 != 0)
    return true;
  auto on_seg = [](const Vec2& a, const Vec2& b, const Vec2& c) {
    return cross(b - a, c - a) == 0.0 && std::min(a.x, b.x) <= c.x && c.x <= std::max(a.x, b.x) &&
           std::min(a.y, b.y) <= c.y && c.y <= std::max(a.y, b.y);
  };
  return on_seg(p, q, r) || on_seg(p, q, s) || on_seg(r, s, p) || on_seg(r, s, q);
}

bool point_in_mesh(const TriMesh& mesh, const Vec2& x) {
  for (std::size_t c = 0; c < mesh.n_cells(); ++c) {
    const auto& t = mesh.tris[c];
    const Vec2 &a = mesh.vertices[t[0]], &b = mesh.vertices[t[1]], &d = mesh.vertices[t[2]];
    double tol = -1e-12 * mesh.cell_areas[c];
    if (cross(b - a, x - a) >= tol && cross(d - b, x - b) >= tol && cross(a - d, x - d) >= tol)
      return true;
  }
  return false;
}

bool box_inside_mesh(const TriMesh& mesh, const ScalarBump& b) {
  Vec2 c[4] = {{b.centre.x - b.hx, b.centre.y - b.hy},
               {b.centre.x + b.hx, b.centre.y - b.hy},
               {b.centre.x + b.hx, b.centre.y + b.hy},
               {b.centre.x - b.hx, b.centre.y + b.hy}};
  if (!point_in_mesh(mesh, b.centre)) return false;
  for (int i = 0; i < 4; ++i)
    if (!point_in_mesh(mesh, c[i])) return false;
  for (const BoundaryEdge& e : mesh.boundary_edges)
    for (int i = 0; i < 4; ++i)
      if (segments_intersect(c[i], c[(i + 1) % 4], mesh.vertices[e.a], mesh.vertices[e.b]))
        return false;
  return true;
}

}  // namespace

TestFieldBank TestFieldBank::for_domain(const DomainSpec& spec, const TriMesh& mesh, int per_axis,
                                        double margin_cells) {
  switch (spec.shape) {
    case DomainSpec::Shape::Rectangle: {
      double w = spec.rect_hi.x - spec.rect_lo.x, h = spec.rect_hi.y - spec.rect_lo.y;
      std::size_t nx = static_cast<std::size_t>(std::ceil(w / spec.h - 1e-12));
      std::size_t ny = static_cast<std::size_t>(std::ceil(h / spec.h - 1e-12));
      Vec2 pitch{w / std::max<std::size_t>(1, nx), h / std::max<std::size_t>(1, ny)};
      Vec2 margin{std::max(1.0, margin_cells) * pitch.x, std::max(1.0, margin_cells) * pitch.y};
      return grid_on_box(spec.rect_lo, spec.rect_hi, per_axis, margin, pitch);
    }
    case DomainSpec::Shape::Disk:
      return grid_on_disk(spec.centre, spec.radius, per_axis, margin_cells * spec.h);
    case DomainSpec::Shape::Polygon: {
      Vec2 lo = spec.polygon[0], hi = spec.polygon[0];
      for (const Vec2& p : spec.polygon) {
        lo.x = std::min(lo.x, p.x);
        lo.y = std::min(lo.y, p.y);
        hi.x = std::max(hi.x, p.x);
        hi.y = std::max(hi.y, p.y);
      }
      double m = margin_cells * spec.h;
      TestFieldBank all = grid_on_box(lo, hi, per_axis, {m, m}, {0.0, 0.0});
      TestFieldBank kept;
      for (const ScalarBump& b : all.entries)
        if (box_inside_mesh(mesh, b)) kept.entries.push_back(b);
      return kept;
    }
  }
  throw std::logic_error("for_domain: unknown shape");
}

std::vector<double> cell_means(const TriMesh& mesh, const ScalarBump& bump) {
  std::vector<double> out(mesh.n_cells());
  for (std::size_t c = 0; c < mesh.n_cells(); ++c) {
    const auto& t = mesh.tris[c];
    double v = integrate_tri(mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]],
                             [&](const Vec2& x) { return bump.value(x); });
    out[c] = v / mesh.cell_areas[c];
  }
  return out;
}

NodalField interpolate_bump(const TriMesh& mesh, const ScalarBump& bump) {
  NodalField f(1, mesh.n_vertices());
  for (std::size_t v = 0; v < mesh.n_vertices(); ++v) f.at(0, v) = bump.value(mesh.vertices[v]);
  return f;
}

}  // namespace limcur
