#include "limcur/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <stdexcept>

#include "limcur/reduce.hpp"

namespace limcur {

DomainSpec DomainSpec::rectangle(Vec2 lo, Vec2 hi, double h) {
  DomainSpec s;
  s.shape = Shape::Rectangle;
  s.rect_lo = lo;
  s.rect_hi = hi;
  s.h = h;
  return s;
}

DomainSpec DomainSpec::disk(Vec2 centre, double radius, double h) {
  DomainSpec s;
  s.shape = Shape::Disk;
  s.centre = centre;
  s.radius = radius;
  s.h = h;
  return s;
}

DomainSpec DomainSpec::simple_polygon(std::vector<Vec2> pts, double h) {
  DomainSpec s;
  s.shape = Shape::Polygon;
  s.polygon = std::move(pts);
  s.h = h;
  return s;
}

namespace {

double tri_area2(const Vec2& a, const Vec2& b, const Vec2& c) {
  return cross(b - a, c - a);
}

// Raw vertex/triangle soup before finalisation.
struct RawMesh {
  std::vector<Vec2> v;
  std::vector<std::array<std::size_t, 3>> t;
};

RawMesh structured_grid(std::size_t nx, std::size_t ny, const Vec2& lo, const Vec2& hi) {
  RawMesh m;
  m.v.resize((nx + 1) * (ny + 1));
  for (std::size_t iy = 0; iy <= ny; ++iy)
    for (std::size_t ix = 0; ix <= nx; ++ix) {
      double fx = static_cast<double>(ix) / static_cast<double>(nx);
      double fy = static_cast<double>(iy) / static_cast<double>(ny);
      m.v[iy * (nx + 1) + ix] = {lo.x + fx * (hi.x - lo.x), lo.y + fy * (hi.y - lo.y)};
    }
  m.t.reserve(2 * nx * ny);
  for (std::size_t iy = 0; iy < ny; ++iy)
    for (std::size_t ix = 0; ix < nx; ++ix) {
      std::size_t v00 = iy * (nx + 1) + ix;
      std::size_t v10 = v00 + 1;
      std::size_t v01 = v00 + (nx + 1);
      std::size_t v11 = v01 + 1;
      m.t.push_back({v00, v10, v11});
      m.t.push_back({v00, v11, v01});
    }
  return m;
}

// Maps the square [-1,1]^2 onto the disk of radius r: concentric squares go
// to concentric circles, corners land on the diagonal directions.
Vec2 square_to_disk(const Vec2& q, const Vec2& centre, double r) {
  double m = std::max(std::abs(q.x), std::abs(q.y));
  if (m == 0.0) return centre;
  double n2 = q.norm();
  return centre + (r * m / n2) * q;
}

// Simple ear-clipping triangulation of a CCW simple polygon.
std::vector<std::array<std::size_t, 3>> ear_clip(const std::vector<Vec2>& poly) {
  std::size_t n = poly.size();
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::vector<std::array<std::size_t, 3>> tris;
  auto inside = [&](const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& p) {
    return tri_area2(a, b, p) > 0 && tri_area2(b, c, p) > 0 && tri_area2(c, a, p) > 0;
  };
  std::size_t guard = 0;
  while (idx.size() > 3) {
    bool clipped = false;
    for (std::size_t i = 0; i < idx.size(); ++i) {
      std::size_t i0 = idx[(i + idx.size() - 1) % idx.size()];
      std::size_t i1 = idx[i];
      std::size_t i2 = idx[(i + 1) % idx.size()];
      if (tri_area2(poly[i0], poly[i1], poly[i2]) <= 0) continue;
      bool ear = true;
      for (std::size_t j : idx) {
        if (j == i0 || j == i1 || j == i2) continue;
        if (inside(poly[i0], poly[i1], poly[i2], poly[j])) {
          ear = false;
          break;
        }
      }
      if (!ear) continue;
      tris.push_back({i0, i1, i2});
      idx.erase(idx.begin() + static_cast<std::ptrdiff_t>(i));
      clipped = true;
      break;
    }
    if (!clipped && ++guard > n) throw std::invalid_argument("polygon: ear clipping failed (not a simple polygon?)");
  }
  tris.push_back({idx[0], idx[1], idx[2]});
  return tris;
}

// Uniform 4-way refinement until every edge is <= h.
void refine_to(RawMesh& m, double h) {
  for (int round = 0; round < 32; ++round) {
    double longest = 0.0;
    for (const auto& t : m.t)
      for (int e = 0; e < 3; ++e)
        longest = std::max(longest, (m.v[t[(e + 1) % 3]] - m.v[t[e]]).norm());
    if (longest <= h) return;
    std::map<std::pair<std::size_t, std::size_t>, std::size_t> midpoint;
    auto mid = [&](std::size_t a, std::size_t b) {
      auto key = std::minmax(a, b);
      auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      m.v.push_back((m.v[a] + m.v[b]) * 0.5);
      std::size_t id = m.v.size() - 1;
      midpoint.emplace(key, id);
      return id;
    };
    std::vector<std::array<std::size_t, 3>> fine;
    fine.reserve(4 * m.t.size());
    for (const auto& t : m.t) {
      std::size_t m01 = mid(t[0], t[1]), m12 = mid(t[1], t[2]), m20 = mid(t[2], t[0]);
      fine.push_back({t[0], m01, m20});
      fine.push_back({m01, t[1], m12});
      fine.push_back({m20, m12, t[2]});
      fine.push_back({m01, m12, m20});
    }
    m.t = std::move(fine);
  }
  throw std::invalid_argument("polygon: refinement did not reach target h");
}

bool segments_intersect(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
  auto sgn = [](double v) { return v > 0 ? 1 : (v < 0 ? -1 : 0); };
  int s1 = sgn(tri_area2(a, b, c)), s2 = sgn(tri_area2(a, b, d));
  int s3 = sgn(tri_area2(c, d, a)), s4 = sgn(tri_area2(c, d, b));
  return s1 != s2 && s3 != s4 && s1 != 0 && s2 != 0 && s3 != 0 && s4 != 0;
}

double point_segment_dist(const Vec2& p, const Vec2& a, const Vec2& b) {
  Vec2 d = b - a;
  double l2 = d.dot(d);
  double t = l2 > 0 ? std::clamp((p - a).dot(d) / l2, 0.0, 1.0) : 0.0;
  return (p - (a + t * d)).norm();
}

// Fills areas, gradients, boundary topology and checks the mesh invariants.
TriMesh finalise(RawMesh raw, double target_h) {
  TriMesh mesh;
  mesh.vertices = std::move(raw.v);
  mesh.tris = std::move(raw.t);
  mesh.target_h = target_h;

  std::size_t nc = mesh.tris.size(), nv = mesh.vertices.size();
  mesh.cell_areas.resize(nc);
  mesh.hat_grads.resize(nc);
  mesh.h_max = 0.0;
  double total = 0.0;
  for (std::size_t c = 0; c < nc; ++c) {
    const auto& t = mesh.tris[c];
    const Vec2 &p0 = mesh.vertices[t[0]], &p1 = mesh.vertices[t[1]], &p2 = mesh.vertices[t[2]];
    double a2 = tri_area2(p0, p1, p2);
    if (a2 <= 0.0) throw std::invalid_argument("mesh: non-positive triangle orientation/area");
    mesh.cell_areas[c] = 0.5 * a2;
    total += 0.5 * a2;
    mesh.hat_grads[c][0] = (p2 - p1).perp() * (1.0 / a2);
    mesh.hat_grads[c][1] = (p0 - p2).perp() * (1.0 / a2);
    mesh.hat_grads[c][2] = (p1 - p0).perp() * (1.0 / a2);
    for (int e = 0; e < 3; ++e)
      mesh.h_max = std::max(mesh.h_max, (mesh.vertices[t[(e + 1) % 3]] - mesh.vertices[t[e]]).norm());
  }
  mesh.area = total;

  // Edge incidence via directed-edge map: in a consistently oriented mesh an
  // interior edge appears once per direction, a boundary edge once total.
  std::map<std::pair<std::size_t, std::size_t>, std::pair<std::size_t, int>> directed;
  for (std::size_t c = 0; c < nc; ++c) {
    const auto& t = mesh.tris[c];
    for (int e = 0; e < 3; ++e) {
      auto key = std::make_pair(t[e], t[(e + 1) % 3]);
      if (!directed.emplace(key, std::make_pair(c, e)).second)
        throw std::invalid_argument("mesh: duplicated directed edge (inconsistent orientation)");
    }
  }
  std::map<std::size_t, std::size_t> next_boundary_vertex;  // a -> index into boundary_edges
  for (const auto& [key, owner] : directed) {
    auto rev = std::make_pair(key.second, key.first);
    if (directed.count(rev)) continue;  // interior edge, seen from both sides
    BoundaryEdge be;
    be.a = key.first;
    be.b = key.second;
    be.cell = owner.first;
    Vec2 d = mesh.vertices[be.b] - mesh.vertices[be.a];
    be.len = d.norm();
    if (be.len <= 0.0) throw std::invalid_argument("mesh: zero-length boundary edge");
    // Interior lies left of a->b, so the outward normal is d rotated -90 deg.
    be.normal = Vec2{d.y, -d.x} * (1.0 / be.len);
    mesh.boundary_edges.push_back(be);
  }
  for (std::size_t i = 0; i < mesh.boundary_edges.size(); ++i) {
    if (!next_boundary_vertex.emplace(mesh.boundary_edges[i].a, i).second)
      throw std::invalid_argument("mesh: boundary is not a disjoint union of cycles");
  }

  // Walk the cycles in deterministic order (lowest unvisited start vertex).
  std::vector<char> seen(mesh.boundary_edges.size(), 0);
  for (;;) {
    std::size_t start = mesh.boundary_edges.size();
    for (std::size_t i = 0; i < mesh.boundary_edges.size(); ++i)
      if (!seen[i] && (start == mesh.boundary_edges.size() ||
                       mesh.boundary_edges[i].a < mesh.boundary_edges[start].a))
        start = i;
    if (start == mesh.boundary_edges.size()) break;
    std::vector<std::size_t> cycle;
    std::size_t cur = start;
    do {
      seen[cur] = 1;
      cycle.push_back(cur);
      auto it = next_boundary_vertex.find(mesh.boundary_edges[cur].b);
      if (it == next_boundary_vertex.end())
        throw std::invalid_argument("mesh: open boundary chain");
      cur = it->second;
    } while (cur != start);
    mesh.boundary_cycles.push_back(std::move(cycle));
  }

  mesh.is_boundary_vertex.assign(nv, 0);
  for (const auto& be : mesh.boundary_edges) {
    mesh.is_boundary_vertex[be.a] = 1;
    mesh.is_boundary_vertex[be.b] = 1;
  }
  for (std::size_t i = 0; i < nv; ++i)
    if (mesh.is_boundary_vertex[i]) mesh.boundary_vertices.push_back(i);

  // Vertex -> (cell, local) incidence in ascending cell order.
  std::vector<std::uint32_t> count(nv, 0);
  for (const auto& t : mesh.tris)
    for (int i = 0; i < 3; ++i) ++count[t[i]];
  mesh.vc_offset.assign(nv + 1, 0);
  for (std::size_t i = 0; i < nv; ++i) mesh.vc_offset[i + 1] = mesh.vc_offset[i] + count[i];
  mesh.vc_items.resize(mesh.vc_offset[nv]);
  std::vector<std::uint32_t> fill(nv, 0);
  for (std::size_t c = 0; c < nc; ++c)
    for (int i = 0; i < 3; ++i) {
      std::size_t v = mesh.tris[c][i];
      mesh.vc_items[mesh.vc_offset[v] + fill[v]++] = {static_cast<std::uint32_t>(c),
                                                      static_cast<std::uint8_t>(i)};
    }
  return mesh;
}

}  // namespace

double TriMesh::cell_diameter(std::size_t c) const {
  const auto& t = tris[c];
  double d = 0.0;
  for (int e = 0; e < 3; ++e)
    d = std::max(d, (vertices[t[(e + 1) % 3]] - vertices[t[e]]).norm());
  return d;
}

double TriMesh::dist_to_boundary(const Vec2& x) const {
  double d = std::numeric_limits<double>::infinity();
  for (const auto& be : boundary_edges)
    d = std::min(d, point_segment_dist(x, vertices[be.a], vertices[be.b]));
  return d;
}

std::vector<double> TriMesh::barycentre_boundary_distances() const {
  std::vector<double> d(n_cells());
  parallel_for(n_cells(), [&](std::size_t c) { d[c] = dist_to_boundary(barycentre(c)); });
  return d;
}

TriMesh build_mesh(const DomainSpec& spec) {
  if (!(spec.h > 0.0)) throw std::invalid_argument("DomainSpec.h: must be positive");
  switch (spec.shape) {
    case DomainSpec::Shape::Rectangle: {
      double w = spec.rect_hi.x - spec.rect_lo.x;
      double hgt = spec.rect_hi.y - spec.rect_lo.y;
      if (!(w > 0.0) || !(hgt > 0.0))
        throw std::invalid_argument("DomainSpec.rect: extents must be positive");
      std::size_t nx = static_cast<std::size_t>(std::ceil(w / spec.h - 1e-12));
      std::size_t ny = static_cast<std::size_t>(std::ceil(hgt / spec.h - 1e-12));
      nx = std::max<std::size_t>(nx, 1);
      ny = std::max<std::size_t>(ny, 1);
      return finalise(structured_grid(nx, ny, spec.rect_lo, spec.rect_hi), spec.h);
    }
    case DomainSpec::Shape::Disk: {
      if (!(spec.radius > 0.0)) throw std::invalid_argument("DomainSpec.radius: must be positive");
      std::size_t n = std::max<std::size_t>(2, static_cast<std::size_t>(std::ceil(spec.radius / spec.h - 1e-12)));
      RawMesh grid = structured_grid(2 * n, 2 * n, {-1.0, -1.0}, {1.0, 1.0});
      for (auto& q : grid.v) q = square_to_disk(q, spec.centre, spec.radius);
      // One Jacobi-type Laplace smoothing pass on interior vertices.
      std::size_t side = 2 * n + 1;
      std::vector<Vec2> smoothed = grid.v;
      for (std::size_t iy = 1; iy + 1 < side; ++iy)
        for (std::size_t ix = 1; ix + 1 < side; ++ix) {
          std::size_t id = iy * side + ix;
          // Neighbours along grid edges and the split diagonal.
          const Vec2& l = grid.v[id - 1];
          const Vec2& r = grid.v[id + 1];
          const Vec2& dn = grid.v[id - side];
          const Vec2& up = grid.v[id + side];
          const Vec2& dg1 = grid.v[id + side + 1];
          const Vec2& dg2 = grid.v[id - side - 1];
          smoothed[id] = (l + r + dn + up + dg1 + dg2) * (1.0 / 6.0);
        }
      grid.v = std::move(smoothed);
      return finalise(std::move(grid), spec.h);
    }
    case DomainSpec::Shape::Polygon: {
      const auto& poly = spec.polygon;
      if (poly.size() < 3) throw std::invalid_argument("DomainSpec.polygon: needs >= 3 vertices");
      double a2 = 0.0;
      for (std::size_t i = 0; i < poly.size(); ++i)
        a2 += cross(poly[i], poly[(i + 1) % poly.size()]);
      if (std::abs(a2) < 1e-300)
        throw std::invalid_argument("DomainSpec.polygon: zero signed area");
      std::vector<Vec2> ccw = poly;
      if (a2 < 0) std::reverse(ccw.begin(), ccw.end());
      for (std::size_t i = 0; i < ccw.size(); ++i)
        for (std::size_t j = i + 1; j < ccw.size(); ++j) {
          bool adjacent = (j == i + 1) || (i == 0 && j + 1 == ccw.size());
          if (adjacent) continue;
          if (segments_intersect(ccw[i], ccw[(i + 1) % ccw.size()], ccw[j],
                                 ccw[(j + 1) % ccw.size()]))
            throw std::invalid_argument("DomainSpec.polygon: self-intersecting");
        }
      RawMesh m;
      m.v = ccw;
      m.t = ear_clip(ccw);
      refine_to(m, spec.h);
      return finalise(std::move(m), spec.h);
    }
  }
  throw std::invalid_argument("DomainSpec.shape: unknown");
}

CellMatField cell_gradient(const TriMesh& mesh, const NodalField& u) {
  u.check_shape(u.n_comp, mesh.n_vertices(), "cell_gradient");
  if (u.n_comp < 1) throw std::invalid_argument("cell_gradient: field needs >= 1 component");
  CellMatField g(u.n_comp, mesh.n_cells());
  parallel_for(mesh.n_cells(), [&](std::size_t c) {
    const auto& t = mesh.tris[c];
    for (int k = 0; k < u.n_comp; ++k) {
      double gx = 0.0, gy = 0.0;
      for (int i = 0; i < 3; ++i) {
        double uv = u.at(k, t[i]);
        gx += uv * mesh.hat_grads[c][i].x;
        gy += uv * mesh.hat_grads[c][i].y;
      }
      g.at(c, k, 0) = gx;
      g.at(c, k, 1) = gy;
    }
  });
  return g;
}

BallCover balls_and_shells(const TriMesh& mesh, const Vec2& x0, const std::vector<double>& radii) {
  for (std::size_t i = 0; i < radii.size(); ++i) {
    if (!(radii[i] > 0.0)) throw std::invalid_argument("balls_and_shells: radii must be positive");
    if (i > 0 && !(radii[i] > radii[i - 1]))
      throw std::invalid_argument("balls_and_shells: radii must be strictly increasing");
  }
  BallCover cover;
  cover.radii = radii;
  cover.cells.resize(radii.size());
  cover.exceeds_boundary_dist.resize(radii.size(), 0);
  double dist = mesh.dist_to_boundary(x0);
  for (std::size_t r = 0; r < radii.size(); ++r)
    cover.exceeds_boundary_dist[r] = radii[r] > dist ? 1 : 0;
  for (std::size_t c = 0; c < mesh.n_cells(); ++c) {
    double d = (mesh.barycentre(c) - x0).norm();
    for (std::size_t r = 0; r < radii.size(); ++r)
      if (d < radii[r]) cover.cells[r].push_back(c);
  }
  return cover;
}

PointGrid::PointGrid(const std::vector<Vec2>& pts, double pitch) {
  if (pts.empty() || !(pitch > 0.0)) throw std::invalid_argument("PointGrid: bad input");
  double xmin = pts[0].x, xmax = pts[0].x, ymin = pts[0].y, ymax = pts[0].y;
  for (const Vec2& p : pts) {
    xmin = std::min(xmin, p.x);
    xmax = std::max(xmax, p.x);
    ymin = std::min(ymin, p.y);
    ymax = std::max(ymax, p.y);
  }
  x0 = xmin;
  y0 = ymin;
  inv = 1.0 / pitch;
  nx = static_cast<std::size_t>((xmax - xmin) * inv) + 1;
  ny = static_cast<std::size_t>((ymax - ymin) * inv) + 1;
  bins.resize(nx * ny);
  for (std::uint32_t i = 0; i < pts.size(); ++i)
    bins[bin_y(pts[i].y) * nx + bin_x(pts[i].x)].push_back(i);
}

void export_mesh_csv(const TriMesh& mesh, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::runtime_error("export_mesh_csv: cannot open " + path);
  std::fprintf(f, "# vertices\nid,x,y,boundary\n");
  for (std::size_t i = 0; i < mesh.n_vertices(); ++i)
    std::fprintf(f, "%zu,%.17g,%.17g,%d\n", i, mesh.vertices[i].x, mesh.vertices[i].y,
                 mesh.is_boundary_vertex[i] ? 1 : 0);
  std::fprintf(f, "# triangles\nid,v0,v1,v2,area\n");
  for (std::size_t c = 0; c < mesh.n_cells(); ++c)
    std::fprintf(f, "%zu,%zu,%zu,%zu,%.17g\n", c, mesh.tris[c][0], mesh.tris[c][1],
                 mesh.tris[c][2], mesh.cell_areas[c]);
  std::fclose(f);
}

}  // namespace limcur
