// Planar conforming P1 triangulations of the supported domains (rectangles,
// disks, simple polygons), with exact per-cell hat gradients, oriented
// boundary data, and the neighbourhood queries used by the diagnostics.
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "limcur/fields.hpp"

namespace limcur {

struct DomainSpec {
  enum class Shape { Rectangle, Disk, Polygon };
  Shape shape = Shape::Rectangle;
  Vec2 rect_lo{0.0, 0.0}, rect_hi{1.0, 1.0};
  Vec2 centre{0.0, 0.0};
  double radius = 1.0;
  std::vector<Vec2> polygon;
  double h = 0.1;  // target mesh pitch

  static DomainSpec rectangle(Vec2 lo, Vec2 hi, double h);
  static DomainSpec disk(Vec2 centre, double radius, double h);
  static DomainSpec simple_polygon(std::vector<Vec2> pts, double h);
};

// One oriented boundary edge: a -> b traverses the boundary counterclockwise
// (interior on the left), `cell` is the unique owning triangle.
struct BoundaryEdge {
  std::size_t a = 0, b = 0;
  std::size_t cell = 0;
  Vec2 normal;  // outward unit normal
  double len = 0.0;
};

struct TriMesh {
  std::vector<Vec2> vertices;
  std::vector<std::array<std::size_t, 3>> tris;  // positively oriented
  std::vector<double> cell_areas;
  // Gradient of the hat function of local vertex i on cell c.
  std::vector<std::array<Vec2, 3>> hat_grads;
  std::vector<BoundaryEdge> boundary_edges;
  // boundary_edges indices grouped into closed cycles, in traversal order.
  std::vector<std::vector<std::size_t>> boundary_cycles;
  std::vector<char> is_boundary_vertex;
  std::vector<std::size_t> boundary_vertices;  // ascending vertex ids
  double h_max = 0.0;     // max triangle diameter (longest edge)
  double target_h = 0.0;  // requested pitch
  double area = 0.0;      // total polygonal area

  // Vertex -> incident (cell, local index) pairs in ascending cell order,
  // CSR layout; fixed traversal order keeps assembly deterministic.
  std::vector<std::uint32_t> vc_offset;
  std::vector<std::pair<std::uint32_t, std::uint8_t>> vc_items;

  std::size_t n_vertices() const { return vertices.size(); }
  std::size_t n_cells() const { return tris.size(); }
  Vec2 barycentre(std::size_t c) const {
    const auto& t = tris[c];
    return (vertices[t[0]] + vertices[t[1]] + vertices[t[2]]) * (1.0 / 3.0);
  }
  // Longest edge of cell c.
  double cell_diameter(std::size_t c) const;
  // Minimum distance from x to the polygonal boundary.
  double dist_to_boundary(const Vec2& x) const;
  // dist_to_boundary at every cell barycentre.
  std::vector<double> barycentre_boundary_distances() const;
};

// Uniform binning of points at a given pitch; neighbours within one pitch of
// a query live in the surrounding 3 x 3 block of bins. Bin contents keep
// insertion order, so traversal order is deterministic.
struct PointGrid {
  double x0 = 0.0, y0 = 0.0, inv = 1.0;
  std::size_t nx = 1, ny = 1;
  std::vector<std::vector<std::uint32_t>> bins;

  PointGrid(const std::vector<Vec2>& pts, double pitch);

  std::size_t bin_x(double x) const {
    double t = (x - x0) * inv;
    return t <= 0.0 ? 0 : std::min(nx - 1, static_cast<std::size_t>(t));
  }
  std::size_t bin_y(double y) const {
    double t = (y - y0) * inv;
    return t <= 0.0 ? 0 : std::min(ny - 1, static_cast<std::size_t>(t));
  }
  template <typename Fn>
  void for_neighbours(const Vec2& p, Fn&& fn) const {
    std::size_t bx = bin_x(p.x), by = bin_y(p.y);
    for (std::size_t gy = by == 0 ? 0 : by - 1; gy <= std::min(ny - 1, by + 1); ++gy)
      for (std::size_t gx = bx == 0 ? 0 : bx - 1; gx <= std::min(nx - 1, bx + 1); ++gx)
        for (std::uint32_t j : bins[gy * nx + gx]) fn(j);
  }
};

// Throws std::invalid_argument on degenerate specs, naming the bad field.
TriMesh build_mesh(const DomainSpec& spec);

// Exact gradient of the P1 interpolant of u, one N x 2 matrix per cell.
CellMatField cell_gradient(const TriMesh& mesh, const NodalField& u);

struct BallCover {
  std::vector<double> radii;
  std::vector<std::vector<std::size_t>> cells;  // per radius, ascending ids
  std::vector<char> exceeds_boundary_dist;      // per radius
};

// Cells whose barycentre lies in B_r(x0), for each r in radii (which must be
// positive and strictly increasing). Radii beyond dist(x0, boundary) are
// flagged, not rejected.
BallCover balls_and_shells(const TriMesh& mesh, const Vec2& x0, const std::vector<double>& radii);

// Two-section CSV: vertex table then triangle table.
void export_mesh_csv(const TriMesh& mesh, const std::string& path);

}  // namespace limcur
