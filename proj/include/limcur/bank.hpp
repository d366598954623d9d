// Deterministic banks of compactly supported test functions: tensor-product
// polynomial bumps with analytic values and gradients, used as multipliers
// and variation fields by the diagnostics.
#pragma once

#include <vector>

#include "limcur/fields.hpp"
#include "limcur/mesh.hpp"

namespace limcur {

// chi(x) = B((x1-cx)/hx) B((x2-cy)/hy) with the profile B(t) = (1 - t^2)^3 on
// [-1, 1], zero outside; nonnegative, C^2, polynomial of degree 6 per axis
// inside the support box.
struct ScalarBump {
  Vec2 centre;
  double hx = 1.0, hy = 1.0;

  double value(const Vec2& x) const;
  Vec2 grad(const Vec2& x) const;
  bool inside(const Vec2& x) const;
};

struct TestFieldBank {
  std::vector<ScalarBump> entries;

  // per_axis x per_axis bumps tiling [lo + margin, hi - margin] without
  // overlap. With positive pitch components, centres and half-widths are
  // snapped to multiples of the pitch so that on a structured mesh of that
  // pitch no cell straddles a support edge; margins of at least one pitch
  // keep the snapped supports inside the box.
  static TestFieldBank grid_on_box(Vec2 lo, Vec2 hi, int per_axis, Vec2 margin, Vec2 pitch);

  // Same grid on the axis-aligned square inscribed in the disk of radius
  // radius - margin; no snapping (mapped meshes have no common pitch).
  static TestFieldBank grid_on_disk(Vec2 centre, double radius, int per_axis, double margin);

  // Domain-aware bank: rectangle grids snap to the structured pitch, disks
  // use the inscribed square, polygons tile the bounding box and keep only
  // bumps whose support box lies inside the mesh. margin_cells is in units
  // of the mesh pitch.
  static TestFieldBank for_domain(const DomainSpec& spec, const TriMesh& mesh, int per_axis,
                                  double margin_cells);
};

// Exact cell means of a bump on every triangle (nonnegative, bounded by the
// bump's maximum on positive-weight quadrature).
std::vector<double> cell_means(const TriMesh& mesh, const ScalarBump& bump);

// P1 interpolant of the bump at mesh vertices (single component).
NodalField interpolate_bump(const TriMesh& mesh, const ScalarBump& bump);

}  // namespace limcur
