// Mesh construction: counts, orientation, exact hat gradients, boundary
// structure, distance queries, neighbourhood covers, and the CSV export.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <set>

#include "limcur/mesh.hpp"

using namespace limcur;

namespace {

double cross2(const Vec2& a, const Vec2& b) { return a.x * b.y - a.y * b.x; }

}  // namespace

TEST_CASE("unit square at h = 0.5: counts, areas, orientation") {
  TriMesh mesh = build_mesh(DomainSpec::rectangle({0.0, 0.0}, {1.0, 1.0}, 0.5));
  CHECK(mesh.n_vertices() == 9);
  CHECK(mesh.n_cells() == 8);
  double total = 0.0;
  for (std::size_t c = 0; c < mesh.n_cells(); ++c) {
    CHECK(mesh.cell_areas[c] > 0.0);
    const Vec2 a = mesh.vertices[mesh.tris[c][0]];
    const Vec2 b = mesh.vertices[mesh.tris[c][1]];
    const Vec2 d = mesh.vertices[mesh.tris[c][2]];
    CHECK(cross2(b - a, d - a) > 0.0);  // positive orientation
    total += mesh.cell_areas[c];
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(mesh.area == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(mesh.h_max <= 0.5 * std::numbers::sqrt2 * 1.0000001);
}

TEST_CASE("hat gradients reproduce affine fields exactly") {
  TriMesh mesh = build_mesh(DomainSpec::rectangle({0.0, 0.0}, {2.0, 1.0}, 0.3));
  const double ax = 0.75, ay = -1.25, a0 = 0.4;
  for (std::size_t c = 0; c < mesh.n_cells(); ++c) {
    Vec2 g{0.0, 0.0};
    Vec2 gsum{0.0, 0.0};
    for (int i = 0; i < 3; ++i) {
      const Vec2 v = mesh.vertices[mesh.tris[c][static_cast<std::size_t>(i)]];
      const double val = a0 + ax * v.x + ay * v.y;
      g = g + val * mesh.hat_grads[c][static_cast<std::size_t>(i)];
      gsum = gsum + mesh.hat_grads[c][static_cast<std::size_t>(i)];
    }
    CHECK(std::abs(g.x - ax) <= 1e-12);
    CHECK(std::abs(g.y - ay) <= 1e-12);
    CHECK(std::abs(gsum.x) <= 1e-12);
    CHECK(std::abs(gsum.y) <= 1e-12);
  }
}

TEST_CASE("cell_gradient matches the hat expansion") {
  TriMesh mesh = build_mesh(DomainSpec::rectangle({0.0, 0.0}, {1.0, 1.0}, 0.25));
  NodalField u(2, mesh.n_vertices());
  for (std::size_t i = 0; i < mesh.n_vertices(); ++i) {
    u.at(0, i) = 3.0 * mesh.vertices[i].x - mesh.vertices[i].y;
    u.at(1, i) = 0.5 * mesh.vertices[i].y;
  }
  const CellMatField Du = cell_gradient(mesh, u);
  for (std::size_t c = 0; c < mesh.n_cells(); ++c) {
    CHECK(Du.at(c, 0, 0) == doctest::Approx(3.0).epsilon(1e-13));
    CHECK(Du.at(c, 0, 1) == doctest::Approx(-1.0).epsilon(1e-13));
    CHECK(Du.at(c, 1, 0) == doctest::Approx(0.0));
    CHECK(Du.at(c, 1, 1) == doctest::Approx(0.5).epsilon(1e-13));
  }
}

TEST_CASE("boundary edges: outward normals, one cycle, full perimeter") {
  TriMesh mesh = build_mesh(DomainSpec::rectangle({0.0, 0.0}, {1.0, 1.0}, 0.2));
  double per = 0.0;
  for (const BoundaryEdge& be : mesh.boundary_edges) {
    per += be.len;
    const Vec2 mid = 0.5 * (mesh.vertices[be.a] + mesh.vertices[be.b]);
    const Vec2 inward = mesh.barycentre(be.cell) - mid;
    CHECK(be.normal.x * inward.x + be.normal.y * inward.y < 0.0);
    CHECK(std::abs(be.normal.x * be.normal.x + be.normal.y * be.normal.y - 1.0) <= 1e-12);
    // Counterclockwise traversal keeps the interior on the left.
    const Vec2 t = mesh.vertices[be.b] - mesh.vertices[be.a];
    CHECK(std::abs(cross2(t, be.normal) + be.len) <= 1e-12 * be.len);
  }
  CHECK(per == doctest::Approx(4.0).epsilon(1e-13));
  REQUIRE(mesh.boundary_cycles.size() == 1);
  CHECK(mesh.boundary_cycles[0].size() == mesh.boundary_edges.size());
  // The cycle chains b -> a.
  const auto& cyc = mesh.boundary_cycles[0];
  for (std::size_t i = 0; i < cyc.size(); ++i) {
    const BoundaryEdge& cur = mesh.boundary_edges[cyc[i]];
    const BoundaryEdge& nxt = mesh.boundary_edges[cyc[(i + 1) % cyc.size()]];
    CHECK(cur.b == nxt.a);
  }
}

TEST_CASE("disk mesh: boundary vertices on the circle, area near pi r^2") {
  const Vec2 centre{0.3, -0.2};
  const double r = 0.8;
  TriMesh mesh = build_mesh(DomainSpec::disk(centre, r, 0.05));
  for (std::size_t v : mesh.boundary_vertices) {
    const Vec2 d = mesh.vertices[v] - centre;
    CHECK(std::abs(std::sqrt(d.x * d.x + d.y * d.y) - r) <= 1e-12);
  }
  const double exact = std::numbers::pi * r * r;
  CHECK(mesh.area < exact);  // inscribed polygon
  CHECK(mesh.area > exact * (1.0 - 2e-3));
}

TEST_CASE("corner-tangent disk carries an exact vertex at the far point") {
  const double r = std::numbers::sqrt2 / (std::numbers::sqrt2 + 1.0);
  const double c = 1.0 - r / std::numbers::sqrt2;
  TriMesh mesh = build_mesh(DomainSpec::disk({c, c}, r, 0.04));
  double best = 1e9;
  for (std::size_t v : mesh.boundary_vertices) {
    const Vec2 d = mesh.vertices[v] - Vec2{1.0, 1.0};
    best = std::min(best, std::sqrt(d.x * d.x + d.y * d.y));
  }
  CHECK(best <= 1e-12);
}

TEST_CASE("dist_to_boundary is exact on the rectangle") {
  TriMesh mesh = build_mesh(DomainSpec::rectangle({0.0, 0.0}, {1.0, 1.0}, 0.25));
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const double x = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    const double y = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    const double expect = std::min({x, 1.0 - x, y, 1.0 - y});
    CHECK(std::abs(mesh.dist_to_boundary({x, y}) - expect) <= 1e-12);
  }
  const std::vector<double> d = mesh.barycentre_boundary_distances();
  REQUIRE(d.size() == mesh.n_cells());
  for (std::size_t cix = 0; cix < mesh.n_cells(); ++cix) {
    const Vec2 b = mesh.barycentre(cix);
    CHECK(std::abs(d[cix] - std::min({b.x, 1.0 - b.x, b.y, 1.0 - b.y})) <= 1e-12);
  }
}

TEST_CASE("balls_and_shells: nesting, ascending ids, boundary flag") {
  TriMesh mesh = build_mesh(DomainSpec::rectangle({0.0, 0.0}, {1.0, 1.0}, 0.1));
  const Vec2 x0{0.5, 0.5};
  BallCover cover = balls_and_shells(mesh, x0, {0.1, 0.2, 0.3, 0.7});
  REQUIRE(cover.cells.size() == 4);
  for (std::size_t i = 0; i < cover.cells.size(); ++i) {
    CHECK(std::is_sorted(cover.cells[i].begin(), cover.cells[i].end()));
    if (i > 0) {
      // Nested: every cell of the smaller ball appears in the larger one.
      CHECK(std::includes(cover.cells[i].begin(), cover.cells[i].end(),
                          cover.cells[i - 1].begin(), cover.cells[i - 1].end()));
    }
    // Membership matches the barycentre distance rule.
    std::set<std::size_t> got(cover.cells[i].begin(), cover.cells[i].end());
    for (std::size_t cix = 0; cix < mesh.n_cells(); ++cix) {
      const Vec2 d = mesh.barycentre(cix) - x0;
      const bool inside = std::sqrt(d.x * d.x + d.y * d.y) <= cover.radii[i];
      CHECK(got.count(cix) == (inside ? 1u : 0u));
    }
  }
  CHECK(cover.exceeds_boundary_dist[0] == 0);
  CHECK(cover.exceeds_boundary_dist[3] == 1);  // 0.7 > dist 0.5
}

TEST_CASE("PointGrid finds every neighbour within the pitch") {
  std::mt19937_64 rng(11);
  std::vector<Vec2> pts;
  for (int i = 0; i < 200; ++i) {
    pts.push_back({static_cast<double>(rng() >> 11) * 0x1.0p-53,
                   static_cast<double>(rng() >> 11) * 0x1.0p-53});
  }
  const double pitch = 0.15;
  PointGrid grid(pts, pitch);
  for (int trial = 0; trial < 20; ++trial) {
    const Vec2 q{static_cast<double>(rng() >> 11) * 0x1.0p-53,
                 static_cast<double>(rng() >> 11) * 0x1.0p-53};
    std::set<std::uint32_t> seen;
    grid.for_neighbours(q, [&](std::uint32_t id) { seen.insert(id); });
    for (std::uint32_t i = 0; i < pts.size(); ++i) {
      const Vec2 d = pts[i] - q;
      if (std::sqrt(d.x * d.x + d.y * d.y) <= pitch) CHECK(seen.count(i) == 1);
    }
  }
}

TEST_CASE("polygon mesh accepts a convex quad and rejects bad input") {
  TriMesh mesh = build_mesh(
      DomainSpec::simple_polygon({{0.0, 0.0}, {1.0, 0.0}, {1.2, 0.8}, {0.1, 1.0}}, 0.1));
  CHECK(mesh.n_cells() > 50);
  CHECK(mesh.area == doctest::Approx(0.96).epsilon(1e-12));
  CHECK_THROWS_AS(build_mesh(DomainSpec::simple_polygon({{0.0, 0.0}, {1.0, 0.0}}, 0.1)),
                  std::invalid_argument);
  DomainSpec bad = DomainSpec::rectangle({0.0, 0.0}, {1.0, 1.0}, 0.1);
  bad.h = -1.0;
  CHECK_THROWS_AS(build_mesh(bad), std::invalid_argument);
}

TEST_CASE("export_mesh_csv writes both tables") {
  TriMesh mesh = build_mesh(DomainSpec::rectangle({0.0, 0.0}, {1.0, 1.0}, 0.5));
  const char* path = "mesh_export_test.csv";
  export_mesh_csv(mesh, path);
  std::FILE* f = std::fopen(path, "r");
  REQUIRE(f != nullptr);
  char line[256];
  std::size_t rows = 0;
  while (std::fgets(line, sizeof line, f)) ++rows;
  std::fclose(f);
  std::remove(path);
  CHECK(rows == 2 + mesh.n_vertices() + 2 + mesh.n_cells());
}
