// Small geometric and field containers shared across the library:
// 2-D points, multi-component nodal fields, and per-cell matrix fields.
#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace limcur {

struct Vec2 {
  double x = 0.0, y = 0.0;
  Vec2() = default;
  Vec2(double x_, double y_) : x(x_), y(y_) {}
  Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  double dot(const Vec2& o) const { return x * o.x + y * o.y; }
  double norm() const { return std::hypot(x, y); }
  // 90-degree counterclockwise rotation.
  Vec2 perp() const { return {-y, x}; }
};

inline Vec2 operator*(double s, const Vec2& v) { return v * s; }
inline double cross(const Vec2& a, const Vec2& b) { return a.x * b.y - a.y * b.x; }

// Values of an N-component piecewise-linear function at mesh vertices.
// Component-major storage: value(k, i) = v[k * n_vertices + i].
struct NodalField {
  int n_comp = 0;
  std::size_t n_vertices = 0;
  std::vector<double> v;

  NodalField() = default;
  NodalField(int nc, std::size_t nv) : n_comp(nc), n_vertices(nv), v(nc * nv, 0.0) {}

  double& at(int k, std::size_t i) { return v[static_cast<std::size_t>(k) * n_vertices + i]; }
  double at(int k, std::size_t i) const { return v[static_cast<std::size_t>(k) * n_vertices + i]; }

  void check_shape(int nc, std::size_t nv, const std::string& where) const {
    if (n_comp != nc || n_vertices != nv)
      throw std::invalid_argument(where + ": field shape (" + std::to_string(n_comp) + "," +
                                  std::to_string(n_vertices) + ") does not match (" +
                                  std::to_string(nc) + "," + std::to_string(nv) + ")");
  }
};

// One constant N x 2 matrix per triangle, row-major per cell:
// entry(c, k, j) = m[(c * n_comp + k) * 2 + j].
struct CellMatField {
  int n_comp = 0;
  std::size_t n_cells = 0;
  std::vector<double> m;

  CellMatField() = default;
  CellMatField(int nc, std::size_t ncells) : n_comp(nc), n_cells(ncells), m(nc * ncells * 2, 0.0) {}

  double& at(std::size_t c, int k, int j) { return m[(c * n_comp + k) * 2 + j]; }
  double at(std::size_t c, int k, int j) const { return m[(c * n_comp + k) * 2 + j]; }

  // Squared Frobenius norm of the cell's matrix.
  double frob2(std::size_t c) const {
    double s = 0.0;
    for (int k = 0; k < n_comp; ++k)
      for (int j = 0; j < 2; ++j) {
        double e = at(c, k, j);
        s += e * e;
      }
    return s;
  }
};

// Scalar value per cell.
struct CellField {
  std::vector<double> v;
  CellField() = default;
  explicit CellField(std::size_t n, double fill = 0.0) : v(n, fill) {}
  double& operator[](std::size_t c) { return v[c]; }
  double operator[](std::size_t c) const { return v[c]; }
  std::size_t size() const { return v.size(); }
};

}  // namespace limcur
