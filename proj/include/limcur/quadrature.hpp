// Exact-degree numerical integration over triangles: a Duffy-type map from a
// tensor Gauss-Legendre grid on the unit square. With 10 points per direction
// the rule is exact for integrands whose pullback is polynomial of degree
// <= 19 per axis, i.e. total degree <= 18 on the triangle.
#pragma once

#include <functional>

#include "limcur/fields.hpp"

namespace limcur {

inline constexpr int kGaussN = 10;

// Gauss-Legendre nodes/weights on [0,1].
inline constexpr double kGaussX[kGaussN] = {
    0.0130467357414141399610179, 0.0674683166555077446339516, 0.1602952158504877968828363,
    0.2833023029353764046003670, 0.4255628305091843945575870, 0.5744371694908156054424130,
    0.7166976970646235953996330, 0.8397047841495122031171637, 0.9325316833444922553660484,
    0.9869532642585858600389821};
inline constexpr double kGaussW[kGaussN] = {
    0.0333356721543440687967844, 0.0747256745752902965728881, 0.1095431812579910219977674,
    0.1346333596549981775456134, 0.1477621123573764350869465, 0.1477621123573764350869465,
    0.1346333596549981775456134, 0.1095431812579910219977674, 0.0747256745752902965728881,
    0.0333356721543440687967844};

// Integrates f over the triangle (v0, v1, v2). Orientation does not matter;
// the weight uses the absolute Jacobian.
template <class F>
double integrate_tri(const Vec2& v0, const Vec2& v1, const Vec2& v2, F&& f) {
  const Vec2 e1 = v1 - v0;
  const Vec2 e2 = v2 - v1;
  const double twoA = cross(v1 - v0, v2 - v0);
  double s = 0.0;
  for (int i = 0; i < kGaussN; ++i) {
    const double a = kGaussX[i];
    double row = 0.0;
    for (int j = 0; j < kGaussN; ++j) {
      const double b = kGaussX[j];
      const Vec2 x = v0 + a * e1 + (a * b) * e2;
      row += kGaussW[j] * f(x);
    }
    s += kGaussW[i] * a * row;
  }
  return s * (twoA < 0 ? -twoA : twoA);
}

// Same rule, accumulating n integrands at once: f(x, w, out) must add
// w * integrand_i(x) into out[i].
template <class F>
void integrate_tri_acc(const Vec2& v0, const Vec2& v1, const Vec2& v2, F&& f, double* out) {
  const Vec2 e1 = v1 - v0;
  const Vec2 e2 = v2 - v1;
  const double twoA = cross(v1 - v0, v2 - v0);
  const double scale = twoA < 0 ? -twoA : twoA;
  for (int i = 0; i < kGaussN; ++i) {
    const double a = kGaussX[i];
    for (int j = 0; j < kGaussN; ++j) {
      const double b = kGaussX[j];
      const Vec2 x = v0 + a * e1 + (a * b) * e2;
      f(x, kGaussW[i] * kGaussW[j] * a * scale, out);
    }
  }
}

// std::function convenience wrapper for cold paths and tests.
double integrate_tri_fn(const Vec2& v0, const Vec2& v1, const Vec2& v2,
                        const std::function<double(const Vec2&)>& f);

// Gauss-Legendre integral of f over the segment [a, b] (10 points, exact for
// polynomial degree <= 19 along the segment).
double integrate_segment_fn(const Vec2& a, const Vec2& b,
                            const std::function<double(const Vec2&)>& f);

}  // namespace limcur
