#include "limcur/quadrature.hpp"

namespace limcur {

double integrate_tri_fn(const Vec2& v0, const Vec2& v1, const Vec2& v2,
                        const std::function<double(const Vec2&)>& f) {
  return integrate_tri(v0, v1, v2, f);
}

double integrate_segment_fn(const Vec2& a, const Vec2& b,
                            const std::function<double(const Vec2&)>& f) {
  const double len = (b - a).norm();
  double s = 0.0;
  for (int i = 0; i < kGaussN; ++i) {
    const Vec2 x = a + kGaussX[i] * (b - a);
    s += kGaussW[i] * f(x);
  }
  return s * len;
}

}  // namespace limcur
