#include "chd/quadrature.hpp"

namespace chd {

const TriangleRule& triangle_rule_degree2() {
  static const TriangleRule rule{
      {{0.0, 0.5, 0.5}, {0.5, 0.0, 0.5}, {0.5, 0.5, 0.0}},
      {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0},
      2};
  return rule;
}

const TriangleRule& triangle_rule_degree4() {
  // Dunavant (1985), degree 4.
  constexpr double a1 = 0.445948490915964886318329253883;
  constexpr double b1 = 1.0 - 2.0 * a1;
  constexpr double w1 = 0.223381589678011465944640024717;
  constexpr double a2 = 0.091576213509770743459571463402;
  constexpr double b2 = 1.0 - 2.0 * a2;
  constexpr double w2 = 0.109951743655321867388693308617;
  static const TriangleRule rule{
      {{b1, a1, a1}, {a1, b1, a1}, {a1, a1, b1}, {b2, a2, a2}, {a2, b2, a2}, {a2, a2, b2}},
      {w1, w1, w1, w2, w2, w2},
      4};
  return rule;
}

}  // namespace chd
