/// @file quadrature.hpp
/// @brief Symmetric triangle quadrature rules in barycentric coordinates.
#pragma once

#include <array>
#include <span>
#include <vector>

namespace chd {

struct TriangleRule {
  /// Barycentric coordinates of each node.
  std::vector<std::array<double, 3>> nodes;
  /// Weights summing to 1; multiply by |K| to integrate.
  std::vector<double> weights;
  int degree = 0;
};

/// Edge midpoints, exact through degree 2.
const TriangleRule& triangle_rule_degree2();
/// Six-point rule with positive weights, exact through degree 4.
const TriangleRule& triangle_rule_degree4();

}  // namespace chd
