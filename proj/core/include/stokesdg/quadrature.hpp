#pragma once

#include <Eigen/Core>
#include <vector>

namespace stokesdg {

/// Quadrature rule on a reference domain (unit triangle or unit interval).
/// Weights are strictly positive and sum to the reference measure.
struct QuadRule {
  std::vector<Eigen::Vector2d> points;  // reference coordinates (y unused for edges)
  std::vector<double> weights;
  int exactness = 0;  // integrates all polynomials of total degree <= exactness

  int size() const { return static_cast<int>(points.size()); }
};

/// Rule on the reference triangle (0,0),(1,0),(0,1), exact through `degree`.
/// Low degrees use classic symmetric rules; higher degrees use a collapsed
/// tensor-product (Duffy) construction, exact and positive at any degree.
QuadRule quad_triangle(int degree);

/// Gauss-Legendre rule on [0,1], exact through `degree`.
QuadRule quad_edge(int degree);

/// Largest degree quad_triangle/quad_edge accept.
int max_quadrature_degree();

}  // namespace stokesdg
