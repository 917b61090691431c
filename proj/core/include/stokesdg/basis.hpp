#pragma once

#include <Eigen/Core>
#include <Eigen/Dense>
#include <vector>

#include "stokesdg/polynomial.hpp"

namespace stokesdg {

/// Lattice node of a degree-l Lagrange element, in barycentric integer
/// coordinates (b0,b1,b2) with b0+b1+b2 = l against vertices
/// (0,0),(1,0),(0,1) of the reference triangle.
struct LatticeNode {
  int b0, b1, b2;
  Eigen::Vector2d point;  // reference coordinates
};

/// Lagrange basis of P_l on the reference triangle. Degree 0 uses the
/// centroid as its single node.
class TriangleBasis {
 public:
  explicit TriangleBasis(int degree);

  int degree() const { return degree_; }
  int size() const { return static_cast<int>(nodes_.size()); }
  const std::vector<LatticeNode>& nodes() const { return nodes_; }

  /// Values of all basis functions at a reference point.
  Eigen::VectorXd eval_all(const Eigen::Vector2d& x) const;
  /// Gradients of all basis functions at a reference point (row a = grad phi_a).
  Eigen::MatrixXd grad_all(const Eigen::Vector2d& x) const;

  /// Monomial form of basis function a.
  const Poly2& basis_poly(int a) const { return polys_[a]; }

  /// Monomial polynomial from nodal values.
  Poly2 to_poly(const Eigen::VectorXd& nodal) const;

  /// Node index with the given barycentric integers, -1 if absent.
  int find_node(int b0, int b1, int b2) const;

 private:
  int degree_;
  std::vector<LatticeNode> nodes_;
  std::vector<Poly2> polys_;          // Lagrange basis in monomial form
  Eigen::MatrixXd coeff_;             // column a = monomial coefficients of phi_a
};

/// 1-D Lagrange basis of degree m on [0,1] at equispaced nodes
/// (degree 0: single node at 1/2).
class EdgeBasis {
 public:
  explicit EdgeBasis(int degree);

  int degree() const { return degree_; }
  int size() const { return static_cast<int>(nodes_.size()); }
  const std::vector<double>& nodes() const { return nodes_; }

  double eval(int a, double t) const;
  Eigen::VectorXd eval_all(double t) const;

 private:
  int degree_;
  std::vector<double> nodes_;
};

/// Basis of the decomposition P_k(K)^2 = grad P_{k+1}(K) + x-perp P_{k-1}(K)
/// on the reference triangle.
struct PolyDecompBasis {
  int k = 0;
  std::vector<VecPoly2> gradient_part;    // grad of non-constant monomials of P_{k+1}
  std::vector<VecPoly2> rotational_part;  // (-y r, x r) for monomials r of P_{k-1}

  explicit PolyDecompBasis(int k);
  int size() const {
    return static_cast<int>(gradient_part.size() + rotational_part.size());
  }
};

/// Basis of x-perp P_{k}(K_ref): fields (-y r, x r) with r a monomial of P_k.
std::vector<VecPoly2> xperp_basis(int k);

}  // namespace stokesdg
