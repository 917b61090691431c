#pragma once

#include <Eigen/Core>
#include <functional>
#include <vector>

#include "stokesdg/basis.hpp"
#include "stokesdg/mesh.hpp"

namespace stokesdg {

/// Supported polynomial orders of the discretization.
inline bool degree_supported(int ell) { return ell >= 1 && ell <= 3; }
void require_supported_degree(int ell);

/// Global numbering of conforming Lagrange nodes of a given degree.
/// Nodes are classified by entity (vertex / face / element interior) so the
/// identification across elements is exact integer arithmetic.
struct LagrangeConnectivity {
  int degree = 1;
  int num_nodes = 0;
  std::vector<Eigen::Vector2d> node_position;
  std::vector<char> node_on_boundary;
  std::vector<int> node_multiplicity;            // number of triangles containing the node
  std::vector<std::vector<int>> element_nodes;   // K -> local node a -> global node
};

LagrangeConnectivity build_lagrange_connectivity(const TriangleMesh& mesh, int degree);

/// Broken vector-valued P_l field: per-triangle nodal values at the mapped
/// Lagrange lattice. Dof order: element-major, local node, then component.
class BrokenField {
 public:
  BrokenField(const TriangleMesh& mesh, int degree);

  const TriangleMesh& mesh() const { return *mesh_; }
  int degree() const { return degree_; }
  int nodes_per_element() const { return basis_->size(); }
  int size() const { return static_cast<int>(coeffs_.size()); }
  const TriangleBasis& basis() const { return *basis_; }

  Eigen::VectorXd& coeffs() { return coeffs_; }
  const Eigen::VectorXd& coeffs() const { return coeffs_; }

  int dof(int k, int node, int comp) const {
    return (k * basis_->size() + node) * 2 + comp;
  }

  /// Value at a reference point of element k.
  Eigen::Vector2d value(int k, const Eigen::Vector2d& ref) const;
  /// Physical Jacobian (rows = components) at a reference point of element k.
  Eigen::Matrix2d jacobian(int k, const AffineMap& map, const Eigen::Vector2d& ref) const;

  /// Component c of the restriction to element k, in reference coordinates.
  Poly2 component_poly(int k, int comp) const;

  /// Nodal interpolation of a smooth function.
  static BrokenField interpolate(const TriangleMesh& mesh, int degree,
                                 const std::function<Eigen::Vector2d(const Eigen::Vector2d&)>& u);

 private:
  const TriangleMesh* mesh_;
  int degree_;
  const TriangleBasis* basis_;
  Eigen::VectorXd coeffs_;
};

/// Broken scalar P_m field (pressures, discrete divergences). Dof order:
/// element-major, then local node.
class BrokenPressure {
 public:
  BrokenPressure(const TriangleMesh& mesh, int degree);

  const TriangleMesh& mesh() const { return *mesh_; }
  int degree() const { return degree_; }
  int nodes_per_element() const { return basis_->size(); }
  int size() const { return static_cast<int>(coeffs_.size()); }
  const TriangleBasis& basis() const { return *basis_; }

  Eigen::VectorXd& coeffs() { return coeffs_; }
  const Eigen::VectorXd& coeffs() const { return coeffs_; }
  bool zero_mean = false;

  int dof(int k, int node) const { return k * basis_->size() + node; }

  double value(int k, const Eigen::Vector2d& ref) const;
  Poly2 element_poly(int k) const;

  /// Integral over the domain (exact).
  double mean_integral() const;

 private:
  const TriangleMesh* mesh_;
  int degree_;
  const TriangleBasis* basis_;
  Eigen::VectorXd coeffs_;
};

/// Shared immutable reference bases, one per degree.
const TriangleBasis& triangle_basis(int degree);
const EdgeBasis& edge_basis(int degree);

}  // namespace stokesdg
