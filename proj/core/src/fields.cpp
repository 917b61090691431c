#include "stokesdg/fields.hpp"

#include <map>
#include <stdexcept>
#include <tuple>

#include "stokesdg/piola.hpp"

namespace stokesdg {

void require_supported_degree(int ell) {
  if (!degree_supported(ell)) {
    throw std::invalid_argument("polynomial degree " + std::to_string(ell) +
                                " not supported (expected 1 <= ell <= 3)");
  }
}

const TriangleBasis& triangle_basis(int degree) {
  static std::map<int, TriangleBasis> cache;
  auto it = cache.find(degree);
  if (it == cache.end()) it = cache.emplace(degree, TriangleBasis(degree)).first;
  return it->second;
}

const EdgeBasis& edge_basis(int degree) {
  static std::map<int, EdgeBasis> cache;
  auto it = cache.find(degree);
  if (it == cache.end()) it = cache.emplace(degree, EdgeBasis(degree)).first;
  return it->second;
}

LagrangeConnectivity build_lagrange_connectivity(const TriangleMesh& mesh, int degree) {
  if (degree < 1) throw std::invalid_argument("connectivity requires degree >= 1");
  const TriangleBasis& basis = triangle_basis(degree);
  const int n_loc = basis.size();

  LagrangeConnectivity conn;
  conn.degree = degree;
  conn.element_nodes.assign(mesh.num_triangles(), std::vector<int>(n_loc, -1));

  std::vector<char> vertex_on_boundary(mesh.num_vertices(), 0);
  std::vector<char> face_on_boundary(mesh.num_faces(), 0);
  for (int f = 0; f < mesh.num_faces(); ++f) {
    if (mesh.faces[f].is_boundary()) {
      face_on_boundary[f] = 1;
      vertex_on_boundary[mesh.faces[f].vertices[0]] = 1;
      vertex_on_boundary[mesh.faces[f].vertices[1]] = 1;
    }
  }

  // Keys: (0, vertex, 0) for vertex nodes, (1, face, t) for edge nodes where
  // t is the barycentric weight at the face endpoint with larger vertex id,
  // (2, element, local) for interior nodes.
  std::map<std::tuple<int, int, int>, int> node_ids;

  for (int k = 0; k < mesh.num_triangles(); ++k) {
    const auto& tri = mesh.triangles[k];
    const AffineMap map = affine_map(mesh, k);
    for (int a = 0; a < n_loc; ++a) {
      const LatticeNode& node = basis.nodes()[a];
      const int bary[3] = {node.b0, node.b1, node.b2};
      int zeros = 0;
      for (int b : bary) zeros += (b == 0);

      std::tuple<int, int, int> key;
      bool on_boundary = false;
      if (zeros == 2) {
        int v = 0;
        for (int e = 0; e < 3; ++e) {
          if (bary[e] == degree) v = tri[e];
        }
        key = {0, v, 0};
        on_boundary = vertex_on_boundary[v];
      } else if (zeros == 1) {
        int opp = 0;
        for (int e = 0; e < 3; ++e) {
          if (bary[e] == 0) opp = e;
        }
        const int f = mesh.element_to_faces[k][opp];
        const int p = (opp + 1) % 3, q = (opp + 2) % 3;
        const int big = std::max(tri[p], tri[q]);
        const int w_big = (tri[p] == big) ? bary[p] : bary[q];
        key = {1, f, w_big};
        on_boundary = face_on_boundary[f];
      } else {
        key = {2, k, a};
      }

      auto [it, inserted] = node_ids.try_emplace(key, conn.num_nodes);
      if (inserted) {
        conn.num_nodes++;
        conn.node_position.push_back(map.apply(node.point));
        conn.node_on_boundary.push_back(on_boundary ? 1 : 0);
        conn.node_multiplicity.push_back(0);
      }
      conn.element_nodes[k][a] = it->second;
      conn.node_multiplicity[it->second]++;
    }
  }
  return conn;
}

BrokenField::BrokenField(const TriangleMesh& mesh, int degree)
    : mesh_(&mesh), degree_(degree), basis_(&triangle_basis(degree)) {
  coeffs_ = Eigen::VectorXd::Zero(2 * mesh.num_triangles() * basis_->size());
}

Eigen::Vector2d BrokenField::value(int k, const Eigen::Vector2d& ref) const {
  const Eigen::VectorXd phi = basis_->eval_all(ref);
  Eigen::Vector2d v = Eigen::Vector2d::Zero();
  for (int a = 0; a < basis_->size(); ++a) {
    v[0] += coeffs_[dof(k, a, 0)] * phi[a];
    v[1] += coeffs_[dof(k, a, 1)] * phi[a];
  }
  return v;
}

Eigen::Matrix2d BrokenField::jacobian(int k, const AffineMap& map,
                                      const Eigen::Vector2d& ref) const {
  const Eigen::MatrixXd g = basis_->grad_all(ref);
  Eigen::Matrix2d jac_ref = Eigen::Matrix2d::Zero();
  for (int a = 0; a < basis_->size(); ++a) {
    jac_ref.row(0) += coeffs_[dof(k, a, 0)] * g.row(a);
    jac_ref.row(1) += coeffs_[dof(k, a, 1)] * g.row(a);
  }
  return jac_ref * map.inverse;  // rows = components, chain rule
}

Poly2 BrokenField::component_poly(int k, int comp) const {
  Eigen::VectorXd nodal(basis_->size());
  for (int a = 0; a < basis_->size(); ++a) nodal[a] = coeffs_[dof(k, a, comp)];
  return basis_->to_poly(nodal);
}

BrokenField BrokenField::interpolate(
    const TriangleMesh& mesh, int degree,
    const std::function<Eigen::Vector2d(const Eigen::Vector2d&)>& u) {
  BrokenField field(mesh, degree);
  const TriangleBasis& basis = triangle_basis(degree);
  for (int k = 0; k < mesh.num_triangles(); ++k) {
    const AffineMap map = affine_map(mesh, k);
    for (int a = 0; a < basis.size(); ++a) {
      const Eigen::Vector2d val = u(map.apply(basis.nodes()[a].point));
      field.coeffs()[field.dof(k, a, 0)] = val[0];
      field.coeffs()[field.dof(k, a, 1)] = val[1];
    }
  }
  return field;
}

BrokenPressure::BrokenPressure(const TriangleMesh& mesh, int degree)
    : mesh_(&mesh), degree_(degree), basis_(&triangle_basis(degree)) {
  coeffs_ = Eigen::VectorXd::Zero(mesh.num_triangles() * basis_->size());
}

double BrokenPressure::value(int k, const Eigen::Vector2d& ref) const {
  const Eigen::VectorXd phi = basis_->eval_all(ref);
  double v = 0.0;
  for (int a = 0; a < basis_->size(); ++a) v += coeffs_[dof(k, a)] * phi[a];
  return v;
}

Poly2 BrokenPressure::element_poly(int k) const {
  Eigen::VectorXd nodal(basis_->size());
  for (int a = 0; a < basis_->size(); ++a) nodal[a] = coeffs_[dof(k, a)];
  return basis_->to_poly(nodal);
}

double BrokenPressure::mean_integral() const {
  double s = 0.0;
  for (int k = 0; k < mesh_->num_triangles(); ++k) {
    const AffineMap map = affine_map(*mesh_, k);
    s += map.jacobian_abs * element_poly(k).integral_ref_triangle();
  }
  return s;
}

}  // namespace stokesdg
