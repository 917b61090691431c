#include "stokesdg/dg_forms.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "stokesdg/quadrature.hpp"

namespace stokesdg {

namespace {

struct FaceSide {
  int element = -1;
  double sign = 0.0;    // jump sign: +1 on K1, -1 on K2
  double avg = 0.0;     // averaging weight: 1/2 interior, 1 boundary
  std::vector<Eigen::Vector2d> ref_points;  // per edge-quadrature point
  AffineMap map;
};

struct FaceQuad {
  const Face* face = nullptr;
  std::vector<FaceSide> sides;
  QuadRule rule;
};

FaceQuad face_quadrature(const TriangleMesh& mesh, int f, int degree) {
  FaceQuad fq;
  fq.face = &mesh.faces[f];
  fq.rule = quad_edge(degree);
  const Eigen::Vector2d a = mesh.vertices[fq.face->vertices[0]];
  const Eigen::Vector2d b = mesh.vertices[fq.face->vertices[1]];
  const double avg = fq.face->is_boundary() ? 1.0 : 0.5;
  const int elems[2] = {fq.face->first_element, fq.face->second_element};
  const double signs[2] = {1.0, -1.0};
  for (int s = 0; s < 2; ++s) {
    if (elems[s] < 0) continue;
    FaceSide side;
    side.element = elems[s];
    side.sign = signs[s];
    side.avg = avg;
    side.map = affine_map(mesh, elems[s]);
    side.ref_points.reserve(fq.rule.size());
    for (int q = 0; q < fq.rule.size(); ++q) {
      const double t = fq.rule.points[q][0];
      side.ref_points.push_back(side.map.apply_inverse(a + t * (b - a)));
    }
    fq.sides.push_back(std::move(side));
  }
  return fq;
}

}  // namespace

SparseMatrix assemble_a(const TriangleMesh& mesh, int ell, double eta,
                        PenaltyVariant variant) {
  require_supported_degree(ell);
  const TriangleBasis& basis = triangle_basis(ell);
  const int n_loc = basis.size();
  const int n_dofs = 2 * mesh.num_triangles() * n_loc;
  auto dof = [&](int k, int a, int c) { return (k * n_loc + a) * 2 + c; };

  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(mesh.num_triangles() * 4 * n_loc * n_loc * 2 +
                mesh.num_faces() * 16 * n_loc * n_loc);

  // Volume term: broken gradient Gram per element.
  const QuadRule vol_rule = quad_triangle(std::max(1, 2 * ell));
  std::vector<Eigen::MatrixXd> grads(vol_rule.size());
  for (int q = 0; q < vol_rule.size(); ++q) grads[q] = basis.grad_all(vol_rule.points[q]);
  for (int k = 0; k < mesh.num_triangles(); ++k) {
    const AffineMap map = affine_map(mesh, k);
    Eigen::MatrixXd block = Eigen::MatrixXd::Zero(n_loc, n_loc);
    for (int q = 0; q < vol_rule.size(); ++q) {
      const Eigen::MatrixXd g = grads[q] * map.inverse;  // row a = physical grad
      block += (vol_rule.weights[q] * map.jacobian_abs) * (g * g.transpose());
    }
    for (int a = 0; a < n_loc; ++a)
      for (int b = 0; b < n_loc; ++b)
        for (int c = 0; c < 2; ++c)
          trips.emplace_back(dof(k, a, c), dof(k, b, c), block(a, b));
  }

  // Face terms. Per face, a dense block over the stacked one-sided scalar dofs.
  const int edge_deg = 2 * ell + 2;
  const EdgeBasis& pen_basis = edge_basis(ell - 1);
  for (int f = 0; f < mesh.num_faces(); ++f) {
    const FaceQuad fq = face_quadrature(mesh, f, edge_deg);
    const int n_q = fq.rule.size();
    const int n_sides = static_cast<int>(fq.sides.size());
    const int n_cols = n_sides * n_loc;
    const double h = fq.face->diameter;
    const Eigen::Vector2d n = fq.face->normal;

    Eigen::MatrixXd jump(n_q, n_cols);     // [phi](t_q)
    Eigen::MatrixXd avg_dn(n_q, n_cols);   // {grad phi . n}(t_q)
    for (int s = 0; s < n_sides; ++s) {
      const FaceSide& side = fq.sides[s];
      for (int q = 0; q < n_q; ++q) {
        const Eigen::VectorXd phi = basis.eval_all(side.ref_points[q]);
        const Eigen::MatrixXd g = basis.grad_all(side.ref_points[q]) * side.map.inverse;
        for (int a = 0; a < n_loc; ++a) {
          jump(q, s * n_loc + a) = side.sign * phi[a];
          avg_dn(q, s * n_loc + a) = side.avg * g.row(a).dot(n);
        }
      }
    }

    Eigen::VectorXd w(n_q);
    for (int q = 0; q < n_q; ++q) w[q] = fq.rule.weights[q];

    Eigen::MatrixXd pen_jump = jump;
    if (variant == PenaltyVariant::Weak) {
      // Values of the P_{l-1}(F) projection of the jump at quadrature points.
      const int n_m = pen_basis.size();
      Eigen::MatrixXd psi(n_q, n_m);
      for (int q = 0; q < n_q; ++q) psi.row(q) = pen_basis.eval_all(fq.rule.points[q][0]).transpose();
      const Eigen::MatrixXd mass = psi.transpose() * w.asDiagonal() * psi;
      pen_jump = psi * mass.ldlt().solve(psi.transpose() * w.asDiagonal() * jump);
    }

    // (eta/h) * int_F penalized jumps: the h from the line measure cancels.
    const Eigen::MatrixXd penalty = eta * pen_jump.transpose() * w.asDiagonal() * pen_jump;
    const Eigen::MatrixXd consistency = h * avg_dn.transpose() * w.asDiagonal() * jump;
    const Eigen::MatrixXd block = penalty - consistency - consistency.transpose();

    for (int sa = 0; sa < n_sides; ++sa) {
      for (int sb = 0; sb < n_sides; ++sb) {
        for (int a = 0; a < n_loc; ++a) {
          for (int b = 0; b < n_loc; ++b) {
            const double v = block(sa * n_loc + a, sb * n_loc + b);
            if (v == 0.0) continue;
            for (int c = 0; c < 2; ++c) {
              trips.emplace_back(dof(fq.sides[sa].element, a, c),
                                 dof(fq.sides[sb].element, b, c), v);
            }
          }
        }
      }
    }
  }

  SparseMatrix A(n_dofs, n_dofs);
  A.setFromTriplets(trips.begin(), trips.end());
  return A;
}

SparseMatrix assemble_b(const TriangleMesh& mesh, int ell) {
  require_supported_degree(ell);
  const TriangleBasis& vbasis = triangle_basis(ell);
  const TriangleBasis& pbasis = triangle_basis(ell - 1);
  const int n_loc = vbasis.size();
  const int m_loc = pbasis.size();
  const int n_v = 2 * mesh.num_triangles() * n_loc;
  const int n_p = mesh.num_triangles() * m_loc;
  auto vdof = [&](int k, int a, int c) { return (k * n_loc + a) * 2 + c; };
  auto pdof = [&](int k, int m) { return k * m_loc + m; };

  std::vector<Eigen::Triplet<double>> trips;

  // Volume: -int_K chi_m d_c(phi_a).
  const QuadRule vol_rule = quad_triangle(std::max(1, 2 * ell - 1));
  std::vector<Eigen::MatrixXd> vgrads(vol_rule.size());
  std::vector<Eigen::VectorXd> pvals(vol_rule.size());
  for (int q = 0; q < vol_rule.size(); ++q) {
    vgrads[q] = vbasis.grad_all(vol_rule.points[q]);
    pvals[q] = pbasis.eval_all(vol_rule.points[q]);
  }
  for (int k = 0; k < mesh.num_triangles(); ++k) {
    const AffineMap map = affine_map(mesh, k);
    for (int q = 0; q < vol_rule.size(); ++q) {
      const double wq = vol_rule.weights[q] * map.jacobian_abs;
      const Eigen::MatrixXd g = vgrads[q] * map.inverse;
      for (int m = 0; m < m_loc; ++m) {
        const double chi = pvals[q][m];
        if (chi == 0.0) continue;
        for (int a = 0; a < n_loc; ++a) {
          for (int c = 0; c < 2; ++c) {
            trips.emplace_back(pdof(k, m), vdof(k, a, c), -wq * chi * g(a, c));
          }
        }
      }
    }
  }

  // Faces: + int_F [w].n {q}.
  const int edge_deg = 2 * ell + 2;
  for (int f = 0; f < mesh.num_faces(); ++f) {
    const FaceQuad fq = face_quadrature(mesh, f, edge_deg);
    const double h = fq.face->diameter;
    const Eigen::Vector2d n = fq.face->normal;
    for (const FaceSide& w_side : fq.sides) {
      for (const FaceSide& q_side : fq.sides) {
        for (int q = 0; q < fq.rule.size(); ++q) {
          const double wq = fq.rule.weights[q] * h;
          const Eigen::VectorXd phi = vbasis.eval_all(w_side.ref_points[q]);
          const Eigen::VectorXd chi = pbasis.eval_all(q_side.ref_points[q]);
          for (int m = 0; m < m_loc; ++m) {
            const double qv = q_side.avg * chi[m];
            if (qv == 0.0) continue;
            for (int a = 0; a < n_loc; ++a) {
              for (int c = 0; c < 2; ++c) {
                trips.emplace_back(pdof(q_side.element, m), vdof(w_side.element, a, c),
                                   wq * w_side.sign * phi[a] * n[c] * qv);
              }
            }
          }
        }
      }
    }
  }

  SparseMatrix B(n_p, n_v);
  B.setFromTriplets(trips.begin(), trips.end());
  return B;
}

BrokenPressure discrete_divergence(const BrokenField& w) {
  const TriangleMesh& mesh = w.mesh();
  const int ell = w.degree();
  const TriangleBasis& pbasis = triangle_basis(ell - 1);
  const int m_loc = pbasis.size();
  BrokenPressure div(mesh, ell - 1);

  // Reference mass of the pressure basis, exact.
  Eigen::MatrixXd mass(m_loc, m_loc);
  for (int m = 0; m < m_loc; ++m) {
    for (int n = 0; n < m_loc; ++n) {
      mass(m, n) = (pbasis.basis_poly(m) * pbasis.basis_poly(n)).integral_ref_triangle();
    }
  }
  Eigen::LDLT<Eigen::MatrixXd> mass_solver(mass);

  const QuadRule vol_rule = quad_triangle(std::max(1, 2 * ell - 1));
  const int edge_deg = 2 * ell + 2;

  for (int k = 0; k < mesh.num_triangles(); ++k) {
    const AffineMap map = affine_map(mesh, k);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m_loc);

    for (int q = 0; q < vol_rule.size(); ++q) {
      const double wq = vol_rule.weights[q] * map.jacobian_abs;
      const Eigen::Matrix2d jac = w.jacobian(k, map, vol_rule.points[q]);
      const double divw = jac.trace();
      const Eigen::VectorXd chi = pbasis.eval_all(vol_rule.points[q]);
      rhs += (wq * divw) * chi;
    }

    for (int e = 0; e < 3; ++e) {
      const int f = mesh.element_to_faces[k][e];
      const FaceQuad fq = face_quadrature(mesh, f, edge_deg);
      const Eigen::Vector2d n = fq.face->normal;
      const FaceSide* own = nullptr;
      for (const FaceSide& s : fq.sides) {
        if (s.element == k) own = &s;
      }
      for (int q = 0; q < fq.rule.size(); ++q) {
        Eigen::Vector2d jump = Eigen::Vector2d::Zero();
        for (const FaceSide& s : fq.sides) {
          jump += s.sign * w.value(s.element, s.ref_points[q]);
        }
        const Eigen::VectorXd chi = pbasis.eval_all(own->ref_points[q]);
        const double wq = fq.rule.weights[q] * fq.face->diameter;
        rhs -= (wq * jump.dot(n) * own->avg) * chi;
      }
    }

    const Eigen::VectorXd p = mass_solver.solve(rhs / map.jacobian_abs);
    for (int m = 0; m < m_loc; ++m) div.coeffs()[div.dof(k, m)] = p[m];
  }
  div.zero_mean = true;
  return div;
}

namespace {

double jump_seminorm_sq(const BrokenField& v, double weight_eta, bool one_over_h) {
  const TriangleMesh& mesh = v.mesh();
  const int edge_deg = 2 * v.degree() + 2;
  double s = 0.0;
  for (int f = 0; f < mesh.num_faces(); ++f) {
    const FaceQuad fq = face_quadrature(mesh, f, edge_deg);
    double acc = 0.0;
    for (int q = 0; q < fq.rule.size(); ++q) {
      Eigen::Vector2d jump = Eigen::Vector2d::Zero();
      for (const FaceSide& side : fq.sides) {
        jump += side.sign * v.value(side.element, side.ref_points[q]);
      }
      acc += fq.rule.weights[q] * jump.squaredNorm();
    }
    // (eta/h) int_F |[v]|^2 = eta int_0^1 |[v](t)|^2 dt
    s += (one_over_h ? 1.0 : weight_eta) * acc;
  }
  return s;
}

double grad_seminorm_sq(const BrokenField& v) {
  const TriangleMesh& mesh = v.mesh();
  const QuadRule rule = quad_triangle(std::max(1, 2 * (v.degree() - 1)));
  double s = 0.0;
  for (int k = 0; k < mesh.num_triangles(); ++k) {
    const AffineMap map = affine_map(mesh, k);
    for (int q = 0; q < rule.size(); ++q) {
      const Eigen::Matrix2d jac = v.jacobian(k, map, rule.points[q]);
      s += rule.weights[q] * map.jacobian_abs * jac.squaredNorm();
    }
  }
  return s;
}

}  // namespace

double norm_dg(const BrokenField& v, double eta) {
  return std::sqrt(grad_seminorm_sq(v) + jump_seminorm_sq(v, eta, false));
}

double norm_dg1(const BrokenField& v) {
  return std::sqrt(grad_seminorm_sq(v) + jump_seminorm_sq(v, 1.0, true));
}

double estimate_eta_threshold(const TriangleMesh& mesh, int ell) {
  if (ell < 0) throw std::invalid_argument("estimate_eta_threshold: negative degree");
  const TriangleBasis& basis = triangle_basis(ell);
  const int n_loc = basis.size();
  const QuadRule vol_rule = quad_triangle(std::max(1, 2 * ell));
  const QuadRule edge_rule = quad_edge(2 * ell);

  double eta_bar = 0.0;
  for (int k = 0; k < mesh.num_triangles(); ++k) {
    const AffineMap map = affine_map(mesh, k);
    Eigen::MatrixXd vol = Eigen::MatrixXd::Zero(n_loc, n_loc);
    for (int q = 0; q < vol_rule.size(); ++q) {
      const Eigen::VectorXd phi = basis.eval_all(vol_rule.points[q]);
      vol += (vol_rule.weights[q] * map.jacobian_abs) * (phi * phi.transpose());
    }
    Eigen::MatrixXd bdy = Eigen::MatrixXd::Zero(n_loc, n_loc);
    for (int e = 0; e < 3; ++e) {
      const Face& face = mesh.faces[mesh.element_to_faces[k][e]];
      const Eigen::Vector2d a = mesh.vertices[face.vertices[0]];
      const Eigen::Vector2d b = mesh.vertices[face.vertices[1]];
      const double h = face.diameter;
      for (int q = 0; q < edge_rule.size(); ++q) {
        const double t = edge_rule.points[q][0];
        const Eigen::Vector2d ref = map.apply_inverse(a + t * (b - a));
        const Eigen::VectorXd phi = basis.eval_all(ref);
        bdy += (edge_rule.weights[q] * h * h) * (phi * phi.transpose());
      }
    }
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(bdy, vol);
    eta_bar = std::max(eta_bar, es.eigenvalues().maxCoeff());
  }
  return eta_bar;
}

}  // namespace stokesdg
