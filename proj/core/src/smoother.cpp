#include "stokesdg/smoother.hpp"

#include <cmath>
#include <stdexcept>

namespace stokesdg {

namespace {

const Eigen::Vector2d kRefVerts[3] = {{0.0, 0.0}, {1.0, 0.0}, {0.0, 1.0}};
const Eigen::Vector2d kRefCenter(1.0 / 3.0, 1.0 / 3.0);

AffineMap child_sector_map(int t) {
  AffineMap map;
  map.matrix.col(0) = kRefVerts[(t + 1) % 3] - kRefVerts[t];
  map.matrix.col(1) = kRefCenter - kRefVerts[t];
  map.offset = kRefVerts[t];
  map.jacobian_abs = std::abs(map.matrix.determinant());
  map.inverse = map.matrix.inverse();
  map.inverse_t = map.inverse.transpose();
  return map;
}

Poly2 barycentric_poly(int i) {
  switch (i) {
    case 0:
      return Poly2::constant(1.0) - Poly2::monomial(1, 0) - Poly2::monomial(0, 1);
    case 1:
      return Poly2::monomial(1, 0);
    default:
      return Poly2::monomial(0, 1);
  }
}

Eigen::VectorXd poly_coeffs(const Poly2& p, int dim) {
  Eigen::VectorXd c = Eigen::VectorXd::Zero(dim);
  const int n = std::min<int>(dim, static_cast<int>(p.coefficients().size()));
  for (int i = 0; i < n; ++i) c[i] = p.coefficients()[i];
  return c;
}

std::pair<int, int> monomial_exponents(int idx) {
  int k = 0;
  while ((k + 1) * (k + 2) / 2 <= idx) ++k;
  const int j = idx - k * (k + 1) / 2;
  return {k - j, j};
}

// Contribution of a scalar basis field (value phi e_c, physical gradient g)
// to the two component entries of a load moment.
inline Eigen::Vector2d scalar_contrib(const ChildLoadData& load, int child, int q,
                                      double phi, const Eigen::RowVector2d& grad) {
  const double w = load.points[child][q].weight;
  if (load.kind == ChildLoadData::Kind::Strong) {
    return w * phi * load.f_vals[child][q];
  }
  const Eigen::Matrix2d& gu = load.mu_grad_u[child][q];
  const double p = load.p_vals[child][q];
  Eigen::Vector2d out;
  for (int c = 0; c < 2; ++c) {
    out[c] = w * (gu.row(c).dot(grad) - p * grad[c]);
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// SmoothedField

SmoothedField::SmoothedField(const CompanionMesh& companion, int degree, bool conforming)
    : companion_(&companion),
      degree_(degree),
      basis_(&triangle_basis(degree)),
      conforming_(conforming) {
  values_ = Eigen::VectorXd::Zero(2 * companion.mesh.num_triangles() * basis_->size());
}

Eigen::Vector2d SmoothedField::value(int child, const Eigen::Vector2d& child_ref) const {
  const Eigen::VectorXd phi = basis_->eval_all(child_ref);
  Eigen::Vector2d v = Eigen::Vector2d::Zero();
  for (int a = 0; a < basis_->size(); ++a) {
    v[0] += values_[dof(child, a, 0)] * phi[a];
    v[1] += values_[dof(child, a, 1)] * phi[a];
  }
  return v;
}

Eigen::Matrix2d SmoothedField::jacobian(int child, const Eigen::Vector2d& child_ref) const {
  const Eigen::MatrixXd g = basis_->grad_all(child_ref);
  Eigen::Matrix2d jac_ref = Eigen::Matrix2d::Zero();
  for (int a = 0; a < basis_->size(); ++a) {
    jac_ref.row(0) += values_[dof(child, a, 0)] * g.row(a);
    jac_ref.row(1) += values_[dof(child, a, 1)] * g.row(a);
  }
  return jac_ref * companion_->child_maps[child].inverse;
}

SmoothedField& SmoothedField::operator+=(const SmoothedField& other) {
  values_ += other.values_;
  conforming_ = conforming_ && other.conforming_;
  return *this;
}

double grad_norm(const SmoothedField& w) {
  const TriangleMesh& mesh = w.companion().mesh;
  const QuadRule rule = quad_triangle(std::max(1, 2 * (w.degree() - 1)));
  double s = 0.0;
  for (int child = 0; child < mesh.num_triangles(); ++child) {
    const double jac = w.companion().child_maps[child].jacobian_abs;
    for (int q = 0; q < rule.size(); ++q) {
      s += rule.weights[q] * jac * w.jacobian(child, rule.points[q]).squaredNorm();
    }
  }
  return std::sqrt(s);
}

double conformity_defect(const SmoothedField& w) {
  const TriangleMesh& mesh = w.companion().mesh;
  const QuadRule rule = quad_edge(2 * w.degree() + 2);
  double defect = 0.0;
  for (int f = 0; f < mesh.num_faces(); ++f) {
    const Face& face = mesh.faces[f];
    const Eigen::Vector2d a = mesh.vertices[face.vertices[0]];
    const Eigen::Vector2d b = mesh.vertices[face.vertices[1]];
    for (int q = 0; q < rule.size(); ++q) {
      const Eigen::Vector2d x = a + rule.points[q][0] * (b - a);
      Eigen::Vector2d jump =
          w.value(face.first_element,
                  w.companion().child_maps[face.first_element].apply_inverse(x));
      if (!face.is_boundary()) {
        jump -= w.value(face.second_element,
                        w.companion().child_maps[face.second_element].apply_inverse(x));
      }
      defect = std::max(defect, jump.lpNorm<Eigen::Infinity>());
    }
  }
  return defect;
}

// ---------------------------------------------------------------------------
// Reference operators

E3RefOperator build_e3_ref(int ell) {
  require_supported_degree(ell);
  E3RefOperator op;
  op.ell = ell;

  TriangleMesh one = make_mesh({kRefVerts[0], kRefVerts[1], kRefVerts[2]}, {{{0, 1, 2}}});
  op.split = alfeld_split(one).mesh;
  op.conn = build_lagrange_connectivity(op.split, ell + 1);

  op.interior_index.assign(op.conn.num_nodes, -1);
  for (int z = 0; z < op.conn.num_nodes; ++z) {
    if (!op.conn.node_on_boundary[z]) op.interior_index[z] = op.n_interior++;
  }

  const int m = poly_space_dim(ell);
  const int nq = 3 * m;
  const int nv = 2 * op.n_interior;
  const TriangleBasis& vbasis = triangle_basis(ell + 1);
  const int n_loc = vbasis.size();
  const QuadRule rule = quad_triangle(2 * ell + 4);

  Eigen::MatrixXd gram_scalar = Eigen::MatrixXd::Zero(op.n_interior, op.n_interior);
  Eigen::MatrixXd constraint = Eigen::MatrixXd::Zero(nq, nv);
  Eigen::MatrixXd child_mass = Eigen::MatrixXd::Zero(nq, nq);
  Eigen::VectorXd mean_row = Eigen::VectorXd::Zero(nq);

  for (int t = 0; t < 3; ++t) {
    const AffineMap map = affine_map(op.split, t);
    for (int q = 0; q < rule.size(); ++q) {
      const double w = rule.weights[q] * map.jacobian_abs;
      const Eigen::Vector2d x = map.apply(rule.points[q]);  // in K_ref coordinates
      const Eigen::MatrixXd g = vbasis.grad_all(rule.points[q]) * map.inverse;

      Eigen::VectorXd mono(m);
      for (int k = 0, idx = 0; k <= ell; ++k) {
        for (int j = 0; j <= k; ++j, ++idx) mono[idx] = std::pow(x[0], k - j) * std::pow(x[1], j);
      }

      for (int i = 0; i < m; ++i) {
        mean_row[t * m + i] += w * mono[i];
        for (int j = 0; j < m; ++j) child_mass(t * m + i, t * m + j) += w * mono[i] * mono[j];
      }

      for (int a = 0; a < n_loc; ++a) {
        const int za = op.interior_index[op.conn.element_nodes[t][a]];
        if (za < 0) continue;
        for (int b = 0; b < n_loc; ++b) {
          const int zb = op.interior_index[op.conn.element_nodes[t][b]];
          if (zb < 0) continue;
          gram_scalar(za, zb) += w * g.row(a).dot(g.row(b));
        }
        for (int i = 0; i < m; ++i) {
          for (int c = 0; c < 2; ++c) {
            constraint(t * m + i, 2 * za + c) += w * mono[i] * g(a, c);
          }
        }
      }
    }
  }

  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(nv, nv);
  for (int i = 0; i < op.n_interior; ++i) {
    for (int j = 0; j < op.n_interior; ++j) {
      gram(2 * i, 2 * j) = gram_scalar(i, j);
      gram(2 * i + 1, 2 * j + 1) = gram_scalar(i, j);
    }
  }

  // KKT system with a gauge row pinning the multiplier along the constant
  // pressure direction (the one rank deficiency of the constraint).
  const int n_sys = nv + nq + 1;
  Eigen::MatrixXd sys = Eigen::MatrixXd::Zero(n_sys, n_sys);
  sys.block(0, 0, nv, nv) = gram;
  sys.block(nv, 0, nq, nv) = constraint;
  sys.block(0, nv, nv, nq) = constraint.transpose();
  Eigen::VectorXd gauge = Eigen::VectorXd::Zero(nq);
  for (int t = 0; t < 3; ++t) gauge[t * m + 0] = 1.0;  // constant monomial per child
  sys.block(nv, nv + nq, nq, 1) = gauge;
  sys.block(nv + nq, nv, 1, nq) = gauge.transpose();

  // The KKT matrix is moderately ill-conditioned for the higher lattice
  // degrees; the system is tiny, so factor in extended precision.
  using MatLD = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
  const MatLD sys_l = sys.cast<long double>();
  MatLD rhs_l = MatLD::Zero(n_sys, nq);
  rhs_l.block(nv, 0, nq, nq) = child_mass.cast<long double>();
  Eigen::PartialPivLU<MatLD> lu(sys_l);
  MatLD sol_l = lu.solve(rhs_l);
  sol_l += lu.solve(rhs_l - sys_l * sol_l);
  op.lift = sol_l.topRows(nv).cast<double>();

  // Verify the constraint: D * lift must equal the input moments up to the
  // gauge direction (a nonzero multiplier absorbs non-zero-mean input).
  Eigen::MatrixXd resid = constraint * op.lift - child_mass;
  resid -= gauge * (gauge.transpose() * resid) / gauge.squaredNorm();
  if (resid.norm() > 1e-10 * std::max(1.0, child_mass.norm())) {
    throw std::runtime_error("build_e3_ref: singular reference saddle system");
  }
  op.constraint = constraint;
  op.child_mass = child_mass;
  op.gradient_gram = gram;
  return op;
}

E4RefOperator build_e4_ref(int ell) {
  E4RefOperator op;
  op.ell = ell;
  if (ell < 3) return op;

  op.moment_basis = xperp_basis(ell - 3);
  const Poly2 bubble = barycentric_poly(0) * barycentric_poly(1) * barycentric_poly(2);
  const Poly2 bubble_sq = bubble * bubble;
  const int n = static_cast<int>(op.moment_basis.size());
  op.system.resize(n, n);
  std::vector<Poly2> rots;
  for (const VecPoly2& mb : op.moment_basis) rots.push_back(rot_vector(mb));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      op.system(i, j) = (rots[i] * rots[j] * bubble_sq).integral_ref_triangle();
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(op.system);
  if (es.eigenvalues().minCoeff() <= 0.0) {
    throw std::runtime_error("build_e4_ref: weighted Gram is not positive definite");
  }
  for (int j = 0; j < n; ++j) {
    op.render.push_back(curl_scalar(bubble_sq * rots[j]));
  }
  return op;
}

// ---------------------------------------------------------------------------
// Smoother construction

Smoother::Smoother(const TriangleMesh& mesh, int ell, SmootherVariant variant)
    : mesh_(&mesh), ell_(ell), variant_(variant) {
  require_supported_degree(ell);

  AlfeldSplit split = alfeld_split(mesh);
  companion_.mesh = std::move(split.mesh);
  companion_.parent = std::move(split.parent);
  companion_.child_maps.reserve(companion_.mesh.num_triangles());
  for (int c = 0; c < companion_.mesh.num_triangles(); ++c) {
    companion_.child_maps.push_back(affine_map(companion_.mesh, c));
  }

  conn_ = build_lagrange_connectivity(mesh, ell);
  elem_maps_.reserve(mesh.num_triangles());
  for (int k = 0; k < mesh.num_triangles(); ++k) elem_maps_.push_back(affine_map(mesh, k));

  interior_face_index_.assign(mesh.num_faces(), -1);
  for (int f = 0; f < mesh.num_faces(); ++f) {
    if (!mesh.faces[f].is_boundary()) {
      interior_face_index_[f] = static_cast<int>(interior_faces_.size());
      interior_faces_.push_back(f);
    }
  }

  face_sides_.assign(mesh.num_faces(), {});
  for (int f = 0; f < mesh.num_faces(); ++f) {
    const Face& face = mesh.faces[f];
    const int elems[2] = {face.first_element, face.second_element};
    for (int s = 0; s < 2; ++s) {
      if (elems[s] < 0) continue;
      FaceSideInfo info;
      info.element = elems[s];
      info.local_edge = -1;
      for (int e = 0; e < 3; ++e) {
        if (mesh.element_to_faces[elems[s]][e] == f) info.local_edge = e;
      }
      const int p = mesh.triangles[elems[s]][(info.local_edge + 1) % 3];
      info.flip = (p != face.vertices[0]);
      face_sides_[f][s] = info;
    }
  }

  for (int t = 0; t < 3; ++t) ref_child_maps_[t] = child_sector_map(t);

  build_reference_tables();
  build_stage_maps();
}

void Smoother::build_reference_tables() {
  const int ell = ell_;
  const int m_ell = poly_space_dim(ell);
  const TriangleBasis& basis = triangle_basis(ell);
  const TriangleBasis& basis_ext = triangle_basis(ell - 1);  // E2 extension / pressure
  const TriangleBasis& basis_lift = triangle_basis(ell + 1);
  const TriangleBasis& basis_out = triangle_basis(ell + 2);
  const EdgeBasis& psi = edge_basis(ell - 1);
  const int n_loc = basis.size();
  const int m_lo = basis_ext.size();
  const int n_out = basis_out.size();
  const Poly2 lam[3] = {barycentric_poly(0), barycentric_poly(1), barycentric_poly(2)};
  const Poly2 cubic_bubble = lam[0] * lam[1] * lam[2];

  e3_ref_ = std::make_shared<const E3RefOperator>(build_e3_ref(ell));
  e4_ref_ = std::make_shared<const E4RefOperator>(build_e4_ref(ell));
  const int n4 = static_cast<int>(e4_ref_->moment_basis.size());

  // Render-node coordinates per child, in parent reference coordinates.
  std::array<std::vector<Eigen::Vector2d>, 3> render_nodes;
  for (int t = 0; t < 3; ++t) {
    for (const LatticeNode& n : basis_out.nodes()) {
      render_nodes[t].push_back(ref_child_maps_[t].apply(n.point));
    }
  }

  for (int t = 0; t < 3; ++t) {
    render_conf_[t].resize(n_out, n_loc);
    for (int n = 0; n < n_out; ++n) {
      render_conf_[t].row(n) = basis.eval_all(render_nodes[t][n]).transpose();
    }
  }
  render_lift_.resize(n_out, basis_lift.size());
  for (int n = 0; n < n_out; ++n) {
    render_lift_.row(n) = basis_lift.eval_all(basis_out.nodes()[n].point).transpose();
  }

  // Face-bubble tables per (local edge, orientation, face node).
  for (int e = 0; e < 3; ++e) {
    const int p = (e + 1) % 3, q = (e + 2) % 3;
    const Poly2 face_bubble = lam[p] * lam[q];
    for (int flip = 0; flip < 2; ++flip) {
      auto& list = bumps_[e][flip];
      list.clear();
      list.resize(ell);
      for (int z = 0; z < ell; ++z) {
        BumpTable& bt = list[z];
        Poly2 ext;
        if (ell == 1) {
          ext = Poly2::constant(1.0);
        } else {
          // Lattice node on edge e whose edge parameter, measured from face
          // vertex A to B, is z/(ell-1).
          const int toward_b = z;
          int bp, bq;
          if (!flip) {
            bq = toward_b;
            bp = (ell - 1) - toward_b;
          } else {
            bp = toward_b;
            bq = (ell - 1) - toward_b;
          }
          int bary[3] = {0, 0, 0};
          bary[p] = bp;
          bary[q] = bq;
          const int node = basis_ext.find_node(bary[0], bary[1], bary[2]);
          if (node < 0) throw std::logic_error("face node lookup failed");
          ext = basis_ext.basis_poly(node);
        }
        bt.poly = ext * face_bubble;
        bt.dcoeffs[0] = poly_coeffs(bt.poly.dx(), m_ell);
        bt.dcoeffs[1] = poly_coeffs(bt.poly.dy(), m_ell);
        for (int t = 0; t < 3; ++t) {
          bt.node_vals[t].resize(n_out);
          for (int n = 0; n < n_out; ++n) bt.node_vals[t][n] = bt.poly.eval(render_nodes[t][n]);
        }
        if (n4 > 0) {
          bt.e4_moments.resize(n4, 2);
          for (int j = 0; j < n4; ++j) {
            bt.e4_moments(j, 0) =
                (bt.poly * e4_ref_->moment_basis[j].x).integral_ref_triangle();
            bt.e4_moments(j, 1) =
                (bt.poly * e4_ref_->moment_basis[j].y).integral_ref_triangle();
          }
        }
        if (ell >= 2) {
          const int dimb = poly_space_dim(ell - 2);
          bt.bubble_moments.resize(dimb);
          for (int m = 0; m < dimb; ++m) {
            auto [mi, mj] = monomial_exponents(m);
            bt.bubble_moments[m] =
                (bt.poly * Poly2::monomial(mi, mj)).integral_ref_triangle();
          }
        }
      }
    }
  }

  // Weighted edge mass int psi_m psi_n t(1-t) dt, shared by all faces.
  {
    const QuadRule rule = quad_edge(2 * ell + 2);
    Eigen::MatrixXd mass = Eigen::MatrixXd::Zero(ell, ell);
    for (int q = 0; q < rule.size(); ++q) {
      const double t = rule.points[q][0];
      const Eigen::VectorXd pv = psi.eval_all(t);
      mass += rule.weights[q] * t * (1.0 - t) * (pv * pv.transpose());
    }
    face_mass_inv_ = mass.inverse();
  }

  // Trace moments int psi_m(t) phi_a(edge point(t)) dt per edge/orientation.
  {
    const QuadRule rule = quad_edge(2 * ell + 2);
    for (int e = 0; e < 3; ++e) {
      const Eigen::Vector2d P = kRefVerts[(e + 1) % 3];
      const Eigen::Vector2d Q = kRefVerts[(e + 2) % 3];
      for (int flip = 0; flip < 2; ++flip) {
        Eigen::MatrixXd tm = Eigen::MatrixXd::Zero(ell, n_loc);
        for (int q = 0; q < rule.size(); ++q) {
          const double t = rule.points[q][0];
          const Eigen::Vector2d x = flip ? Eigen::Vector2d(Q + t * (P - Q))
                                         : Eigen::Vector2d(P + t * (Q - P));
          tm += rule.weights[q] * psi.eval_all(t) * basis.eval_all(x).transpose();
        }
        trace_moments_[e][flip] = tm;
      }
    }
  }

  ell_monomial_integrals_.resize(m_ell);
  for (int k = 0, idx = 0; k <= ell; ++k) {
    for (int j = 0; j <= k; ++j, ++idx) {
      ell_monomial_integrals_[idx] = ref_triangle_monomial_integral(k - j, j);
    }
  }

  // Pressure nodal mass and the conversion to P_ell monomial coefficients.
  {
    Eigen::MatrixXd mass(m_lo, m_lo);
    for (int m = 0; m < m_lo; ++m) {
      for (int n = 0; n < m_lo; ++n) {
        mass(m, n) =
            (basis_ext.basis_poly(m) * basis_ext.basis_poly(n)).integral_ref_triangle();
      }
    }
    pmass_inv_ = mass.inverse();
    conv_pressure_.resize(m_ell, m_lo);
    for (int n = 0; n < m_lo; ++n) {
      conv_pressure_.col(n) = poly_coeffs(basis_ext.basis_poly(n), m_ell);
    }
  }

  for (int k = 0; k < 2; ++k) {
    div_moments_[k].resize(m_lo, n_loc);
    dphi_coeffs_[k].resize(m_ell, n_loc);
    for (int a = 0; a < n_loc; ++a) {
      const Poly2 d = k == 0 ? basis.basis_poly(a).dx() : basis.basis_poly(a).dy();
      dphi_coeffs_[k].col(a) = poly_coeffs(d, m_ell);
      for (int m = 0; m < m_lo; ++m) {
        div_moments_[k](m, a) = (basis_ext.basis_poly(m) * d).integral_ref_triangle();
      }
    }
  }

  {
    const int m = m_ell;
    Eigen::MatrixXd embed = Eigen::MatrixXd::Zero(3 * m, m);
    for (int t = 0; t < 3; ++t) embed.block(t * m, 0, m, m).setIdentity();
    lift_global_ = e3_ref_->lift * embed;
  }

  if (n4 > 0) {
    a4_inv_ = e4_ref_->system.inverse();

    e4_basis_moments_.resize(n4);
    for (int j = 0; j < n4; ++j) {
      e4_basis_moments_[j].resize(n_loc, 2);
      for (int a = 0; a < n_loc; ++a) {
        e4_basis_moments_[j](a, 0) =
            (basis.basis_poly(a) * e4_ref_->moment_basis[j].x).integral_ref_triangle();
        e4_basis_moments_[j](a, 1) =
            (basis.basis_poly(a) * e4_ref_->moment_basis[j].y).integral_ref_triangle();
      }
    }

    e4_node_vals_.resize(n4);
    for (int j = 0; j < n4; ++j) {
      for (int t = 0; t < 3; ++t) {
        e4_node_vals_[j][t].resize(n_out);
        for (int n = 0; n < n_out; ++n) {
          e4_node_vals_[j][t][n] = e4_ref_->render[j].eval(render_nodes[t][n]);
        }
      }
    }

    // Y_{j,m} = int_{M_ref} (lift column m) . m_j over the three children.
    const TriangleBasis& vbasis = basis_lift;
    const QuadRule rule = quad_triangle(2 * ell + 4);
    e4_moment_lift_ = Eigen::MatrixXd::Zero(n4, m_ell);
    for (int t = 0; t < 3; ++t) {
      const AffineMap& gt = ref_child_maps_[t];
      for (int q = 0; q < rule.size(); ++q) {
        const double w = rule.weights[q] * gt.jacobian_abs;
        const Eigen::Vector2d x = gt.apply(rule.points[q]);
        const Eigen::VectorXd phi = vbasis.eval_all(rule.points[q]);
        for (int col = 0; col < m_ell; ++col) {
          Eigen::Vector2d val = Eigen::Vector2d::Zero();
          for (int b = 0; b < vbasis.size(); ++b) {
            const int zi = e3_ref_->interior_index[e3_ref_->conn.element_nodes[t][b]];
            if (zi < 0) continue;
            val[0] += lift_global_(2 * zi, col) * phi[b];
            val[1] += lift_global_(2 * zi + 1, col) * phi[b];
          }
          for (int j = 0; j < n4; ++j) {
            e4_moment_lift_(j, col) += w * val.dot(e4_ref_->moment_basis[j].eval(x));
          }
        }
      }
    }
  }

  if (ell >= 2) {
    const int dimb = poly_space_dim(ell - 2);
    Eigen::MatrixXd mass(dimb, dimb);
    for (int i = 0; i < dimb; ++i) {
      for (int j = 0; j < dimb; ++j) {
        auto [ia, ja] = monomial_exponents(i);
        auto [ib, jb] = monomial_exponents(j);
        mass(i, j) = (Poly2::monomial(ia + ib, ja + jb) * cubic_bubble).integral_ref_triangle();
      }
    }
    bubble_mass_inv_ = mass.inverse();

    Eigen::MatrixXd moments(dimb, n_loc);
    for (int m = 0; m < dimb; ++m) {
      auto [mi, mj] = monomial_exponents(m);
      for (int a = 0; a < n_loc; ++a) {
        moments(m, a) = (basis.basis_poly(a) * Poly2::monomial(mi, mj)).integral_ref_triangle();
      }
    }
    bubble_proj_ = bubble_mass_inv_ * moments;

    bubble_node_vals_.resize(dimb);
    for (int m = 0; m < dimb; ++m) {
      auto [mi, mj] = monomial_exponents(m);
      const Poly2 field = Poly2::monomial(mi, mj) * cubic_bubble;
      for (int t = 0; t < 3; ++t) {
        bubble_node_vals_[m][t].resize(n_out);
        for (int n = 0; n < n_out; ++n) {
          bubble_node_vals_[m][t][n] = field.eval(render_nodes[t][n]);
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Stage maps

void Smoother::build_stage_maps() {
  const int ell = ell_;
  const TriangleMesh& mesh = *mesh_;
  const TriangleBasis& basis = triangle_basis(ell);
  const TriangleBasis& basis_ext = triangle_basis(ell - 1);
  const int n_loc = basis.size();
  const int m_lo = basis_ext.size();
  const int m_ell = poly_space_dim(ell);
  const int n4 = static_cast<int>(e4_ref_->moment_basis.size());
  const int dimb = ell >= 2 ? poly_space_dim(ell - 2) : 0;
  const int n_k = mesh.num_triangles();
  const int n_if = static_cast<int>(interior_faces_.size());

  n_broken_ = 2 * n_k * n_loc;
  n_conf_ = 2 * conn_.num_nodes;
  n_face_ = 2 * ell * n_if;
  n_defect_ = m_ell * n_k;
  n_gamma_ = n4 * n_k;
  n_bubble_ = 2 * dimb * n_k;

  auto vdof = [&](int k, int a, int c) { return (k * n_loc + a) * 2 + c; };
  auto gdof = [&](int z, int c) { return 2 * z + c; };
  auto cdof = [&](int fi, int z, int c) { return (fi * ell + z) * 2 + c; };
  auto qdof = [&](int k, int m) { return k * m_ell + m; };

  using Trip = Eigen::Triplet<double>;
  auto push = [](std::vector<Trip>& v, int r, int c, double val) {
    if (std::abs(val) > 1e-14) v.emplace_back(r, c, val);
  };

  // E1: nodal averaging into the conforming space, zero on the boundary.
  {
    std::vector<Trip> trips;
    for (int k = 0; k < n_k; ++k) {
      for (int a = 0; a < n_loc; ++a) {
        const int z = conn_.element_nodes[k][a];
        if (conn_.node_on_boundary[z]) continue;
        const double w = 1.0 / conn_.node_multiplicity[z];
        for (int c = 0; c < 2; ++c) push(trips, gdof(z, c), vdof(k, a, c), w);
      }
    }
    N1_.resize(n_conf_, n_broken_);
    N1_.setFromTriplets(trips.begin(), trips.end());
  }

  // E2: per interior face, the weighted-mass solve for the bubble
  // coefficients of {v} - E1 v.
  {
    std::vector<Trip> tv, tg;
    for (int fi = 0; fi < n_if; ++fi) {
      const int f = interior_faces_[fi];
      for (int s = 0; s < 2; ++s) {
        const FaceSideInfo& side = face_sides_[f][s];
        const Eigen::MatrixXd block =
            0.5 * (face_mass_inv_ * trace_moments_[side.local_edge][side.flip]);
        for (int z = 0; z < ell; ++z) {
          for (int a = 0; a < n_loc; ++a) {
            for (int c = 0; c < 2; ++c) {
              push(tv, cdof(fi, z, c), vdof(side.element, a, c), block(z, a));
            }
          }
        }
      }
      // E1 v restricted to the face, seen from the first side.
      const FaceSideInfo& side = face_sides_[f][0];
      const Eigen::MatrixXd block =
          face_mass_inv_ * trace_moments_[side.local_edge][side.flip];
      for (int z = 0; z < ell; ++z) {
        for (int a = 0; a < n_loc; ++a) {
          const int zn = conn_.element_nodes[side.element][a];
          for (int c = 0; c < 2; ++c) {
            push(tg, cdof(fi, z, c), gdof(zn, c), -block(z, a));
          }
        }
      }
    }
    Cv_.resize(n_face_, n_broken_);
    Cv_.setFromTriplets(tv.begin(), tv.end());
    Cg_.resize(n_face_, n_conf_);
    Cg_.setFromTriplets(tg.begin(), tg.end());
  }

  // Defect coefficients: q_K = J_K * [(Div_dG v - Div(E1+E2)v) o F_K] in the
  // monomial basis of P_ell.
  {
    std::vector<Trip> tv, tg, tc;
    const QuadRule edge_rule = quad_edge(2 * ell + 2);
    const Eigen::MatrixXd conv = conv_pressure_ * pmass_inv_;

    for (int k = 0; k < n_k; ++k) {
      const AffineMap& map = elem_maps_[k];
      const double jac = map.jacobian_abs;

      // Div_dG: volume part, int_K chi_m d_c phi_a.
      for (int a = 0; a < n_loc; ++a) {
        for (int c = 0; c < 2; ++c) {
          Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m_lo);
          for (int kk = 0; kk < 2; ++kk) {
            rhs += jac * map.inverse_t(c, kk) * div_moments_[kk].col(a);
          }
          const Eigen::VectorXd col = conv * rhs;
          for (int m = 0; m < m_ell; ++m) push(tv, qdof(k, m), vdof(k, a, c), col[m]);
        }
      }

      // Div_dG: face part, -int_F [v].n {chi_m}.
      for (int e = 0; e < 3; ++e) {
        const int f = mesh.element_to_faces[k][e];
        const Face& face = mesh.faces[f];
        const double omega = face.is_boundary() ? 1.0 : 0.5;
        const Eigen::Vector2d A = mesh.vertices[face.vertices[0]];
        const Eigen::Vector2d B = mesh.vertices[face.vertices[1]];
        const int elems[2] = {face.first_element, face.second_element};
        const double signs[2] = {1.0, -1.0};
        for (int s = 0; s < 2; ++s) {
          if (elems[s] < 0) continue;
          const AffineMap& smap = elem_maps_[elems[s]];
          Eigen::MatrixXd contrib = Eigen::MatrixXd::Zero(m_lo, n_loc);
          for (int q = 0; q < edge_rule.size(); ++q) {
            const double t = edge_rule.points[q][0];
            const Eigen::Vector2d x = A + t * (B - A);
            const Eigen::VectorXd chi = basis_ext.eval_all(map.apply_inverse(x));
            const Eigen::VectorXd phi = basis.eval_all(smap.apply_inverse(x));
            contrib += edge_rule.weights[q] * face.diameter * (chi * phi.transpose());
          }
          const Eigen::MatrixXd cols = conv * contrib;  // (m_ell x n_loc)
          for (int a = 0; a < n_loc; ++a) {
            for (int c = 0; c < 2; ++c) {
              const double factor = -signs[s] * omega * face.normal[c];
              for (int m = 0; m < m_ell; ++m) {
                push(tv, qdof(k, m), vdof(elems[s], a, c), factor * cols(m, a));
              }
            }
          }
        }
      }

      // -J * Div(E1 v) o F_K.
      for (int a = 0; a < n_loc; ++a) {
        const int zn = conn_.element_nodes[k][a];
        for (int c = 0; c < 2; ++c) {
          Eigen::VectorXd col = Eigen::VectorXd::Zero(m_ell);
          for (int kk = 0; kk < 2; ++kk) {
            col -= jac * map.inverse_t(c, kk) * dphi_coeffs_[kk].col(a);
          }
          for (int m = 0; m < m_ell; ++m) push(tg, qdof(k, m), gdof(zn, c), col[m]);
        }
      }

      // -J * Div(E2 v) o F_K.
      for (int e = 0; e < 3; ++e) {
        const int f = mesh.element_to_faces[k][e];
        const int fi = interior_face_index_[f];
        if (fi < 0) continue;
        const FaceSideInfo& side =
            face_sides_[f][face_sides_[f][0].element == k ? 0 : 1];
        for (int z = 0; z < ell; ++z) {
          const BumpTable& bt = bumps_[side.local_edge][side.flip ? 1 : 0][z];
          for (int c = 0; c < 2; ++c) {
            Eigen::VectorXd col = Eigen::VectorXd::Zero(m_ell);
            for (int kk = 0; kk < 2; ++kk) {
              col -= jac * map.inverse_t(c, kk) * bt.dcoeffs[kk];
            }
            for (int m = 0; m < m_ell; ++m) push(tc, qdof(k, m), cdof(fi, z, c), col[m]);
          }
        }
      }
    }
    Qv_.resize(n_defect_, n_broken_);
    Qv_.setFromTriplets(tv.begin(), tv.end());
    Qg_.resize(n_defect_, n_conf_);
    Qg_.setFromTriplets(tg.begin(), tg.end());
    Qc_.resize(n_defect_, n_face_);
    Qc_.setFromTriplets(tc.begin(), tc.end());
  }

  // Rotational moments (ell >= 3): gamma_K solves the weighted-rotation
  // system against the x-perp moments of the residual pullback.
  if (n4 > 0) {
    std::vector<Trip> tv, tg, tc, tq;
    auto gdof4 = [&](int k, int j) { return k * n4 + j; };
    for (int k = 0; k < n_k; ++k) {
      const AffineMap& map = elem_maps_[k];
      const double jac = map.jacobian_abs;

      // Moments of J DF^{-1} (u o F) = u . (J DF^{-T} m_j) for basis fields.
      Eigen::MatrixXd mom_v = Eigen::MatrixXd::Zero(n4, 2 * n_loc);
      for (int j = 0; j < n4; ++j) {
        for (int a = 0; a < n_loc; ++a) {
          for (int c = 0; c < 2; ++c) {
            double val = 0.0;
            for (int cp = 0; cp < 2; ++cp) {
              val += jac * map.inverse_t(c, cp) * e4_basis_moments_[j](a, cp);
            }
            mom_v(j, 2 * a + c) = val;
          }
        }
      }
      const Eigen::MatrixXd rows_v = a4_inv_ * mom_v;
      for (int j = 0; j < n4; ++j) {
        for (int a = 0; a < n_loc; ++a) {
          for (int c = 0; c < 2; ++c) {
            push(tv, gdof4(k, j), vdof(k, a, c), rows_v(j, 2 * a + c));
            const int zn = conn_.element_nodes[k][a];
            push(tg, gdof4(k, j), gdof(zn, c), -rows_v(j, 2 * a + c));
          }
        }
      }

      for (int e = 0; e < 3; ++e) {
        const int f = mesh.element_to_faces[k][e];
        const int fi = interior_face_index_[f];
        if (fi < 0) continue;
        const FaceSideInfo& side =
            face_sides_[f][face_sides_[f][0].element == k ? 0 : 1];
        for (int z = 0; z < ell; ++z) {
          const BumpTable& bt = bumps_[side.local_edge][side.flip ? 1 : 0][z];
          Eigen::MatrixXd mom_c = Eigen::MatrixXd::Zero(n4, 2);
          for (int j = 0; j < n4; ++j) {
            for (int c = 0; c < 2; ++c) {
              for (int cp = 0; cp < 2; ++cp) {
                mom_c(j, c) -= jac * map.inverse_t(c, cp) * bt.e4_moments(j, cp);
              }
            }
          }
          const Eigen::MatrixXd rows_c = a4_inv_ * mom_c;
          for (int j = 0; j < n4; ++j) {
            for (int c = 0; c < 2; ++c) {
              push(tc, gdof4(k, j), cdof(fi, z, c), rows_c(j, c));
            }
          }
        }
      }

      const Eigen::MatrixXd rows_q = -(a4_inv_ * e4_moment_lift_);
      for (int j = 0; j < n4; ++j) {
        for (int m = 0; m < m_ell; ++m) {
          push(tq, gdof4(k, j), qdof(k, m), rows_q(j, m));
        }
      }
    }
    Gv_.resize(n_gamma_, n_broken_);
    Gv_.setFromTriplets(tv.begin(), tv.end());
    Gg_.resize(n_gamma_, n_conf_);
    Gg_.setFromTriplets(tg.begin(), tg.end());
    Gc_.resize(n_gamma_, n_face_);
    Gc_.setFromTriplets(tc.begin(), tc.end());
    Gq_.resize(n_gamma_, n_defect_);
    Gq_.setFromTriplets(tq.begin(), tq.end());
  }

  // Interior-bubble moment fix (quasi-optimal variant, ell >= 2).
  if (dimb > 0) {
    std::vector<Trip> tv, tg, tc;
    auto bdof = [&](int k, int m, int c) { return (k * dimb + m) * 2 + c; };
    for (int k = 0; k < n_k; ++k) {
      for (int m = 0; m < dimb; ++m) {
        for (int a = 0; a < n_loc; ++a) {
          const int zn = conn_.element_nodes[k][a];
          for (int c = 0; c < 2; ++c) {
            push(tv, bdof(k, m, c), vdof(k, a, c), bubble_proj_(m, a));
            push(tg, bdof(k, m, c), gdof(zn, c), -bubble_proj_(m, a));
          }
        }
      }
      for (int e = 0; e < 3; ++e) {
        const int f = mesh.element_to_faces[k][e];
        const int fi = interior_face_index_[f];
        if (fi < 0) continue;
        const FaceSideInfo& side =
            face_sides_[f][face_sides_[f][0].element == k ? 0 : 1];
        for (int z = 0; z < ell; ++z) {
          const BumpTable& bt = bumps_[side.local_edge][side.flip ? 1 : 0][z];
          const Eigen::VectorXd col = -(bubble_mass_inv_ * bt.bubble_moments);
          for (int m = 0; m < dimb; ++m) {
            for (int c = 0; c < 2; ++c) {
              push(tc, bdof(k, m, c), cdof(fi, z, c), col[m]);
            }
          }
        }
      }
    }
    Pv_.resize(n_bubble_, n_broken_);
    Pv_.setFromTriplets(tv.begin(), tv.end());
    Pg_.resize(n_bubble_, n_conf_);
    Pg_.setFromTriplets(tg.begin(), tg.end());
    Pc_.resize(n_bubble_, n_face_);
    Pc_.setFromTriplets(tc.begin(), tc.end());
  }
}

// ---------------------------------------------------------------------------
// Forward pass and rendering

Smoother::StageCoeffs Smoother::forward(const BrokenField& v) const {
  StageCoeffs s;
  s.g = N1_ * v.coeffs();
  s.c = Cv_ * v.coeffs() + Cg_ * s.g;
  const int m_ell = poly_space_dim(ell_);
  if (variant_ == SmootherVariant::PressureRobust) {
    s.q = Qv_ * v.coeffs() + Qg_ * s.g + Qc_ * s.c;
    for (int k = 0; k < mesh_->num_triangles(); ++k) {
      const double mean = s.q.segment(k * m_ell, m_ell).dot(ell_monomial_integrals_);
      const double scale = 1.0 + s.q.segment(k * m_ell, m_ell).lpNorm<Eigen::Infinity>();
      if (std::abs(mean) > 1e-10 * scale) {
        throw std::runtime_error("face-moment preservation violated upstream");
      }
    }
    if (n_gamma_ > 0) {
      s.gamma = Gv_ * v.coeffs() + Gg_ * s.g + Gc_ * s.c + Gq_ * s.q;
    }
  } else if (variant_ == SmootherVariant::QuasiOptimal && n_bubble_ > 0) {
    s.beta = Pv_ * v.coeffs() + Pg_ * s.g + Pc_ * s.c;
  }
  return s;
}

void Smoother::render_identity(const BrokenField& v, SmoothedField& out) const {
  const int n_loc = triangle_basis(ell_).size();
  const int n_out = triangle_basis(ell_ + 2).size();
  Eigen::MatrixXd vloc(n_loc, 2);
  for (int k = 0; k < mesh_->num_triangles(); ++k) {
    for (int a = 0; a < n_loc; ++a) {
      vloc(a, 0) = v.coeffs()[v.dof(k, a, 0)];
      vloc(a, 1) = v.coeffs()[v.dof(k, a, 1)];
    }
    for (int t = 0; t < 3; ++t) {
      const Eigen::MatrixXd vals = render_conf_[t] * vloc;
      const int child = 3 * k + t;
      for (int n = 0; n < n_out; ++n) {
        out.values()[out.dof(child, n, 0)] += vals(n, 0);
        out.values()[out.dof(child, n, 1)] += vals(n, 1);
      }
    }
  }
}

void Smoother::render_conforming(const Eigen::VectorXd& g, SmoothedField& out) const {
  const int n_loc = triangle_basis(ell_).size();
  const int n_out = triangle_basis(ell_ + 2).size();
  Eigen::MatrixXd gloc(n_loc, 2);
  for (int k = 0; k < mesh_->num_triangles(); ++k) {
    for (int a = 0; a < n_loc; ++a) {
      const int z = conn_.element_nodes[k][a];
      gloc(a, 0) = g[2 * z];
      gloc(a, 1) = g[2 * z + 1];
    }
    for (int t = 0; t < 3; ++t) {
      const Eigen::MatrixXd vals = render_conf_[t] * gloc;
      const int child = 3 * k + t;
      for (int n = 0; n < n_out; ++n) {
        out.values()[out.dof(child, n, 0)] += vals(n, 0);
        out.values()[out.dof(child, n, 1)] += vals(n, 1);
      }
    }
  }
}

void Smoother::render_face_bubbles(const Eigen::VectorXd& c, SmoothedField& out) const {
  const int n_out = triangle_basis(ell_ + 2).size();
  for (int fi = 0; fi < static_cast<int>(interior_faces_.size()); ++fi) {
    const int f = interior_faces_[fi];
    for (int s = 0; s < 2; ++s) {
      const FaceSideInfo& side = face_sides_[f][s];
      for (int z = 0; z < ell_; ++z) {
        const BumpTable& bt = bumps_[side.local_edge][side.flip ? 1 : 0][z];
        const double cx = c[(fi * ell_ + z) * 2 + 0];
        const double cy = c[(fi * ell_ + z) * 2 + 1];
        for (int t = 0; t < 3; ++t) {
          const int child = 3 * side.element + t;
          for (int n = 0; n < n_out; ++n) {
            out.values()[out.dof(child, n, 0)] += cx * bt.node_vals[t][n];
            out.values()[out.dof(child, n, 1)] += cy * bt.node_vals[t][n];
          }
        }
      }
    }
  }
}

void Smoother::render_divergence_lift(const Eigen::VectorXd& q, SmoothedField& out) const {
  const int m_ell = poly_space_dim(ell_);
  const int n_out = triangle_basis(ell_ + 2).size();
  const int n_lift = static_cast<int>(render_lift_.cols());
  Eigen::MatrixXd nodal(n_lift, 2);
  for (int k = 0; k < mesh_->num_triangles(); ++k) {
    const Eigen::VectorXd lifted = lift_global_ * q.segment(k * m_ell, m_ell);
    const AffineMap& map = elem_maps_[k];
    const Eigen::Matrix2d push = map.matrix / map.jacobian_abs;
    for (int t = 0; t < 3; ++t) {
      for (int b = 0; b < n_lift; ++b) {
        const int zi = e3_ref_->interior_index[e3_ref_->conn.element_nodes[t][b]];
        nodal(b, 0) = zi >= 0 ? lifted[2 * zi] : 0.0;
        nodal(b, 1) = zi >= 0 ? lifted[2 * zi + 1] : 0.0;
      }
      const Eigen::MatrixXd ref_vals = render_lift_ * nodal;  // (n_out x 2)
      const int child = 3 * k + t;
      for (int n = 0; n < n_out; ++n) {
        const Eigen::Vector2d phys = push * ref_vals.row(n).transpose();
        out.values()[out.dof(child, n, 0)] += phys[0];
        out.values()[out.dof(child, n, 1)] += phys[1];
      }
    }
  }
}

void Smoother::render_rotational(const Eigen::VectorXd& gamma, SmoothedField& out) const {
  const int n4 = static_cast<int>(e4_ref_->moment_basis.size());
  if (n4 == 0) return;
  const int n_out = triangle_basis(ell_ + 2).size();
  for (int k = 0; k < mesh_->num_triangles(); ++k) {
    const AffineMap& map = elem_maps_[k];
    const Eigen::Matrix2d push = map.matrix / map.jacobian_abs;
    for (int t = 0; t < 3; ++t) {
      const int child = 3 * k + t;
      for (int n = 0; n < n_out; ++n) {
        Eigen::Vector2d val = Eigen::Vector2d::Zero();
        for (int j = 0; j < n4; ++j) val += gamma[k * n4 + j] * e4_node_vals_[j][t][n];
        const Eigen::Vector2d phys = push * val;
        out.values()[out.dof(child, n, 0)] += phys[0];
        out.values()[out.dof(child, n, 1)] += phys[1];
      }
    }
  }
}

void Smoother::render_interior_bubbles(const Eigen::VectorXd& beta,
                                       SmoothedField& out) const {
  const int dimb = ell_ >= 2 ? poly_space_dim(ell_ - 2) : 0;
  if (dimb == 0) return;
  const int n_out = triangle_basis(ell_ + 2).size();
  for (int k = 0; k < mesh_->num_triangles(); ++k) {
    for (int t = 0; t < 3; ++t) {
      const int child = 3 * k + t;
      for (int n = 0; n < n_out; ++n) {
        for (int c = 0; c < 2; ++c) {
          double val = 0.0;
          for (int m = 0; m < dimb; ++m) {
            val += beta[(k * dimb + m) * 2 + c] * bubble_node_vals_[m][t][n];
          }
          out.values()[out.dof(child, n, c)] += val;
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Public operations

SmoothedField Smoother::apply_e1(const BrokenField& v) const {
  SmoothedField out(companion_, ell_ + 2, true);
  render_conforming(N1_ * v.coeffs(), out);
  return out;
}

SmoothedField Smoother::apply_e2(const BrokenField& v, const SmoothedField& e1v) const {
  if (e1v.values().size() != 2 * companion_.mesh.num_triangles() *
                                 triangle_basis(ell_ + 2).size()) {
    throw std::invalid_argument("apply_e2: companion field size mismatch");
  }
  const Eigen::VectorXd g = N1_ * v.coeffs();
  SmoothedField out(companion_, ell_ + 2, true);
  render_face_bubbles(Cv_ * v.coeffs() + Cg_ * g, out);
  return out;
}

SmoothedField Smoother::apply_e3(const BrokenField& v, const SmoothedField&) const {
  const Eigen::VectorXd g = N1_ * v.coeffs();
  const Eigen::VectorXd c = Cv_ * v.coeffs() + Cg_ * g;
  const Eigen::VectorXd q = Qv_ * v.coeffs() + Qg_ * g + Qc_ * c;
  const int m_ell = poly_space_dim(ell_);
  for (int k = 0; k < mesh_->num_triangles(); ++k) {
    const double mean = q.segment(k * m_ell, m_ell).dot(ell_monomial_integrals_);
    const double scale = 1.0 + q.segment(k * m_ell, m_ell).lpNorm<Eigen::Infinity>();
    if (std::abs(mean) > 1e-10 * scale) {
      throw std::runtime_error("face-moment preservation violated upstream");
    }
  }
  SmoothedField out(companion_, ell_ + 2, true);
  render_divergence_lift(q, out);
  return out;
}

SmoothedField Smoother::apply_e4(const BrokenField& v, const SmoothedField&) const {
  SmoothedField out(companion_, ell_ + 2, true);
  if (n_gamma_ == 0) return out;  // zero increment for ell in {1,2}
  const Eigen::VectorXd g = N1_ * v.coeffs();
  const Eigen::VectorXd c = Cv_ * v.coeffs() + Cg_ * g;
  const Eigen::VectorXd q = Qv_ * v.coeffs() + Qg_ * g + Qc_ * c;
  const Eigen::VectorXd gamma = Gv_ * v.coeffs() + Gg_ * g + Gc_ * c + Gq_ * q;
  render_rotational(gamma, out);
  return out;
}

SmoothedField Smoother::smooth(const BrokenField& v) const {
  if (v.degree() != ell_ || &v.mesh() != mesh_) {
    throw std::invalid_argument("smooth: field does not match the smoother");
  }
  if (variant_ == SmootherVariant::Identity) {
    SmoothedField out(companion_, ell_ + 2, false);
    render_identity(v, out);
    return out;
  }
  const StageCoeffs s = forward(v);
  SmoothedField out(companion_, ell_ + 2, true);
  render_conforming(s.g, out);
  render_face_bubbles(s.c, out);
  if (variant_ == SmootherVariant::PressureRobust) {
    render_divergence_lift(s.q, out);
    if (n_gamma_ > 0) render_rotational(s.gamma, out);
  } else if (n_bubble_ > 0) {
    render_interior_bubbles(s.beta, out);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Load moments

Eigen::VectorXd Smoother::load_moments_conforming(const ChildLoadData& load) const {
  const TriangleBasis& basis = triangle_basis(ell_);
  const int n_loc = basis.size();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(n_conf_);
  for (int k = 0; k < mesh_->num_triangles(); ++k) {
    const AffineMap& map = elem_maps_[k];
    for (int t = 0; t < 3; ++t) {
      const int child = 3 * k + t;
      const auto& pts = load.points[child];
      for (int q = 0; q < static_cast<int>(pts.size()); ++q) {
        const Eigen::Vector2d x = ref_child_maps_[t].apply(pts[q].child_ref);
        const Eigen::VectorXd phi = basis.eval_all(x);
        const Eigen::MatrixXd grads = basis.grad_all(x) * map.inverse;
        for (int a = 0; a < n_loc; ++a) {
          const int z = conn_.element_nodes[k][a];
          if (conn_.node_on_boundary[z]) continue;
          const Eigen::Vector2d contrib =
              scalar_contrib(load, child, q, phi[a], grads.row(a));
          out[2 * z] += contrib[0];
          out[2 * z + 1] += contrib[1];
        }
      }
    }
  }
  return out;
}

Eigen::VectorXd Smoother::load_moments_face_bubbles(const ChildLoadData& load) const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(n_face_);
  for (int fi = 0; fi < static_cast<int>(interior_faces_.size()); ++fi) {
    const int f = interior_faces_[fi];
    for (int s = 0; s < 2; ++s) {
      const FaceSideInfo& side = face_sides_[f][s];
      const AffineMap& map = elem_maps_[side.element];
      for (int t = 0; t < 3; ++t) {
        const int child = 3 * side.element + t;
        const auto& pts = load.points[child];
        for (int q = 0; q < static_cast<int>(pts.size()); ++q) {
          const Eigen::Vector2d x = ref_child_maps_[t].apply(pts[q].child_ref);
          for (int z = 0; z < ell_; ++z) {
            const BumpTable& bt = bumps_[side.local_edge][side.flip ? 1 : 0][z];
            const double phi = bt.poly.eval(x);
            const Eigen::RowVector2d grad =
                bt.poly.grad_eval(x).transpose() * map.inverse;
            const Eigen::Vector2d contrib = scalar_contrib(load, child, q, phi, grad);
            out[(fi * ell_ + z) * 2 + 0] += contrib[0];
            out[(fi * ell_ + z) * 2 + 1] += contrib[1];
          }
        }
      }
    }
  }
  return out;
}

Eigen::VectorXd Smoother::load_moments_divergence_lift(const ChildLoadData& load) const {
  const int m_ell = poly_space_dim(ell_);
  const TriangleBasis& vbasis = triangle_basis(ell_ + 1);
  const int n_lift = vbasis.size();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(n_defect_);

  for (int k = 0; k < mesh_->num_triangles(); ++k) {
    const AffineMap& map = elem_maps_[k];
    const Eigen::Matrix2d push = map.matrix / map.jacobian_abs;
    for (int t = 0; t < 3; ++t) {
      const int child = 3 * k + t;
      const auto& pts = load.points[child];
      const Eigen::Matrix2d chain = ref_child_maps_[t].inverse * map.inverse;
      for (int q = 0; q < static_cast<int>(pts.size()); ++q) {
        const Eigen::VectorXd phi = vbasis.eval_all(pts[q].child_ref);
        const Eigen::MatrixXd gref = vbasis.grad_all(pts[q].child_ref);
        for (int m = 0; m < m_ell; ++m) {
          Eigen::Vector2d val = Eigen::Vector2d::Zero();
          Eigen::Matrix2d jac = Eigen::Matrix2d::Zero();
          for (int b = 0; b < n_lift; ++b) {
            const int zi = e3_ref_->interior_index[e3_ref_->conn.element_nodes[t][b]];
            if (zi < 0) continue;
            const Eigen::Vector2d coeff(lift_global_(2 * zi, m),
                                        lift_global_(2 * zi + 1, m));
            val += coeff * phi[b];
            jac += coeff * gref.row(b);
          }
          const Eigen::Vector2d phys_val = push * val;
          const Eigen::Matrix2d phys_jac = push * jac * chain;
          out[k * m_ell + m] += load.contribution(child, q, phys_val, phys_jac);
        }
      }
    }
  }
  return out;
}

Eigen::VectorXd Smoother::load_moments_rotational(const ChildLoadData& load) const {
  const int n4 = static_cast<int>(e4_ref_->moment_basis.size());
  Eigen::VectorXd out = Eigen::VectorXd::Zero(n_gamma_);
  if (n4 == 0) return out;
  for (int k = 0; k < mesh_->num_triangles(); ++k) {
    const AffineMap& map = elem_maps_[k];
    const Eigen::Matrix2d push = map.matrix / map.jacobian_abs;
    for (int t = 0; t < 3; ++t) {
      const int child = 3 * k + t;
      const auto& pts = load.points[child];
      for (int q = 0; q < static_cast<int>(pts.size()); ++q) {
        const Eigen::Vector2d x = ref_child_maps_[t].apply(pts[q].child_ref);
        for (int j = 0; j < n4; ++j) {
          const Eigen::Vector2d val = push * e4_ref_->render[j].eval(x);
          const Eigen::Matrix2d jac =
              push * e4_ref_->render[j].jacobian_eval(x) * map.inverse;
          out[k * n4 + j] += load.contribution(child, q, val, jac);
        }
      }
    }
  }
  return out;
}

Eigen::VectorXd Smoother::load_moments_interior_bubbles(const ChildLoadData& load) const {
  const int dimb = ell_ >= 2 ? poly_space_dim(ell_ - 2) : 0;
  Eigen::VectorXd out = Eigen::VectorXd::Zero(n_bubble_);
  if (dimb == 0) return out;
  const Poly2 bubble =
      barycentric_poly(0) * barycentric_poly(1) * barycentric_poly(2);
  std::vector<Poly2> fields(dimb);
  for (int m = 0; m < dimb; ++m) {
    auto [mi, mj] = monomial_exponents(m);
    fields[m] = Poly2::monomial(mi, mj) * bubble;
  }
  for (int k = 0; k < mesh_->num_triangles(); ++k) {
    const AffineMap& map = elem_maps_[k];
    for (int t = 0; t < 3; ++t) {
      const int child = 3 * k + t;
      const auto& pts = load.points[child];
      for (int q = 0; q < static_cast<int>(pts.size()); ++q) {
        const Eigen::Vector2d x = ref_child_maps_[t].apply(pts[q].child_ref);
        for (int m = 0; m < dimb; ++m) {
          const double phi = fields[m].eval(x);
          const Eigen::RowVector2d grad =
              fields[m].grad_eval(x).transpose() * map.inverse;
          const Eigen::Vector2d contrib = scalar_contrib(load, child, q, phi, grad);
          out[(k * dimb + m) * 2 + 0] += contrib[0];
          out[(k * dimb + m) * 2 + 1] += contrib[1];
        }
      }
    }
  }
  return out;
}

Eigen::VectorXd Smoother::load_vector_identity(const ChildLoadData& load) const {
  const TriangleBasis& basis = triangle_basis(ell_);
  const int n_loc = basis.size();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(n_broken_);
  for (int k = 0; k < mesh_->num_triangles(); ++k) {
    const AffineMap& map = elem_maps_[k];
    for (int t = 0; t < 3; ++t) {
      const int child = 3 * k + t;
      const auto& pts = load.points[child];
      for (int q = 0; q < static_cast<int>(pts.size()); ++q) {
        const Eigen::Vector2d x = ref_child_maps_[t].apply(pts[q].child_ref);
        const Eigen::VectorXd phi = basis.eval_all(x);
        const Eigen::MatrixXd grads = basis.grad_all(x) * map.inverse;
        for (int a = 0; a < n_loc; ++a) {
          const Eigen::Vector2d contrib =
              scalar_contrib(load, child, q, phi[a], grads.row(a));
          out[(k * n_loc + a) * 2 + 0] += contrib[0];
          out[(k * n_loc + a) * 2 + 1] += contrib[1];
        }
      }
    }
  }
  return out;
}

Eigen::VectorXd Smoother::assemble_load_vector(const ChildLoadData& load) const {
  if (static_cast<int>(load.points.size()) != companion_.mesh.num_triangles()) {
    throw std::invalid_argument("assemble_load_vector: load data size mismatch");
  }
  if (variant_ == SmootherVariant::Identity) {
    return load_vector_identity(load);
  }

  const Eigen::VectorXd lg = load_moments_conforming(load);
  const Eigen::VectorXd lc = load_moments_face_bubbles(load);

  if (variant_ == SmootherVariant::PressureRobust) {
    Eigen::VectorXd beta_q = load_moments_divergence_lift(load);
    Eigen::VectorXd beta_c = lc;
    Eigen::VectorXd beta_g = lg;
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n_broken_);
    if (n_gamma_ > 0) {
      const Eigen::VectorXd beta_gamma = load_moments_rotational(load);
      beta_q += Gq_.transpose() * beta_gamma;
      beta_c += Gc_.transpose() * beta_gamma;
      beta_g += Gg_.transpose() * beta_gamma;
      rhs += Gv_.transpose() * beta_gamma;
    }
    beta_c += Qc_.transpose() * beta_q;
    beta_g += Qg_.transpose() * beta_q + Cg_.transpose() * beta_c;
    rhs += Qv_.transpose() * beta_q + Cv_.transpose() * beta_c + N1_.transpose() * beta_g;
    return rhs;
  }

  // Quasi-optimal
  Eigen::VectorXd beta_c = lc;
  Eigen::VectorXd beta_g = lg;
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n_broken_);
  if (n_bubble_ > 0) {
    const Eigen::VectorXd beta_b = load_moments_interior_bubbles(load);
    beta_c += Pc_.transpose() * beta_b;
    beta_g += Pg_.transpose() * beta_b;
    rhs += Pv_.transpose() * beta_b;
  }
  beta_g += Cg_.transpose() * beta_c;
  rhs += Cv_.transpose() * beta_c + N1_.transpose() * beta_g;
  return rhs;
}

}  // namespace stokesdg
