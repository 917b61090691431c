#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <memory>
#include <vector>

#include "stokesdg/dg_forms.hpp"
#include "stokesdg/fields.hpp"
#include "stokesdg/mesh.hpp"
#include "stokesdg/polynomial.hpp"
#include "stokesdg/quadrature.hpp"

namespace stokesdg {

enum class SmootherVariant { Identity, QuasiOptimal, PressureRobust };

/// Alfeld companion mesh: child 3k+t covers the t-th barycentric sector of
/// base triangle k.
struct CompanionMesh {
  TriangleMesh mesh;
  std::vector<int> parent;
  std::vector<AffineMap> child_maps;  // reference triangle -> physical child
};

/// Piecewise polynomial of degree ell+2 on the companion mesh, stored as
/// per-child nodal values. Images of the smoothing operators are
/// H^1_0-conforming; Identity images are not and are flagged.
class SmoothedField {
 public:
  SmoothedField(const CompanionMesh& companion, int degree, bool conforming);

  const CompanionMesh& companion() const { return *companion_; }
  int degree() const { return degree_; }
  bool conforming() const { return conforming_; }
  void set_conforming(bool c) { conforming_ = c; }

  Eigen::VectorXd& values() { return values_; }
  const Eigen::VectorXd& values() const { return values_; }

  int dof(int child, int node, int comp) const {
    return (child * basis_->size() + node) * 2 + comp;
  }

  Eigen::Vector2d value(int child, const Eigen::Vector2d& child_ref) const;
  /// Physical Jacobian (row i = gradient of component i).
  Eigen::Matrix2d jacobian(int child, const Eigen::Vector2d& child_ref) const;

  SmoothedField& operator+=(const SmoothedField& other);

 private:
  const CompanionMesh* companion_;
  int degree_;
  const TriangleBasis* basis_;
  bool conforming_;
  Eigen::VectorXd values_;
};

/// L2 norm of the broken gradient of a smoothed field.
double grad_norm(const SmoothedField& w);

/// Largest jump across companion faces / trace on the domain boundary,
/// sampled at face quadrature points. Conforming images stay below 1e-10.
double conformity_defect(const SmoothedField& w);

/// Reference divergence lift on the Alfeld split of the reference triangle:
/// maps zero-mean broken P_l data to the gradient-minimizing conforming
/// piecewise P_{l+1} zero-trace field with that divergence.
struct E3RefOperator {
  int ell = 0;
  TriangleMesh split;                    // the three children of K_ref
  LagrangeConnectivity conn;             // velocity nodes, degree ell+1
  std::vector<int> interior_index;       // conf node -> compact interior index, -1 on boundary
  int n_interior = 0;
  // Input: per-child coefficients in the K_ref monomial basis of P_l
  // (child-major). Output: interior nodal values, (node, comp) interleaved.
  Eigen::MatrixXd lift;
  // Constraint matrix D with (D u)_(t,m) = int_{T_t} mono_m Div u, used by
  // the minimality checks.
  Eigen::MatrixXd constraint;
  Eigen::MatrixXd child_mass;            // (3m) x (3m) block-diagonal Gram of the input basis
  Eigen::MatrixXd gradient_gram;         // (2 n_int) x (2 n_int)
};

E3RefOperator build_e3_ref(int ell);

/// Reference operator for the divergence-free element-moment correction:
/// solves int Rot(w) Rot(m_j) b^2 = int q . m_j over x-perp P_{l-3}.
struct E4RefOperator {
  int ell = 0;
  std::vector<VecPoly2> moment_basis;    // x-perp P_{l-3}
  Eigen::MatrixXd system;                // SPD
  std::vector<VecPoly2> render;          // Curl(b^2 Rot m_j), degree l+2
};

E4RefOperator build_e4_ref(int ell);

/// Quadrature point set over companion children together with load data;
/// the integrand is f.w (Strong) or mu grad u : grad w - p div w (Weak).
struct ChildLoadData {
  enum class Kind { Strong, Weak };
  Kind kind = Kind::Strong;

  struct Point {
    Eigen::Vector2d child_ref;  // reference coordinates of the child triangle
    double weight;              // physical weight (jacobians folded in)
  };
  std::vector<std::vector<Point>> points;            // per child
  std::vector<std::vector<Eigen::Vector2d>> f_vals;  // Strong
  std::vector<std::vector<Eigen::Matrix2d>> mu_grad_u;  // Weak, mu-scaled
  std::vector<std::vector<double>> p_vals;           // Weak

  double contribution(int child, int q, const Eigen::Vector2d& value,
                      const Eigen::Matrix2d& jac) const {
    const double w = points[child][q].weight;
    if (kind == Kind::Strong) return w * f_vals[child][q].dot(value);
    return w * (mu_grad_u[child][q].cwiseProduct(jac).sum() -
                p_vals[child][q] * jac.trace());
  }
};

/// The load-smoothing operator: Identity, the component-wise moment-
/// preserving variant (nodal averaging + face-bubble moment fix +, for
/// l >= 2, an interior-bubble element-moment fix), or the moment- and
/// divergence-preserving four-stage construction.
class Smoother {
 public:
  Smoother(const TriangleMesh& mesh, int ell, SmootherVariant variant);

  const TriangleMesh& mesh() const { return *mesh_; }
  int ell() const { return ell_; }
  SmootherVariant variant() const { return variant_; }
  const CompanionMesh& companion() const { return companion_; }
  const LagrangeConnectivity& connectivity() const { return conn_; }
  const E3RefOperator& e3_ref() const { return *e3_ref_; }

  /// Full operator image of a broken field.
  SmoothedField smooth(const BrokenField& v) const;

  /// Individual stages; all of them return increments except apply_e1.
  SmoothedField apply_e1(const BrokenField& v) const;
  SmoothedField apply_e2(const BrokenField& v, const SmoothedField& e1v) const;
  SmoothedField apply_e3(const BrokenField& v, const SmoothedField& partial) const;
  SmoothedField apply_e4(const BrokenField& v, const SmoothedField& partial) const;

  /// rhs_i = load(E Phi_i) over all broken basis fields, by backward
  /// propagation of the per-stage load moments.
  Eigen::VectorXd assemble_load_vector(const ChildLoadData& load) const;

 private:
  struct StageCoeffs {
    Eigen::VectorXd g;      // conforming nodal values (2 per node)
    Eigen::VectorXd c;      // face-bubble coefficients (2*ell per interior face)
    Eigen::VectorXd q;      // defect monomial coefficients (dim P_ell per element)
    Eigen::VectorXd gamma;  // rotational moment coefficients (per element)
    Eigen::VectorXd beta;   // interior-bubble coefficients (quasi-optimal)
  };

  StageCoeffs forward(const BrokenField& v) const;

  void render_identity(const BrokenField& v, SmoothedField& out) const;
  void render_conforming(const Eigen::VectorXd& g, SmoothedField& out) const;
  void render_face_bubbles(const Eigen::VectorXd& c, SmoothedField& out) const;
  void render_divergence_lift(const Eigen::VectorXd& q, SmoothedField& out) const;
  void render_rotational(const Eigen::VectorXd& gamma, SmoothedField& out) const;
  void render_interior_bubbles(const Eigen::VectorXd& beta, SmoothedField& out) const;

  Eigen::VectorXd load_moments_conforming(const ChildLoadData& load) const;
  Eigen::VectorXd load_moments_face_bubbles(const ChildLoadData& load) const;
  Eigen::VectorXd load_moments_divergence_lift(const ChildLoadData& load) const;
  Eigen::VectorXd load_moments_rotational(const ChildLoadData& load) const;
  Eigen::VectorXd load_moments_interior_bubbles(const ChildLoadData& load) const;
  Eigen::VectorXd load_vector_identity(const ChildLoadData& load) const;

  void build_reference_tables();
  void build_stage_maps();

  const TriangleMesh* mesh_;
  int ell_;
  SmootherVariant variant_;

  CompanionMesh companion_;
  LagrangeConnectivity conn_;
  std::vector<AffineMap> elem_maps_;
  std::vector<int> interior_face_index_;  // face -> ordinal among interior faces, -1 else
  std::vector<int> interior_faces_;       // ordinal -> face

  // Per-face-side geometry: local edge and orientation of each neighbor.
  struct FaceSideInfo {
    int element;
    int local_edge;
    bool flip;  // true if face.vertices[0] is NOT the (e+1)%3 vertex
  };
  std::vector<std::array<FaceSideInfo, 2>> face_sides_;  // [2] unused on boundary

  std::shared_ptr<const E3RefOperator> e3_ref_;
  std::shared_ptr<const E4RefOperator> e4_ref_;

  // Reference tables (computed once per degree).
  std::array<AffineMap, 3> ref_child_maps_;  // K_ref -> t-th barycentric sector
  struct BumpTable {
    Poly2 poly;                                // extension times face bubble
    std::array<Eigen::VectorXd, 2> dcoeffs;    // monomial coeffs of its partials
    std::array<Eigen::VectorXd, 3> node_vals;  // values at child render nodes
    Eigen::MatrixXd e4_moments;                // (n4 x 2): int bump (m_j)_{c'}
    Eigen::VectorXd bubble_moments;            // (dim P_{l-2}): int bump mono_m
  };
  std::array<std::array<std::vector<BumpTable>, 2>, 3> bumps_;  // [edge][flip][z]
  Eigen::MatrixXd face_mass_inv_;            // weighted edge mass, inverted
  std::array<std::array<Eigen::MatrixXd, 2>, 3> trace_moments_;  // [edge][flip]: int psi_m phi_a
  Eigen::MatrixXd lift_global_;              // monomial P_ell -> interior nodal values
  Eigen::MatrixXd e4_moment_lift_;           // Y: int (lift column m) . m_j over children
  Eigen::MatrixXd bubble_mass_inv_;          // int mono_m mono_n b over K_ref, inverted
  Eigen::VectorXd ell_monomial_integrals_;   // moments of P_ell monomials over K_ref
  Eigen::MatrixXd pmass_inv_;                // P_{l-1} nodal mass inverse
  Eigen::MatrixXd conv_pressure_;            // P_{l-1} nodal -> P_ell monomial coeffs
  std::array<Eigen::MatrixXd, 2> div_moments_;  // int chi_m d_k phi_a
  std::array<Eigen::MatrixXd, 2> dphi_coeffs_;  // monomial coeffs of d_k phi_a
  std::vector<Eigen::MatrixXd> e4_basis_moments_;  // per j: (n_loc x 2): int phi_a (m_j)_{c'}
  Eigen::MatrixXd a4_inv_;
  std::vector<std::array<std::vector<Eigen::Vector2d>, 3>> e4_node_vals_;  // per j, child, node
  Eigen::MatrixXd bubble_proj_;              // bubble_mass_inv * int phi_a mono_m
  std::vector<std::array<Eigen::VectorXd, 3>> bubble_node_vals_;  // per m, child
  std::array<Eigen::MatrixXd, 3> render_conf_;  // per child: basis_l at render nodes
  Eigen::MatrixXd render_lift_;              // basis_{l+1} at render nodes

  // Stage maps.
  Eigen::SparseMatrix<double> N1_, Cv_, Cg_;
  Eigen::SparseMatrix<double> Qv_, Qg_, Qc_;
  Eigen::SparseMatrix<double> Gv_, Gg_, Gc_, Gq_;
  Eigen::SparseMatrix<double> Pv_, Pg_, Pc_;

  int n_broken_ = 0, n_conf_ = 0, n_face_ = 0, n_defect_ = 0, n_gamma_ = 0, n_bubble_ = 0;
};

}  // namespace stokesdg
