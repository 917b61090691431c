#include "stokesdg/solver.hpp"

#include <Eigen/SparseLU>
#include <cmath>
#include <iostream>
#include <unsupported/Eigen/IterativeSolvers>

#include "stokesdg/quadrature.hpp"

namespace stokesdg {

namespace {

/// Positive diagonal preconditioner for the saddle matrix: |diag(mu A)| on
/// the velocity block, the pressure mass diagonal and 1 elsewhere.
class SaddleDiagonalPreconditioner {
 public:
  using StorageIndex = int;
  enum { ColsAtCompileTime = Eigen::Dynamic, MaxColsAtCompileTime = Eigen::Dynamic };

  SaddleDiagonalPreconditioner() = default;
  template <typename MatrixType>
  explicit SaddleDiagonalPreconditioner(const MatrixType& mat) {
    compute(mat);
  }

  Eigen::Index rows() const { return inv_diag_.size(); }
  Eigen::Index cols() const { return inv_diag_.size(); }

  template <typename MatrixType>
  SaddleDiagonalPreconditioner& analyzePattern(const MatrixType&) {
    return *this;
  }
  template <typename MatrixType>
  SaddleDiagonalPreconditioner& factorize(const MatrixType& mat) {
    Eigen::VectorXd d = mat.diagonal().cwiseAbs();
    inv_diag_.resize(d.size());
    for (Eigen::Index i = 0; i < d.size(); ++i) {
      inv_diag_[i] = d[i] > 1e-300 ? 1.0 / d[i] : 1.0;
    }
    return *this;
  }
  template <typename MatrixType>
  SaddleDiagonalPreconditioner& compute(const MatrixType& mat) {
    return factorize(mat);
  }

  void set_block(Eigen::Index offset, const Eigen::VectorXd& diag) {
    for (Eigen::Index i = 0; i < diag.size(); ++i) {
      inv_diag_[offset + i] = 1.0 / diag[i];
    }
  }

  template <typename Rhs>
  Eigen::VectorXd solve(const Rhs& b) const {
    return inv_diag_.cwiseProduct(b);
  }

  Eigen::ComputationInfo info() const { return Eigen::Success; }

 private:
  Eigen::VectorXd inv_diag_;
};

Eigen::VectorXd pressure_mass_diagonal(const TriangleMesh& mesh, int ell) {
  const TriangleBasis& pbasis = triangle_basis(ell - 1);
  const int m_loc = pbasis.size();
  Eigen::VectorXd ref(m_loc);
  for (int m = 0; m < m_loc; ++m) {
    ref[m] = (pbasis.basis_poly(m) * pbasis.basis_poly(m)).integral_ref_triangle();
  }
  Eigen::VectorXd diag(mesh.num_triangles() * m_loc);
  for (int k = 0; k < mesh.num_triangles(); ++k) {
    diag.segment(k * m_loc, m_loc) = affine_map(mesh, k).jacobian_abs * ref;
  }
  return diag;
}

}  // namespace

Eigen::VectorXd assemble_rhs(const Smoother& smoother, const Load& load, double mu) {
  return smoother.assemble_load_vector(evaluate_load(smoother, load, mu));
}

SaddleSystem assemble_saddle(const Smoother& smoother, double eta, double mu,
                             PenaltyVariant penalty, const Load& load) {
  const TriangleMesh& mesh = smoother.mesh();
  const int ell = smoother.ell();
  SaddleSystem sys;
  sys.a = mu * assemble_a(mesh, ell, eta, penalty);
  sys.b = assemble_b(mesh, ell);
  sys.rhs = assemble_rhs(smoother, load, mu);

  const TriangleBasis& pbasis = triangle_basis(ell - 1);
  const int m_loc = pbasis.size();
  Eigen::VectorXd ref(m_loc);
  for (int m = 0; m < m_loc; ++m) {
    ref[m] = pbasis.basis_poly(m).integral_ref_triangle();
  }
  sys.mean_row.resize(mesh.num_triangles() * m_loc);
  for (int k = 0; k < mesh.num_triangles(); ++k) {
    sys.mean_row.segment(k * m_loc, m_loc) = affine_map(mesh, k).jacobian_abs * ref;
  }
  return sys;
}

StokesSolution solve_stokes(const Smoother& smoother, double eta, double mu,
                            PenaltyVariant penalty, const Load& load,
                            const SolverOptions& options) {
  const TriangleMesh& mesh = smoother.mesh();
  const int ell = smoother.ell();
  if (options.warn_small_eta) {
    const double eta_bar = estimate_eta_threshold(mesh, ell);
    if (eta <= eta_bar) {
      std::cerr << "solve_stokes: eta = " << eta
                << " is at or below the measured coercivity threshold " << eta_bar
                << "; the discrete problem may be ill-posed\n";
    }
  }

  const SaddleSystem sys = assemble_saddle(smoother, eta, mu, penalty, load);
  const int n_v = static_cast<int>(sys.a.rows());
  const int n_p = static_cast<int>(sys.b.rows());
  const int n = n_v + n_p + 1;

  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(sys.a.nonZeros() + 2 * sys.b.nonZeros() + 2 * n_p);
  for (int k = 0; k < sys.a.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(sys.a, k); it; ++it) {
      trips.emplace_back(it.row(), it.col(), it.value());
    }
  }
  for (int k = 0; k < sys.b.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(sys.b, k); it; ++it) {
      trips.emplace_back(n_v + it.row(), it.col(), it.value());
      trips.emplace_back(it.col(), n_v + it.row(), it.value());
    }
  }
  for (int m = 0; m < n_p; ++m) {
    trips.emplace_back(n - 1, n_v + m, sys.mean_row[m]);
    trips.emplace_back(n_v + m, n - 1, sys.mean_row[m]);
  }

  SparseMatrix mat(n, n);
  mat.setFromTriplets(trips.begin(), trips.end());
  mat.makeCompressed();

  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
  rhs.head(n_v) = sys.rhs;

  Eigen::VectorXd sol;
  SolveDiagnostics diag;
  diag.n_velocity = n_v;
  diag.n_pressure = n_p;

  if (options.method == SolverOptions::Method::Direct) {
    diag.method = "sparse-lu";
    Eigen::SparseLU<SparseMatrix> lu;
    lu.analyzePattern(mat);
    lu.factorize(mat);
    if (lu.info() != Eigen::Success) {
      throw std::runtime_error("solve_stokes: sparse factorization failed (" +
                               std::to_string(n_v) + " velocity / " +
                               std::to_string(n_p) + " pressure dofs)");
    }
    sol = lu.solve(rhs);
    sol += lu.solve(rhs - mat * sol);
  } else {
    diag.method = "minres";
    Eigen::MINRES<SparseMatrix, Eigen::Lower | Eigen::Upper, SaddleDiagonalPreconditioner>
        minres;
    minres.setTolerance(options.tolerance * 1e-2);
    minres.setMaxIterations(options.max_iterations);
    minres.compute(mat);
    minres.preconditioner().set_block(n_v, pressure_mass_diagonal(mesh, ell));
    sol = minres.solve(rhs);
    diag.iterations = static_cast<int>(minres.iterations());
  }

  const double rhs_norm = rhs.norm();
  diag.relative_residual =
      rhs_norm > 0 ? (mat * sol - rhs).norm() / rhs_norm : (mat * sol).norm();
  if (!std::isfinite(diag.relative_residual) ||
      (rhs_norm > 0 && diag.relative_residual > options.tolerance)) {
    throw std::runtime_error(
        "solve_stokes: solver did not reach the requested residual (method " +
        diag.method + ", residual " + std::to_string(diag.relative_residual) +
        ", iterations " + std::to_string(diag.iterations) + ")");
  }

  StokesSolution out{BrokenField(mesh, ell), BrokenPressure(mesh, ell - 1), diag};
  out.velocity.coeffs() = sol.head(n_v);
  out.pressure.coeffs() = sol.segment(n_v, n_p);
  out.pressure.zero_mean = true;
  return out;
}

StokesSolution solve_stokes(const TriangleMesh& mesh, int ell, double eta, double mu,
                            SmootherVariant variant, PenaltyVariant penalty,
                            const Load& load, const SolverOptions& options) {
  const Smoother smoother(mesh, ell, variant);
  return solve_stokes(smoother, eta, mu, penalty, load, options);
}

ErrorNorms compute_errors(const StokesSolution& sol, const VectorFn& u_exact,
                          const MatrixFn& grad_u_exact, const ScalarFn& p_exact,
                          double eta, std::optional<double> discontinuity_x1,
                          int quad_degree) {
  const TriangleMesh& mesh = sol.velocity.mesh();
  const QuadRule vol_rule = quad_triangle(quad_degree);
  const QuadRule edge_rule = quad_edge(quad_degree);

  double grad_sq = 0.0, pressure_sq = 0.0;
  for (int k = 0; k < mesh.num_triangles(); ++k) {
    const AffineMap map = affine_map(mesh, k);
    for (int q = 0; q < vol_rule.size(); ++q) {
      const Eigen::Vector2d ref = vol_rule.points[q];
      const Eigen::Vector2d x = map.apply(ref);
      const double w = vol_rule.weights[q] * map.jacobian_abs;
      grad_sq += w * (grad_u_exact(x) - sol.velocity.jacobian(k, map, ref)).squaredNorm();
    }

    const auto& tri = mesh.triangles[k];
    const std::array<Eigen::Vector2d, 3> verts = {
        mesh.vertices[tri[0]], mesh.vertices[tri[1]], mesh.vertices[tri[2]]};
    bool crossed = false;
    if (discontinuity_x1) {
      double lo = verts[0][0], hi = verts[0][0];
      for (const auto& v : verts) {
        lo = std::min(lo, v[0]);
        hi = std::max(hi, v[0]);
      }
      crossed = lo < *discontinuity_x1 && *discontinuity_x1 < hi;
    }
    if (!crossed) {
      for (int q = 0; q < vol_rule.size(); ++q) {
        const Eigen::Vector2d ref = vol_rule.points[q];
        const double w = vol_rule.weights[q] * map.jacobian_abs;
        const double dp = p_exact(map.apply(ref)) - sol.pressure.value(k, ref);
        pressure_sq += w * dp * dp;
      }
    } else {
      for (bool right : {false, true}) {
        for (const auto& sub :
             clip_triangle_vertical(verts, *discontinuity_x1, right)) {
          Eigen::Matrix2d sub_jac;
          sub_jac.col(0) = sub[1] - sub[0];
          sub_jac.col(1) = sub[2] - sub[0];
          const double jac = std::abs(sub_jac.determinant());
          for (int q = 0; q < vol_rule.size(); ++q) {
            const Eigen::Vector2d x = sub[0] + sub_jac * vol_rule.points[q];
            const double dp =
                p_exact(x) - sol.pressure.value(k, map.apply_inverse(x));
            pressure_sq += vol_rule.weights[q] * jac * dp * dp;
          }
        }
      }
    }
  }

  double jump_sq = 0.0;  // int_0^1 |[u - u_h]|^2 dt per face; weights below
  double jump_sq_eta = 0.0;
  for (int f = 0; f < mesh.num_faces(); ++f) {
    const Face& face = mesh.faces[f];
    const Eigen::Vector2d a = mesh.vertices[face.vertices[0]];
    const Eigen::Vector2d b = mesh.vertices[face.vertices[1]];
    const AffineMap m1 = affine_map(mesh, face.first_element);
    double acc = 0.0;
    for (int q = 0; q < edge_rule.size(); ++q) {
      const Eigen::Vector2d x = a + edge_rule.points[q][0] * (b - a);
      Eigen::Vector2d jump =
          u_exact(x) - sol.velocity.value(face.first_element, m1.apply_inverse(x));
      if (!face.is_boundary()) {
        const AffineMap m2 = affine_map(mesh, face.second_element);
        jump -= u_exact(x) - sol.velocity.value(face.second_element, m2.apply_inverse(x));
      }
      acc += edge_rule.weights[q] * jump.squaredNorm();
    }
    jump_sq += acc;
    jump_sq_eta += eta * acc;
  }

  ErrorNorms out;
  out.velocity_dg = std::sqrt(grad_sq + jump_sq_eta);
  out.velocity_dg1 = std::sqrt(grad_sq + jump_sq);
  out.pressure_l2 = std::sqrt(pressure_sq);
  return out;
}

}  // namespace stokesdg
