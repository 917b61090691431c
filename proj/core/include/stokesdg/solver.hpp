#pragma once

#include <optional>
#include <string>

#include "stokesdg/dg_forms.hpp"
#include "stokesdg/loads.hpp"
#include "stokesdg/smoother.hpp"

namespace stokesdg {

struct SolverOptions {
  enum class Method { Direct, Minres };
  Method method = Method::Direct;
  double tolerance = 1e-10;    // relative algebraic residual
  int max_iterations = 50000;  // Minres only
  bool warn_small_eta = true;
};

struct SolveDiagnostics {
  std::string method;
  double relative_residual = 0.0;
  int iterations = 0;  // 0 for the direct factorization
  int n_velocity = 0;
  int n_pressure = 0;
};

struct StokesSolution {
  BrokenField velocity;
  BrokenPressure pressure;
  SolveDiagnostics diagnostics;
};

/// Assembled saddle-point blocks: mu-scaled velocity form, divergence
/// coupling, the pressure mean-constraint row, and the smoothed load.
struct SaddleSystem {
  SparseMatrix a;
  SparseMatrix b;
  Eigen::VectorXd mean_row;
  Eigen::VectorXd rhs;
};

/// rhs_i = <f, E Phi_i> over all broken velocity basis fields.
Eigen::VectorXd assemble_rhs(const Smoother& smoother, const Load& load, double mu);

SaddleSystem assemble_saddle(const Smoother& smoother, double eta, double mu,
                             PenaltyVariant penalty, const Load& load);

/// Solves the discrete Stokes system
///   [mu A, B^T, c; B, 0, 0; c^T, 0, 0] (u, p, lambda) = (rhs, 0, 0)
/// with c enforcing the zero pressure mean. Warns (does not fail) when
/// eta is at or below the measured coercivity threshold.
StokesSolution solve_stokes(const Smoother& smoother, double eta, double mu,
                            PenaltyVariant penalty, const Load& load,
                            const SolverOptions& options = {});

StokesSolution solve_stokes(const TriangleMesh& mesh, int ell, double eta, double mu,
                            SmootherVariant variant, PenaltyVariant penalty,
                            const Load& load, const SolverOptions& options = {});

struct ErrorNorms {
  double velocity_dg = 0.0;
  double velocity_dg1 = 0.0;
  double pressure_l2 = 0.0;
};

/// Errors against an exact pair: ||u - u_dG||_dG (and the parameter-free
/// variant) plus ||p - p_dG||_L2, with exact integration across an optional
/// vertical pressure discontinuity.
ErrorNorms compute_errors(const StokesSolution& sol, const VectorFn& u_exact,
                          const MatrixFn& grad_u_exact, const ScalarFn& p_exact,
                          double eta,
                          std::optional<double> discontinuity_x1 = std::nullopt,
                          int quad_degree = 14);

}  // namespace stokesdg
