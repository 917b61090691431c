#pragma once

#include <Eigen/Sparse>

#include "stokesdg/fields.hpp"
#include "stokesdg/mesh.hpp"

namespace stokesdg {

using SparseMatrix = Eigen::SparseMatrix<double>;

/// Jump penalization: Full penalizes the whole jump, Weak only its
/// face-wise L2 projection onto P_{l-1}(F).
enum class PenaltyVariant { Full, Weak };

/// Interior-penalty matrix A with v^T A w = a_dG(w, v): broken gradients,
/// the two consistency terms against averaged gradients, and the (eta/h)
/// jump penalty. Symmetric; boundary faces enter like interior ones with
/// single-sided traces.
SparseMatrix assemble_a(const TriangleMesh& mesh, int ell, double eta,
                        PenaltyVariant variant = PenaltyVariant::Full);

/// Divergence coupling matrix B with q^T B w = b_dG(w, q)
///   = -int q Div_M w + int_Sigma [w].n {q},
/// rows over all broken P_{l-1} pressure dofs (no mean constraint).
SparseMatrix assemble_b(const TriangleMesh& mesh, int ell);

/// Discrete divergence: the broken P_{l-1} field with
/// int q Div_dG w = int q Div_M w - int_Sigma [w].n {q} for all broken q.
/// Element-local L2 solves; the result has exact zero mean.
BrokenPressure discrete_divergence(const BrokenField& w);

/// || . ||_dG: broken H1 seminorm plus (eta/h)-weighted jumps (boundary
/// traces included).
double norm_dg(const BrokenField& v, double eta);

/// Parameter-independent norm || . ||_{dG,1} (jump weight 1/h).
double norm_dg1(const BrokenField& v);

/// A valid threshold eta_bar with int_Sigma h |{v}|^2 <= eta_bar ||v||^2
/// for broken polynomial (tensor) fields of degree ell: the largest
/// per-element generalized eigenvalue of the h-weighted boundary mass
/// against the volume mass. Valid but not minimal.
double estimate_eta_threshold(const TriangleMesh& mesh, int ell);

}  // namespace stokesdg
