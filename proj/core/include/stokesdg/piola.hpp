#pragma once

#include "stokesdg/mesh.hpp"
#include "stokesdg/polynomial.hpp"

namespace stokesdg {

namespace detail {
inline VecPoly2 linear_combo(const Eigen::Matrix2d& A, const VecPoly2& v) {
  return {v.x * A(0, 0) + v.y * A(0, 1), v.x * A(1, 0) + v.y * A(1, 1)};
}
inline VecPoly2 compose(const VecPoly2& v, const Eigen::Matrix2d& A,
                        const Eigen::Vector2d& b) {
  return {v.x.compose_affine(A, b), v.y.compose_affine(A, b)};
}
}  // namespace detail

/// Contravariant Piola push-forward as a polynomial in physical coordinates:
/// (P^con v)(x) = J^{-1} DF v_ref(F^{-1} x).
inline VecPoly2 piola_con_push(const AffineMap& map, const VecPoly2& v_ref) {
  const VecPoly2 composed =
      detail::compose(v_ref, map.inverse, -map.inverse * map.offset);
  return detail::linear_combo(map.matrix / map.jacobian_abs, composed);
}

/// Inverse contravariant transform: (P^con)^{-1} w = J DF^{-1} (w o F),
/// a polynomial in reference coordinates.
inline VecPoly2 piola_con_pull(const AffineMap& map, const VecPoly2& w_phys) {
  const VecPoly2 composed = detail::compose(w_phys, map.matrix, map.offset);
  return detail::linear_combo(map.jacobian_abs * map.inverse, composed);
}

/// Covariant Piola push-forward: (P^cov w)(x) = DF^{-T} w_ref(F^{-1} x).
inline VecPoly2 piola_cov_push(const AffineMap& map, const VecPoly2& w_ref) {
  const VecPoly2 composed =
      detail::compose(w_ref, map.inverse, -map.inverse * map.offset);
  return detail::linear_combo(map.inverse_t, composed);
}

/// Inverse covariant transform: DF^T (w o F).
inline VecPoly2 piola_cov_pull(const AffineMap& map, const VecPoly2& w_phys) {
  const VecPoly2 composed = detail::compose(w_phys, map.matrix, map.offset);
  return detail::linear_combo(map.matrix.transpose(), composed);
}

/// Pointwise contravariant push of a reference value.
inline Eigen::Vector2d piola_con_value(const AffineMap& map, const Eigen::Vector2d& v_ref) {
  return map.matrix * v_ref / map.jacobian_abs;
}

/// Physical Jacobian of the contravariant push from the reference Jacobian
/// (rows = components): J^{-1} DF (grad_ref v) DF^{-1}.
inline Eigen::Matrix2d piola_con_jacobian(const AffineMap& map,
                                          const Eigen::Matrix2d& jac_ref) {
  return map.matrix * jac_ref * map.inverse / map.jacobian_abs;
}

}  // namespace stokesdg
