#pragma once

#include <Eigen/Core>
#include <vector>

namespace stokesdg {

/// Dimension of the space of bivariate polynomials of total degree <= d.
constexpr int poly_space_dim(int d) { return d < 0 ? 0 : (d + 1) * (d + 2) / 2; }

/// Index of the monomial x^i y^j in the degree-graded ordering
/// (0,0), (1,0), (0,1), (2,0), (1,1), (0,2), ...
constexpr int monomial_index(int i, int j) {
  const int k = i + j;
  return k * (k + 1) / 2 + j;
}

/// Bivariate polynomial in the monomial basis. Differentiation and products
/// are exact coefficient manipulations.
class Poly2 {
 public:
  Poly2() : degree_(0), coeff_(1, 0.0) {}
  explicit Poly2(int degree) : degree_(degree), coeff_(poly_space_dim(degree), 0.0) {}

  static Poly2 monomial(int i, int j, double c = 1.0);
  static Poly2 constant(double c);

  int degree() const { return degree_; }
  double& coeff(int i, int j) { return coeff_[monomial_index(i, j)]; }
  double coeff(int i, int j) const { return coeff_[monomial_index(i, j)]; }
  const std::vector<double>& coefficients() const { return coeff_; }
  std::vector<double>& coefficients() { return coeff_; }

  double eval(const Eigen::Vector2d& x) const;
  Eigen::Vector2d grad_eval(const Eigen::Vector2d& x) const;

  Poly2 dx() const;
  Poly2 dy() const;

  Poly2 operator+(const Poly2& o) const;
  Poly2 operator-(const Poly2& o) const;
  Poly2 operator*(const Poly2& o) const;
  Poly2 operator*(double s) const;
  Poly2& operator+=(const Poly2& o);

  /// p(A x + b), an affine change of variables.
  Poly2 compose_affine(const Eigen::Matrix2d& A, const Eigen::Vector2d& b) const;

  /// Integral over the reference triangle (0,0),(1,0),(0,1); uses the exact
  /// monomial moments i! j! / (i+j+2)!.
  double integral_ref_triangle() const;

  /// Drop trailing zero blocks so degree() reflects the actual degree.
  Poly2 trimmed(double tol = 0.0) const;

 private:
  int degree_;
  std::vector<double> coeff_;
};

/// Vector-valued polynomial, two components.
struct VecPoly2 {
  Poly2 x, y;

  VecPoly2() = default;
  VecPoly2(Poly2 px, Poly2 py) : x(std::move(px)), y(std::move(py)) {}

  Eigen::Vector2d eval(const Eigen::Vector2d& p) const { return {x.eval(p), y.eval(p)}; }
  /// Jacobian: row i = gradient of component i.
  Eigen::Matrix2d jacobian_eval(const Eigen::Vector2d& p) const;
  Poly2 divergence() const;
};

/// Curl(w) = (d2 w, -d1 w) of a scalar polynomial.
VecPoly2 curl_scalar(const Poly2& w);

/// Rot(v) = -d2 v1 + d1 v2 of a vector polynomial.
Poly2 rot_vector(const VecPoly2& v);

/// Exact monomial moment over the reference triangle: i! j! / (i+j+2)!.
double ref_triangle_monomial_integral(int i, int j);

}  // namespace stokesdg
