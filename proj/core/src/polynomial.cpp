#include "stokesdg/polynomial.hpp"

#include <algorithm>
#include <cmath>

namespace stokesdg {

Poly2 Poly2::monomial(int i, int j, double c) {
  Poly2 p(i + j);
  p.coeff(i, j) = c;
  return p;
}

Poly2 Poly2::constant(double c) {
  Poly2 p(0);
  p.coeff(0, 0) = c;
  return p;
}

double Poly2::eval(const Eigen::Vector2d& x) const {
  // Powers up to degree_, then a direct sum. Coefficients stay small here;
  // no need for anything smarter.
  double result = 0.0;
  std::vector<double> px(degree_ + 1, 1.0), py(degree_ + 1, 1.0);
  for (int k = 1; k <= degree_; ++k) {
    px[k] = px[k - 1] * x[0];
    py[k] = py[k - 1] * x[1];
  }
  for (int k = 0; k <= degree_; ++k) {
    for (int j = 0; j <= k; ++j) {
      const int i = k - j;
      const double c = coeff_[monomial_index(i, j)];
      if (c != 0.0) result += c * px[i] * py[j];
    }
  }
  return result;
}

Eigen::Vector2d Poly2::grad_eval(const Eigen::Vector2d& x) const {
  return {dx().eval(x), dy().eval(x)};
}

Poly2 Poly2::dx() const {
  Poly2 out(std::max(0, degree_ - 1));
  for (int k = 1; k <= degree_; ++k) {
    for (int j = 0; j <= k; ++j) {
      const int i = k - j;
      if (i >= 1) out.coeff(i - 1, j) += i * coeff_[monomial_index(i, j)];
    }
  }
  return out;
}

Poly2 Poly2::dy() const {
  Poly2 out(std::max(0, degree_ - 1));
  for (int k = 1; k <= degree_; ++k) {
    for (int j = 0; j <= k; ++j) {
      const int i = k - j;
      if (j >= 1) out.coeff(i, j - 1) += j * coeff_[monomial_index(i, j)];
    }
  }
  return out;
}

Poly2 Poly2::operator+(const Poly2& o) const {
  Poly2 out(std::max(degree_, o.degree_));
  for (size_t m = 0; m < coeff_.size(); ++m) out.coeff_[m] += coeff_[m];
  for (size_t m = 0; m < o.coeff_.size(); ++m) out.coeff_[m] += o.coeff_[m];
  return out;
}

Poly2 Poly2::operator-(const Poly2& o) const {
  Poly2 out(std::max(degree_, o.degree_));
  for (size_t m = 0; m < coeff_.size(); ++m) out.coeff_[m] += coeff_[m];
  for (size_t m = 0; m < o.coeff_.size(); ++m) out.coeff_[m] -= o.coeff_[m];
  return out;
}

Poly2& Poly2::operator+=(const Poly2& o) {
  *this = *this + o;
  return *this;
}

Poly2 Poly2::operator*(const Poly2& o) const {
  Poly2 out(degree_ + o.degree_);
  for (int k1 = 0; k1 <= degree_; ++k1) {
    for (int j1 = 0; j1 <= k1; ++j1) {
      const double c1 = coeff_[monomial_index(k1 - j1, j1)];
      if (c1 == 0.0) continue;
      for (int k2 = 0; k2 <= o.degree_; ++k2) {
        for (int j2 = 0; j2 <= k2; ++j2) {
          const double c2 = o.coeff_[monomial_index(k2 - j2, j2)];
          if (c2 == 0.0) continue;
          out.coeff(k1 - j1 + k2 - j2, j1 + j2) += c1 * c2;
        }
      }
    }
  }
  return out;
}

Poly2 Poly2::operator*(double s) const {
  Poly2 out = *this;
  for (double& c : out.coeff_) c *= s;
  return out;
}

Poly2 Poly2::compose_affine(const Eigen::Matrix2d& A, const Eigen::Vector2d& b) const {
  const Poly2 lx = Poly2::monomial(1, 0, A(0, 0)) + Poly2::monomial(0, 1, A(0, 1)) +
                   Poly2::constant(b[0]);
  const Poly2 ly = Poly2::monomial(1, 0, A(1, 0)) + Poly2::monomial(0, 1, A(1, 1)) +
                   Poly2::constant(b[1]);
  std::vector<Poly2> powx(degree_ + 1), powy(degree_ + 1);
  powx[0] = Poly2::constant(1.0);
  powy[0] = Poly2::constant(1.0);
  for (int k = 1; k <= degree_; ++k) {
    powx[k] = powx[k - 1] * lx;
    powy[k] = powy[k - 1] * ly;
  }
  Poly2 out(degree_);
  for (int k = 0; k <= degree_; ++k) {
    for (int j = 0; j <= k; ++j) {
      const int i = k - j;
      const double c = coeff_[monomial_index(i, j)];
      if (c != 0.0) out += (powx[i] * powy[j]) * c;
    }
  }
  return out;
}

double ref_triangle_monomial_integral(int i, int j) {
  // i! j! / (i+j+2)! computed as a product to avoid factorial overflow.
  double v = 1.0;
  for (int k = 1; k <= j; ++k) v *= static_cast<double>(k) / (i + k);
  for (int k = i + j + 1; k <= i + j + 2; ++k) v /= k;
  return v;
}

double Poly2::integral_ref_triangle() const {
  double s = 0.0;
  for (int k = 0; k <= degree_; ++k) {
    for (int j = 0; j <= k; ++j) {
      const int i = k - j;
      const double c = coeff_[monomial_index(i, j)];
      if (c != 0.0) s += c * ref_triangle_monomial_integral(i, j);
    }
  }
  return s;
}

Poly2 Poly2::trimmed(double tol) const {
  int d = degree_;
  while (d > 0) {
    bool zero = true;
    for (int j = 0; j <= d; ++j) {
      if (std::abs(coeff_[monomial_index(d - j, j)]) > tol) {
        zero = false;
        break;
      }
    }
    if (!zero) break;
    --d;
  }
  Poly2 out(d);
  for (int k = 0; k <= d; ++k)
    for (int j = 0; j <= k; ++j)
      out.coeff(k - j, j) = coeff_[monomial_index(k - j, j)];
  return out;
}

Eigen::Matrix2d VecPoly2::jacobian_eval(const Eigen::Vector2d& p) const {
  Eigen::Matrix2d J;
  J.row(0) = x.grad_eval(p).transpose();
  J.row(1) = y.grad_eval(p).transpose();
  return J;
}

Poly2 VecPoly2::divergence() const { return x.dx() + y.dy(); }

VecPoly2 curl_scalar(const Poly2& w) { return {w.dy(), w.dx() * (-1.0)}; }

Poly2 rot_vector(const VecPoly2& v) { return v.y.dx() - v.x.dy(); }

}  // namespace stokesdg
