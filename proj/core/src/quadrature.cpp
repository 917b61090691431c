#include "stokesdg/quadrature.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace stokesdg {

namespace {

constexpr int kMaxDegree = 50;

// Gauss-Legendre nodes/weights on [-1,1] by Newton iteration on P_n.
void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w) {
  x.assign(n, 0.0);
  w.assign(n, 0.0);
  const int m = (n + 1) / 2;
  for (int i = 0; i < m; ++i) {
    double z = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    double pp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = 0.0;
      for (int j = 0; j < n; ++j) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j + 1.0) * z * p1 - j * p2) / (j + 1.0);
      }
      pp = n * (z * p0 - p1) / (z * z - 1.0);
      const double dz = p0 / pp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    x[i] = -z;
    x[n - 1 - i] = z;
    w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
    w[n - 1 - i] = w[i];
  }
}

}  // namespace

int max_quadrature_degree() { return kMaxDegree; }

QuadRule quad_edge(int degree) {
  if (degree < 0) degree = 0;
  if (degree > kMaxDegree) {
    throw std::invalid_argument("quad_edge: degree " + std::to_string(degree) +
                                " exceeds maximum " + std::to_string(kMaxDegree));
  }
  const int n = degree / 2 + 1;  // GL(n) exact through 2n-1 >= degree
  std::vector<double> x, w;
  gauss_legendre(n, x, w);
  QuadRule rule;
  rule.exactness = 2 * n - 1;
  rule.points.reserve(n);
  rule.weights.reserve(n);
  for (int i = 0; i < n; ++i) {
    rule.points.emplace_back(0.5 * (x[i] + 1.0), 0.0);
    rule.weights.push_back(0.5 * w[i]);
  }
  return rule;
}

QuadRule quad_triangle(int degree) {
  if (degree < 1) degree = 1;
  if (degree > kMaxDegree) {
    throw std::invalid_argument("quad_triangle: degree " + std::to_string(degree) +
                                " exceeds maximum " + std::to_string(kMaxDegree));
  }

  QuadRule rule;
  if (degree == 1) {
    rule.points = {{1.0 / 3.0, 1.0 / 3.0}};
    rule.weights = {0.5};
    rule.exactness = 1;
    return rule;
  }
  if (degree == 2) {
    rule.points = {{1.0 / 6.0, 1.0 / 6.0}, {2.0 / 3.0, 1.0 / 6.0}, {1.0 / 6.0, 2.0 / 3.0}};
    rule.weights = {1.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0};
    rule.exactness = 2;
    return rule;
  }

  // Duffy map (u,v) -> (u, v(1-u)) with Jacobian (1-u). A monomial of total
  // degree d pulls back to u-degree <= d+1 and v-degree <= d, so GL with
  // n >= (d+2)/2 points per direction is exact.
  const int n = (degree + 2 + 1) / 2;  // ceil((degree+2)/2)
  std::vector<double> x, w;
  gauss_legendre(n, x, w);
  rule.points.reserve(n * n);
  rule.weights.reserve(n * n);
  for (int i = 0; i < n; ++i) {
    const double u = 0.5 * (x[i] + 1.0);
    const double wu = 0.5 * w[i];
    for (int j = 0; j < n; ++j) {
      const double v = 0.5 * (x[j] + 1.0);
      const double wv = 0.5 * w[j];
      rule.points.emplace_back(u, v * (1.0 - u));
      rule.weights.push_back(wu * wv * (1.0 - u));
    }
  }
  rule.exactness = 2 * n - 2;
  return rule;
}

}  // namespace stokesdg
