#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "stokesdg/basis.hpp"
#include "stokesdg/piola.hpp"
#include "stokesdg/polynomial.hpp"
#include "stokesdg/quadrature.hpp"

using namespace stokesdg;

namespace {

double quad_integrate(const QuadRule& rule, int i, int j) {
  double s = 0.0;
  for (int q = 0; q < rule.size(); ++q) {
    s += rule.weights[q] * std::pow(rule.points[q][0], i) * std::pow(rule.points[q][1], j);
  }
  return s;
}

// Independent moment oracle: x^i y^j over the reference triangle via the
// Beta-integral product i! j! / (i+j+2)!.
double moment_oracle(int i, int j) {
  double v = 1.0;
  for (int k = 1; k <= j; ++k) v *= double(k) / (i + k);
  v /= double(i + j + 1) * double(i + j + 2);
  return v;
}

AffineMap make_map(const Eigen::Matrix2d& m, const Eigen::Vector2d& b) {
  AffineMap map;
  map.matrix = m;
  map.offset = b;
  map.jacobian_abs = std::abs(m.determinant());
  map.inverse = m.inverse();
  map.inverse_t = map.inverse.transpose();
  return map;
}

Poly2 random_poly(int degree, std::mt19937& rng) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  Poly2 p(degree);
  for (double& c : p.coefficients()) c = dist(rng);
  return p;
}

}  // namespace

TEST_CASE("triangle quadrature: centroid rule at degree 1") {
  const QuadRule r = quad_triangle(1);
  CHECK(r.size() == 1);
  CHECK(r.weights[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(r.points[0][0] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("triangle quadrature: degree-2 rule integrates x*y to 1/24") {
  const QuadRule r = quad_triangle(2);
  CHECK(quad_integrate(r, 1, 1) == doctest::Approx(1.0 / 24.0).epsilon(1e-14));
}

TEST_CASE("triangle quadrature: degree-14 rule integrates x^7 y^7 exactly") {
  const QuadRule r = quad_triangle(14);
  const double exact = moment_oracle(7, 7);
  CHECK(quad_integrate(r, 7, 7) == doctest::Approx(exact).epsilon(1e-13));
}

TEST_CASE("triangle quadrature: exactness and positivity across degrees") {
  for (int degree : {1, 2, 3, 4, 5, 7, 9, 11, 14, 18, 22}) {
    const QuadRule r = quad_triangle(degree);
    REQUIRE(r.exactness >= degree);
    double wsum = 0.0;
    for (double w : r.weights) {
      CHECK(w > 0.0);
      wsum += w;
    }
    CHECK(wsum == doctest::Approx(0.5).epsilon(1e-14));
    for (int k = 0; k <= r.exactness; ++k) {
      for (int j = 0; j <= k; ++j) {
        const double exact = moment_oracle(k - j, j);
        CHECK(std::abs(quad_integrate(r, k - j, j) - exact) <= 1e-13 * std::abs(exact));
      }
    }
  }
}

TEST_CASE("triangle quadrature rejects degrees above the implemented maximum") {
  CHECK_THROWS_WITH_AS(quad_triangle(max_quadrature_degree() + 1),
                       doctest::Contains("maximum"), std::invalid_argument);
}

TEST_CASE("edge quadrature: midpoint rule at degree 1") {
  const QuadRule r = quad_edge(1);
  CHECK(r.size() == 1);
  CHECK(r.points[0][0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(r.weights[0] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("edge quadrature: two-point rule integrates t^2 to 1/3") {
  const QuadRule r = quad_edge(3);
  CHECK(r.size() == 2);
  CHECK(quad_integrate(r, 2, 0) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("edge quadrature: five-point rule integrates t^9 to 1/10") {
  const QuadRule r = quad_edge(9);
  CHECK(r.size() == 5);
  CHECK(std::abs(quad_integrate(r, 9, 0) - 0.1) <= 1e-14);
}

TEST_CASE("edge quadrature: Gauss exactness across degrees") {
  for (int degree : {0, 1, 2, 5, 8, 13, 20}) {
    const QuadRule r = quad_edge(degree);
    REQUIRE(r.exactness >= degree);
    for (int k = 0; k <= r.exactness; ++k) {
      const double exact = 1.0 / (k + 1);
      CHECK(std::abs(quad_integrate(r, k, 0) - exact) <= 1e-14 * exact);
    }
  }
}

TEST_CASE("Lagrange triangle basis: cardinality, Kronecker, partition of unity") {
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  for (int degree : {0, 1, 2, 3, 4, 5}) {
    const TriangleBasis basis(degree);
    CHECK(basis.size() == (degree + 1) * (degree + 2) / 2);
    for (int a = 0; a < basis.size(); ++a) {
      const Eigen::VectorXd phi = basis.eval_all(basis.nodes()[a].point);
      for (int b = 0; b < basis.size(); ++b) {
        CHECK(std::abs(phi[b] - (a == b ? 1.0 : 0.0)) <= 1e-12);
      }
    }
    for (int trial = 0; trial < 20; ++trial) {
      double x = dist(rng), y = dist(rng);
      if (x + y > 1.0) {
        x = 1.0 - x;
        y = 1.0 - y;
      }
      const Eigen::VectorXd phi = basis.eval_all({x, y});
      CHECK(std::abs(phi.sum() - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("edge basis: cardinality and Kronecker") {
  for (int degree : {0, 1, 2, 3}) {
    const EdgeBasis basis(degree);
    CHECK(basis.size() == degree + 1);
    for (int a = 0; a < basis.size(); ++a) {
      for (int b = 0; b < basis.size(); ++b) {
        CHECK(std::abs(basis.eval(a, basis.nodes()[b]) - (a == b ? 1.0 : 0.0)) <= 1e-13);
      }
    }
  }
}

TEST_CASE("curl of x*y is (x, -y)") {
  const Poly2 w = Poly2::monomial(1, 1);
  const VecPoly2 c = curl_scalar(w);
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  for (int t = 0; t < 10; ++t) {
    const Eigen::Vector2d x(dist(rng), dist(rng));
    CHECK(c.x.eval(x) == doctest::Approx(x[0]).epsilon(1e-14));
    CHECK(c.y.eval(x) == doctest::Approx(-x[1]).epsilon(1e-14));
  }
}

TEST_CASE("rot annihilates gradients up to degree 4") {
  std::mt19937 rng(11);
  for (int deg = 1; deg <= 4; ++deg) {
    const Poly2 q = random_poly(deg, rng);
    const Poly2 r = rot_vector({q.dx(), q.dy()});
    for (double c : r.coefficients()) CHECK(std::abs(c) <= 1e-13);
  }
}

TEST_CASE("rot of x-perp is 2") {
  const VecPoly2 v(Poly2::monomial(0, 1, -1.0), Poly2::monomial(1, 0, 1.0));
  const Poly2 r = rot_vector(v);
  CHECK(r.eval({0.3, 0.7}) == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("div curl = 0") {
  std::mt19937 rng(13);
  const Poly2 w = random_poly(5, rng);
  const Poly2 d = curl_scalar(w).divergence();
  for (double c : d.coefficients()) CHECK(std::abs(c) <= 1e-12);
}

TEST_CASE("polynomial decomposition: dimensions and nonsingular Gram for k <= 4") {
  for (int k = 0; k <= 4; ++k) {
    const PolyDecompBasis decomp(k);
    CHECK(decomp.size() == (k + 1) * (k + 2));

    const int n = decomp.size();
    std::vector<const VecPoly2*> all;
    for (const auto& v : decomp.gradient_part) all.push_back(&v);
    for (const auto& v : decomp.rotational_part) all.push_back(&v);
    Eigen::MatrixXd gram(n, n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        gram(i, j) = (all[i]->x * all[j]->x + all[i]->y * all[j]->y).integral_ref_triangle();
      }
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(gram);
    CHECK(svd.singularValues().minCoeff() > 1e-12);
  }
}

TEST_CASE("rot is injective on x-perp P_{k-1}") {
  for (int k = 1; k <= 4; ++k) {
    const auto basis = xperp_basis(k - 1);
    const int n = static_cast<int>(basis.size());
    const int m = poly_space_dim(k - 1);
    Eigen::MatrixXd rot(m, n);
    for (int b = 0; b < n; ++b) {
      const Poly2 r = rot_vector(basis[b]);
      for (int idx = 0; idx < m; ++idx) {
        rot(idx, b) = idx < static_cast<int>(r.coefficients().size())
                          ? r.coefficients()[idx]
                          : 0.0;
      }
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(rot);
    CHECK(qr.rank() == n);
  }
}

TEST_CASE("piola: identity map leaves fields unchanged") {
  const AffineMap id = make_map(Eigen::Matrix2d::Identity(), Eigen::Vector2d::Zero());
  std::mt19937 rng(17);
  const VecPoly2 v(random_poly(2, rng), random_poly(2, rng));
  const VecPoly2 pc = piola_con_push(id, v);
  const VecPoly2 pv = piola_cov_push(id, v);
  for (int t = 0; t < 5; ++t) {
    const Eigen::Vector2d x(0.1 * t, 0.13 * t);
    CHECK((pc.eval(x) - v.eval(x)).norm() <= 1e-14);
    CHECK((pv.eval(x) - v.eval(x)).norm() <= 1e-14);
  }
}

TEST_CASE("piola: scaling map h*Id gives h^{-1} v o F^{-1}") {
  const double h = 0.3;
  const AffineMap map = make_map(h * Eigen::Matrix2d::Identity(), Eigen::Vector2d::Zero());
  std::mt19937 rng(19);
  const VecPoly2 v(random_poly(2, rng), random_poly(2, rng));
  const VecPoly2 pc = piola_con_push(map, v);
  const Eigen::Vector2d x(0.12, 0.07);
  const Eigen::Vector2d expected = v.eval(x / h) / h;
  CHECK((pc.eval(x) - expected).norm() <= 1e-12);
}

TEST_CASE("piola duality: int P^con v . P^cov w = int v . w") {
  std::mt19937 rng(23);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  const QuadRule rule = quad_triangle(8);
  for (int trial = 0; trial < 5; ++trial) {
    Eigen::Matrix2d m;
    do {
      m << dist(rng), dist(rng), dist(rng), dist(rng);
    } while (std::abs(m.determinant()) < 0.2);
    const AffineMap map = make_map(m, {dist(rng), dist(rng)});

    const VecPoly2 v(random_poly(2, rng), random_poly(2, rng));
    const VecPoly2 w(random_poly(2, rng), random_poly(2, rng));
    const VecPoly2 pv = piola_con_push(map, v);
    const VecPoly2 pw = piola_cov_push(map, w);

    // Reference-side integral, exact.
    const double ref = (v.x * w.x + v.y * w.y).integral_ref_triangle();
    // Physical-side integral by quadrature over the mapped triangle.
    double phys = 0.0;
    for (int q = 0; q < rule.size(); ++q) {
      const Eigen::Vector2d x = map.apply(rule.points[q]);
      phys += rule.weights[q] * map.jacobian_abs * pv.eval(x).dot(pw.eval(x));
    }
    CHECK(std::abs(phys - ref) <= 1e-12 * std::max(1.0, std::abs(ref)));
  }
}

TEST_CASE("piola divergence identity") {
  std::mt19937 rng(29);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  Eigen::Matrix2d m;
  m << 1.2, 0.3, -0.4, 0.9;
  const AffineMap map = make_map(m, {0.2, -0.1});
  const VecPoly2 v(random_poly(3, rng), random_poly(3, rng));
  const Poly2 div_phys = piola_con_push(map, v).divergence();
  const Poly2 div_ref = v.divergence();
  for (int t = 0; t < 10; ++t) {
    const Eigen::Vector2d ref(0.1 + 0.05 * t, 0.07 * t / 2.0);
    const Eigen::Vector2d x = map.apply(ref);
    CHECK(div_phys.eval(x) ==
          doctest::Approx(div_ref.eval(ref) / map.jacobian_abs).epsilon(1e-11));
  }
}

TEST_CASE("piola scaling inequality on random fields") {
  std::mt19937 rng(31);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  const QuadRule rule = quad_triangle(8);
  for (int trial = 0; trial < 5; ++trial) {
    Eigen::Matrix2d m;
    do {
      m << dist(rng), dist(rng), dist(rng), dist(rng);
    } while (std::abs(m.determinant()) < 0.2);
    const AffineMap map = make_map(m, {0.0, 0.0});
    const VecPoly2 v(random_poly(2, rng), random_poly(2, rng));
    const VecPoly2 pv = piola_con_push(map, v);

    double norm_ref_sq = (v.x * v.x + v.y * v.y).integral_ref_triangle();
    double norm_phys_sq = 0.0;
    for (int q = 0; q < rule.size(); ++q) {
      const Eigen::Vector2d x = map.apply(rule.points[q]);
      norm_phys_sq += rule.weights[q] * map.jacobian_abs * pv.eval(x).squaredNorm();
    }
    // h_K of the mapped triangle
    const Eigen::Vector2d p0 = map.apply({0, 0}), p1 = map.apply({1, 0}), p2 = map.apply({0, 1});
    const double h = std::max({(p1 - p0).norm(), (p2 - p0).norm(), (p2 - p1).norm()});
    // ||DF|| <= h_K / rho(K_ref) with rho the inscribed-circle diameter of
    // the unit right triangle, 2 - sqrt(2).
    const double rho_ref = 2.0 - std::sqrt(2.0);
    CHECK(std::sqrt(norm_phys_sq) <=
          std::sqrt(norm_ref_sq) * h / (rho_ref * std::sqrt(map.jacobian_abs)) + 1e-12);
  }
}

TEST_CASE("poly compose_affine matches pointwise composition") {
  std::mt19937 rng(37);
  const Poly2 p = random_poly(4, rng);
  Eigen::Matrix2d A;
  A << 0.7, -0.2, 0.4, 1.1;
  const Eigen::Vector2d b(0.3, -0.6);
  const Poly2 q = p.compose_affine(A, b);
  for (int t = 0; t < 10; ++t) {
    const Eigen::Vector2d x(0.1 * t - 0.4, 0.05 * t);
    CHECK(q.eval(x) == doctest::Approx(p.eval(A * x + b)).epsilon(1e-12));
  }
}
