#include "stokesdg/basis.hpp"

#include <stdexcept>

namespace stokesdg {

TriangleBasis::TriangleBasis(int degree) : degree_(degree) {
  if (degree < 0) throw std::invalid_argument("TriangleBasis: negative degree");

  if (degree == 0) {
    nodes_.push_back({0, 0, 0, Eigen::Vector2d(1.0 / 3.0, 1.0 / 3.0)});
    polys_.push_back(Poly2::constant(1.0));
    coeff_ = Eigen::MatrixXd::Ones(1, 1);
    return;
  }

  for (int j = 0; j <= degree; ++j) {
    for (int i = 0; i + j <= degree; ++i) {
      LatticeNode n;
      n.b1 = i;
      n.b2 = j;
      n.b0 = degree - i - j;
      n.point = Eigen::Vector2d(double(i) / degree, double(j) / degree);
      nodes_.push_back(n);
    }
  }

  const int m = size();
  Eigen::MatrixXd V(m, m);  // V(a, mono) = mono(node_a)
  for (int a = 0; a < m; ++a) {
    for (int k = 0, idx = 0; k <= degree; ++k) {
      for (int jj = 0; jj <= k; ++jj, ++idx) {
        const int ii = k - jj;
        V(a, idx) = std::pow(nodes_[a].point[0], ii) * std::pow(nodes_[a].point[1], jj);
      }
    }
  }
  // coeff_ = V^{-1}: column a holds the monomial coefficients of phi_a.
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(V);
  coeff_ = lu.solve(Eigen::MatrixXd::Identity(m, m));
  // One step of iterative refinement keeps the Kronecker property well below
  // 1e-12 also for the higher lattice degrees used here.
  coeff_ += lu.solve(Eigen::MatrixXd::Identity(m, m) - V * coeff_);

  polys_.reserve(m);
  for (int a = 0; a < m; ++a) {
    Poly2 p(degree);
    for (int idx = 0; idx < m; ++idx) p.coefficients()[idx] = coeff_(idx, a);
    polys_.push_back(std::move(p));
  }
}

Eigen::VectorXd TriangleBasis::eval_all(const Eigen::Vector2d& x) const {
  const int m = size();
  Eigen::VectorXd mono(m);
  for (int k = 0, idx = 0; k <= degree_; ++k) {
    for (int j = 0; j <= k; ++j, ++idx) {
      mono(idx) = std::pow(x[0], k - j) * std::pow(x[1], j);
    }
  }
  return coeff_.transpose() * mono;
}

Eigen::MatrixXd TriangleBasis::grad_all(const Eigen::Vector2d& x) const {
  const int m = size();
  Eigen::MatrixXd g(m, 2);
  Eigen::VectorXd dmx(m), dmy(m);
  for (int k = 0, idx = 0; k <= degree_; ++k) {
    for (int j = 0; j <= k; ++j, ++idx) {
      const int i = k - j;
      dmx(idx) = i > 0 ? i * std::pow(x[0], i - 1) * std::pow(x[1], j) : 0.0;
      dmy(idx) = j > 0 ? j * std::pow(x[0], i) * std::pow(x[1], j - 1) : 0.0;
    }
  }
  g.col(0) = coeff_.transpose() * dmx;
  g.col(1) = coeff_.transpose() * dmy;
  return g;
}

Poly2 TriangleBasis::to_poly(const Eigen::VectorXd& nodal) const {
  Poly2 p(degree_);
  Eigen::VectorXd c = coeff_ * nodal;
  for (int idx = 0; idx < c.size(); ++idx) p.coefficients()[idx] = c(idx);
  return p;
}

int TriangleBasis::find_node(int b0, int b1, int b2) const {
  for (int a = 0; a < size(); ++a) {
    if (nodes_[a].b0 == b0 && nodes_[a].b1 == b1 && nodes_[a].b2 == b2) return a;
  }
  return -1;
}

EdgeBasis::EdgeBasis(int degree) : degree_(degree) {
  if (degree < 0) throw std::invalid_argument("EdgeBasis: negative degree");
  if (degree == 0) {
    nodes_ = {0.5};
    return;
  }
  nodes_.reserve(degree + 1);
  for (int k = 0; k <= degree; ++k) nodes_.push_back(double(k) / degree);
}

double EdgeBasis::eval(int a, double t) const {
  if (degree_ == 0) return 1.0;
  double v = 1.0;
  for (int b = 0; b < size(); ++b) {
    if (b == a) continue;
    v *= (t - nodes_[b]) / (nodes_[a] - nodes_[b]);
  }
  return v;
}

Eigen::VectorXd EdgeBasis::eval_all(double t) const {
  Eigen::VectorXd v(size());
  for (int a = 0; a < size(); ++a) v(a) = eval(a, t);
  return v;
}

std::vector<VecPoly2> xperp_basis(int k) {
  std::vector<VecPoly2> out;
  if (k < 0) return out;
  for (int d = 0; d <= k; ++d) {
    for (int j = 0; j <= d; ++j) {
      const int i = d - j;
      // x-perp r = (-y r, x r) with r = x^i y^j
      out.emplace_back(Poly2::monomial(i, j + 1, -1.0), Poly2::monomial(i + 1, j, 1.0));
    }
  }
  return out;
}

PolyDecompBasis::PolyDecompBasis(int k_) : k(k_) {
  for (int d = 1; d <= k + 1; ++d) {
    for (int j = 0; j <= d; ++j) {
      const Poly2 q = Poly2::monomial(d - j, j);
      gradient_part.emplace_back(q.dx(), q.dy());
    }
  }
  rotational_part = xperp_basis(k - 1);
}

}  // namespace stokesdg
