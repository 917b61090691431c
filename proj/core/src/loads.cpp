#include "stokesdg/loads.hpp"

#include <cmath>
#include <stdexcept>

#include "stokesdg/quadrature.hpp"

namespace stokesdg {

Load Load::strong(VectorFn f, int quad_degree) {
  if (!f) throw std::invalid_argument("Load::strong: f must be a pointwise function");
  Load load;
  load.kind = Kind::Strong;
  load.f = std::move(f);
  load.quad_degree = quad_degree;
  return load;
}

Load Load::weak_manufactured(VectorFn u, MatrixFn grad_u, ScalarFn p,
                             std::optional<double> discontinuity_x1, int quad_degree) {
  Load load;
  load.kind = Kind::WeakManufactured;
  load.u = std::move(u);
  load.grad_u = std::move(grad_u);
  load.p = std::move(p);
  load.discontinuity_x1 = discontinuity_x1;
  load.quad_degree = quad_degree;
  return load;
}

std::vector<std::array<Eigen::Vector2d, 3>> clip_triangle_vertical(
    const std::array<Eigen::Vector2d, 3>& tri, double a, bool keep_right) {
  // Clip the triangle against the half plane x <= a (or x >= a).
  std::vector<Eigen::Vector2d> poly(tri.begin(), tri.end());
  std::vector<Eigen::Vector2d> out;
  auto inside = [&](const Eigen::Vector2d& p) {
    return keep_right ? p[0] >= a : p[0] <= a;
  };
  for (size_t i = 0; i < poly.size(); ++i) {
    const Eigen::Vector2d& cur = poly[i];
    const Eigen::Vector2d& nxt = poly[(i + 1) % poly.size()];
    if (inside(cur)) out.push_back(cur);
    if (inside(cur) != inside(nxt)) {
      const double t = (a - cur[0]) / (nxt[0] - cur[0]);
      out.push_back(cur + t * (nxt - cur));
    }
  }
  std::vector<std::array<Eigen::Vector2d, 3>> tris;
  if (out.size() < 3) return tris;
  for (size_t i = 1; i + 1 < out.size(); ++i) {
    const std::array<Eigen::Vector2d, 3> t = {out[0], out[i], out[i + 1]};
    const double area2 = (t[1] - t[0])[0] * (t[2] - t[0])[1] -
                         (t[1] - t[0])[1] * (t[2] - t[0])[0];
    if (std::abs(area2) > 1e-15) tris.push_back(t);
  }
  return tris;
}

namespace {

void validate_weak_load(const Load& load, const TriangleMesh& mesh) {
  // Sampled divergence-free and zero-trace checks on the exact velocity.
  if (!load.u || !load.grad_u || !load.p) {
    throw std::invalid_argument("weak manufactured load: missing callables");
  }
  const QuadRule rule = quad_triangle(3);
  const int stride = std::max(1, mesh.num_triangles() / 50);
  for (int k = 0; k < mesh.num_triangles(); k += stride) {
    const AffineMap map = affine_map(mesh, k);
    for (int q = 0; q < rule.size(); ++q) {
      const Eigen::Vector2d x = map.apply(rule.points[q]);
      if (std::abs(load.grad_u(x).trace()) > 1e-10) {
        throw std::invalid_argument(
            "weak manufactured load: exact velocity is not divergence-free");
      }
    }
  }
  for (const Face& face : mesh.faces) {
    if (!face.is_boundary()) continue;
    const Eigen::Vector2d mid = 0.5 * (mesh.vertices[face.vertices[0]] +
                                       mesh.vertices[face.vertices[1]]);
    if (load.u(mid).norm() > 1e-10) {
      throw std::invalid_argument(
          "weak manufactured load: exact velocity has nonzero boundary trace");
    }
  }
}

}  // namespace

ChildLoadData evaluate_load(const Smoother& smoother, const Load& load, double mu) {
  const CompanionMesh& companion = smoother.companion();
  const TriangleMesh& cmesh = companion.mesh;
  if (load.kind == Load::Kind::WeakManufactured) {
    validate_weak_load(load, smoother.mesh());
  } else if (load.discontinuity_x1) {
    throw std::invalid_argument(
        "strong loads with a discontinuity line are not admissible: the "
        "duality is not defined for a general load under the identity "
        "smoother; use a weak manufactured load");
  }

  ChildLoadData data;
  data.kind = load.kind == Load::Kind::Strong ? ChildLoadData::Kind::Strong
                                              : ChildLoadData::Kind::Weak;
  const int nc = cmesh.num_triangles();
  data.points.resize(nc);
  if (data.kind == ChildLoadData::Kind::Strong) {
    data.f_vals.resize(nc);
  } else {
    data.mu_grad_u.resize(nc);
    data.p_vals.resize(nc);
  }

  const QuadRule rule = quad_triangle(load.quad_degree);

  auto add_point = [&](int child, const Eigen::Vector2d& child_ref, double weight,
                       const Eigen::Vector2d& x) {
    data.points[child].push_back({child_ref, weight});
    if (data.kind == ChildLoadData::Kind::Strong) {
      data.f_vals[child].push_back(load.f(x));
    } else {
      data.mu_grad_u[child].push_back(mu * load.grad_u(x));
      data.p_vals[child].push_back(load.p(x));
    }
  };

  for (int child = 0; child < nc; ++child) {
    const AffineMap& map = companion.child_maps[child];
    const auto& tri = cmesh.triangles[child];
    const std::array<Eigen::Vector2d, 3> verts = {
        cmesh.vertices[tri[0]], cmesh.vertices[tri[1]], cmesh.vertices[tri[2]]};

    bool crossed = false;
    if (load.discontinuity_x1) {
      const double a = *load.discontinuity_x1;
      double lo = verts[0][0], hi = verts[0][0];
      for (const auto& v : verts) {
        lo = std::min(lo, v[0]);
        hi = std::max(hi, v[0]);
      }
      crossed = lo < a && a < hi;
    }

    if (!crossed) {
      for (int q = 0; q < rule.size(); ++q) {
        add_point(child, rule.points[q], rule.weights[q] * map.jacobian_abs,
                  map.apply(rule.points[q]));
      }
      continue;
    }

    for (bool right : {false, true}) {
      for (const auto& sub : clip_triangle_vertical(verts, *load.discontinuity_x1, right)) {
        Eigen::Matrix2d sub_jac;
        sub_jac.col(0) = sub[1] - sub[0];
        sub_jac.col(1) = sub[2] - sub[0];
        const double jac = std::abs(sub_jac.determinant());
        for (int q = 0; q < rule.size(); ++q) {
          const Eigen::Vector2d x = sub[0] + sub_jac * rule.points[q];
          add_point(child, map.apply_inverse(x), rule.weights[q] * jac, x);
        }
      }
    }
  }
  return data;
}

}  // namespace stokesdg
