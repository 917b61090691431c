#include "stokesdg/mesh.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <stdexcept>

namespace stokesdg {

namespace {

double signed_area(const Eigen::Vector2d& a, const Eigen::Vector2d& b,
                   const Eigen::Vector2d& c) {
  return 0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]));
}

}  // namespace

double TriangleMesh::triangle_area(int k) const {
  const auto& t = triangles[k];
  return signed_area(vertices[t[0]], vertices[t[1]], vertices[t[2]]);
}

double TriangleMesh::triangle_diameter(int k) const {
  const auto& t = triangles[k];
  double h = 0.0;
  for (int e = 0; e < 3; ++e) {
    h = std::max(h, (vertices[t[(e + 1) % 3]] - vertices[t[(e + 2) % 3]]).norm());
  }
  return h;
}

Eigen::Vector2d TriangleMesh::barycenter(int k) const {
  const auto& t = triangles[k];
  return (vertices[t[0]] + vertices[t[1]] + vertices[t[2]]) / 3.0;
}

TriangleMesh make_mesh(std::vector<Eigen::Vector2d> vertices,
                       std::vector<std::array<int, 3>> triangles) {
  TriangleMesh mesh;
  mesh.vertices = std::move(vertices);
  mesh.triangles = std::move(triangles);

  const int nt = mesh.num_triangles();
  mesh.element_to_faces.assign(nt, {-1, -1, -1});

  double shape = 0.0;
  for (int k = 0; k < nt; ++k) {
    const double area = mesh.triangle_area(k);
    if (!(area > 0.0)) {
      throw std::runtime_error("make_mesh: triangle " + std::to_string(k) +
                               " is degenerate or negatively oriented");
    }
    const auto& t = mesh.triangles[k];
    double perimeter = 0.0;
    for (int e = 0; e < 3; ++e) {
      perimeter += (mesh.vertices[t[(e + 1) % 3]] - mesh.vertices[t[(e + 2) % 3]]).norm();
    }
    const double h = mesh.triangle_diameter(k);
    const double rho = 4.0 * area / perimeter;  // diameter of the inscribed circle
    shape = std::max(shape, h / rho);
  }
  mesh.shape_constant = shape;

  // Edge -> incident triangles; iteration over the ordered map fixes the
  // face numbering deterministically.
  std::map<std::pair<int, int>, std::array<int, 2>> edge_map;
  for (int k = 0; k < nt; ++k) {
    const auto& t = mesh.triangles[k];
    for (int e = 0; e < 3; ++e) {
      int a = t[(e + 1) % 3], b = t[(e + 2) % 3];
      if (a > b) std::swap(a, b);
      auto [it, inserted] = edge_map.try_emplace({a, b}, std::array<int, 2>{k, -1});
      if (!inserted) {
        if (it->second[1] != -1) {
          throw std::runtime_error("make_mesh: edge shared by more than two triangles");
        }
        it->second[1] = k;
      }
    }
  }

  mesh.faces.reserve(edge_map.size());
  for (const auto& [key, elems] : edge_map) {
    Face f;
    f.vertices = {key.first, key.second};
    int k1 = elems[0], k2 = elems[1];
    if (k2 >= 0 && k2 < k1) std::swap(k1, k2);  // K1 is the smaller element index
    f.first_element = k1;
    f.second_element = k2;
    const Eigen::Vector2d a = mesh.vertices[key.first];
    const Eigen::Vector2d b = mesh.vertices[key.second];
    f.diameter = (b - a).norm();
    Eigen::Vector2d n(b[1] - a[1], a[0] - b[0]);
    n.normalize();
    // Orient out of K1: away from the opposite vertex.
    const auto& t1 = mesh.triangles[k1];
    int opposite = -1;
    for (int e = 0; e < 3; ++e) {
      if (t1[e] != key.first && t1[e] != key.second) opposite = t1[e];
    }
    if (n.dot(0.5 * (a + b) - mesh.vertices[opposite]) < 0.0) n = -n;
    f.normal = n;

    const int fi = static_cast<int>(mesh.faces.size());
    for (int k : {k1, k2}) {
      if (k < 0) continue;
      const auto& t = mesh.triangles[k];
      for (int e = 0; e < 3; ++e) {
        const int va = t[(e + 1) % 3], vb = t[(e + 2) % 3];
        if (std::minmax(va, vb) == std::minmax(key.first, key.second)) {
          mesh.element_to_faces[k][e] = fi;
        }
      }
    }
    mesh.faces.push_back(f);
  }

  for (int k = 0; k < nt; ++k) {
    for (int e = 0; e < 3; ++e) {
      if (mesh.element_to_faces[k][e] < 0) {
        throw std::runtime_error("make_mesh: incomplete face connectivity");
      }
    }
  }
  return mesh;
}

TriangleMesh build_diagonal(int n_levels) {
  if (n_levels < 0) throw std::invalid_argument("build_diagonal: N must be >= 0");
  const int n = 1 << n_levels;
  std::vector<Eigen::Vector2d> verts;
  verts.reserve((n + 1) * (n + 1));
  for (int j = 0; j <= n; ++j) {
    for (int i = 0; i <= n; ++i) verts.emplace_back(double(i) / n, double(j) / n);
  }
  auto vid = [n](int i, int j) { return j * (n + 1) + i; };
  std::vector<std::array<int, 3>> tris;
  tris.reserve(2 * n * n);
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      const int a = vid(i, j), b = vid(i + 1, j), c = vid(i + 1, j + 1), d = vid(i, j + 1);
      tris.push_back({a, b, c});
      tris.push_back({a, c, d});
    }
  }
  return make_mesh(std::move(verts), std::move(tris));
}

TriangleMesh build_crisscross(int n_levels) {
  if (n_levels < 0) throw std::invalid_argument("build_crisscross: N must be >= 0");
  const int n = 1 << n_levels;
  std::vector<Eigen::Vector2d> verts;
  verts.reserve((n + 1) * (n + 1) + n * n);
  for (int j = 0; j <= n; ++j) {
    for (int i = 0; i <= n; ++i) verts.emplace_back(double(i) / n, double(j) / n);
  }
  const int center_base = (n + 1) * (n + 1);
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) verts.emplace_back((i + 0.5) / n, (j + 0.5) / n);
  }
  auto vid = [n](int i, int j) { return j * (n + 1) + i; };
  std::vector<std::array<int, 3>> tris;
  tris.reserve(4 * n * n);
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      const int a = vid(i, j), b = vid(i + 1, j), c = vid(i + 1, j + 1), d = vid(i, j + 1);
      const int m = center_base + j * n + i;
      tris.push_back({a, b, m});
      tris.push_back({b, c, m});
      tris.push_back({c, d, m});
      tris.push_back({d, a, m});
    }
  }
  return make_mesh(std::move(verts), std::move(tris));
}

AlfeldSplit alfeld_split(const TriangleMesh& mesh) {
  std::vector<Eigen::Vector2d> verts = mesh.vertices;
  verts.reserve(verts.size() + mesh.num_triangles());
  const int base = mesh.num_vertices();
  for (int k = 0; k < mesh.num_triangles(); ++k) verts.push_back(mesh.barycenter(k));

  std::vector<std::array<int, 3>> tris;
  std::vector<int> parent;
  tris.reserve(3 * mesh.num_triangles());
  parent.reserve(3 * mesh.num_triangles());
  for (int k = 0; k < mesh.num_triangles(); ++k) {
    const auto& t = mesh.triangles[k];
    for (int e = 0; e < 3; ++e) {
      tris.push_back({t[e], t[(e + 1) % 3], base + k});
      parent.push_back(k);
    }
  }
  return {make_mesh(std::move(verts), std::move(tris)), std::move(parent)};
}

AffineMap affine_map(const TriangleMesh& mesh, int k) {
  const auto& t = mesh.triangles[k];
  const Eigen::Vector2d v0 = mesh.vertices[t[0]];
  const Eigen::Vector2d v1 = mesh.vertices[t[1]];
  const Eigen::Vector2d v2 = mesh.vertices[t[2]];
  AffineMap map;
  map.matrix.col(0) = v1 - v0;
  map.matrix.col(1) = v2 - v0;
  map.offset = v0;
  const double det = map.matrix.determinant();
  if (!(det > 0.0)) {
    throw std::runtime_error("affine_map: degenerate triangle " + std::to_string(k));
  }
  map.jacobian_abs = det;
  map.inverse = map.matrix.inverse();
  map.inverse_t = map.inverse.transpose();
  return map;
}

void dump_mesh(const TriangleMesh& mesh, std::ostream& os) {
  os << mesh.num_vertices() << " " << mesh.num_triangles() << "\n";
  for (const auto& v : mesh.vertices) os << v[0] << " " << v[1] << "\n";
  for (const auto& t : mesh.triangles) os << t[0] << " " << t[1] << " " << t[2] << "\n";
}

}  // namespace stokesdg
