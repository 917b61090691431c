#pragma once

#include <Eigen/Core>
#include <array>
#include <iosfwd>
#include <vector>

namespace stokesdg {

/// Affine map F(x) = M x + b from the reference triangle (0,0),(1,0),(0,1)
/// onto a physical triangle, with positive Jacobian determinant.
struct AffineMap {
  Eigen::Matrix2d matrix;       // DF
  Eigen::Vector2d offset;
  double jacobian_abs;          // |det DF| = twice the triangle area
  Eigen::Matrix2d inverse;      // DF^{-1}
  Eigen::Matrix2d inverse_t;    // DF^{-T}

  Eigen::Vector2d apply(const Eigen::Vector2d& ref) const { return matrix * ref + offset; }
  Eigen::Vector2d apply_inverse(const Eigen::Vector2d& phys) const {
    return inverse * (phys - offset);
  }
};

/// Mesh edge. The normal is the unit normal pointing out of first_element;
/// boundary faces have second_element == -1 and the normal points out of
/// the domain. Jump convention: [v] = trace from first_element minus trace
/// from second_element.
struct Face {
  std::array<int, 2> vertices;  // endpoint vertex indices, sorted ascending
  Eigen::Vector2d normal;
  int first_element = -1;
  int second_element = -1;
  double diameter = 0.0;        // Euclidean length of the edge

  bool is_boundary() const { return second_element < 0; }
};

/// Conforming triangle mesh. Immutable after construction: the builders and
/// alfeld_split return new meshes, so concurrent reads are safe.
struct TriangleMesh {
  std::vector<Eigen::Vector2d> vertices;
  std::vector<std::array<int, 3>> triangles;  // positively oriented
  std::vector<Face> faces;
  // element_to_faces[K][e] = face opposite local vertex e
  std::vector<std::array<int, 3>> element_to_faces;
  double shape_constant = 0.0;  // max over K of h_K / rho_K

  int num_vertices() const { return static_cast<int>(vertices.size()); }
  int num_triangles() const { return static_cast<int>(triangles.size()); }
  int num_faces() const { return static_cast<int>(faces.size()); }

  double triangle_area(int k) const;
  double triangle_diameter(int k) const;
  Eigen::Vector2d barycenter(int k) const;
};

/// Mesh from raw vertex/triangle arrays; builds faces, normals and the
/// shape constant, and validates orientation and conformity.
TriangleMesh make_mesh(std::vector<Eigen::Vector2d> vertices,
                       std::vector<std::array<int, 3>> triangles);

/// 2^N x 2^N grid of the unit square, each cell cut along the diagonal of
/// positive slope: 2*4^N triangles.
TriangleMesh build_diagonal(int n_levels);

/// 2^N x 2^N grid of the unit square, each cell cut along both diagonals
/// (vertex at the cell center): 4*4^N triangles.
TriangleMesh build_crisscross(int n_levels);

/// Barycentric (Alfeld) split: each triangle is replaced by the three
/// children obtained by connecting its vertices with the barycenter.
/// Child 3k+t of parent k has vertices (v_t, v_{t+1}, barycenter).
struct AlfeldSplit {
  TriangleMesh mesh;
  std::vector<int> parent;  // child triangle -> parent triangle
};
AlfeldSplit alfeld_split(const TriangleMesh& mesh);

/// Map of the reference triangle onto triangle k, vertex order as stored.
AffineMap affine_map(const TriangleMesh& mesh, int k);

/// Plain-text dump: "nv nt" header, one "x y" line per vertex, one
/// "i j k" line per triangle (0-based). Debugging aid.
void dump_mesh(const TriangleMesh& mesh, std::ostream& os);

}  // namespace stokesdg
