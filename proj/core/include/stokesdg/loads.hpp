#pragma once

#include <Eigen/Core>
#include <functional>
#include <optional>

#include "stokesdg/smoother.hpp"

namespace stokesdg {

using VectorFn = std::function<Eigen::Vector2d(const Eigen::Vector2d&)>;
using MatrixFn = std::function<Eigen::Matrix2d(const Eigen::Vector2d&)>;
using ScalarFn = std::function<double(const Eigen::Vector2d&)>;

/// Right-hand side data. Strong loads evaluate f pointwise; weak
/// manufactured loads represent <f, w> = mu int grad u : grad w - int p div w
/// for an exact pair (u, p) with u divergence-free and zero on the boundary.
/// A vertical discontinuity line of p is integrated exactly by clipping.
struct Load {
  enum class Kind { Strong, WeakManufactured };
  Kind kind = Kind::Strong;

  VectorFn f;        // Strong
  VectorFn u;        // WeakManufactured: exact velocity (used for checks)
  MatrixFn grad_u;   // WeakManufactured
  ScalarFn p;        // WeakManufactured
  std::optional<double> discontinuity_x1;
  int quad_degree = 12;

  static Load strong(VectorFn f, int quad_degree = 12);
  static Load weak_manufactured(VectorFn u, MatrixFn grad_u, ScalarFn p,
                                std::optional<double> discontinuity_x1 = std::nullopt,
                                int quad_degree = 12);
};

/// Sub-triangles of a triangle strictly on one side of the line x = a
/// (Sutherland-Hodgman clip plus a fan triangulation). Slivers below the
/// area cutoff are dropped.
std::vector<std::array<Eigen::Vector2d, 3>> clip_triangle_vertical(
    const std::array<Eigen::Vector2d, 3>& tri, double a, bool keep_right);

/// Quadrature + load data over the companion children of a smoother. For
/// weak loads, validates by sampling that u is divergence-free with zero
/// boundary trace. Children crossed by the discontinuity line are clipped.
ChildLoadData evaluate_load(const Smoother& smoother, const Load& load, double mu);

}  // namespace stokesdg
