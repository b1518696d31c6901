#pragma once

#include <array>
#include <functional>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "pcp/geometry.hpp"

namespace pcp {

class GlobalSdf;

/// Regular lattice of SDF samples. Node (i, j[, k]) sits at
/// origin + (i, j[, k]) * spacing; x varies fastest in `values`.
struct SdfGrid {
  Vector origin;
  Vector spacing;
  std::vector<int> resolution;
  std::vector<double> values;

  int dim() const { return static_cast<int>(resolution.size()); }
  std::size_t index(int i, int j, int k = 0) const;
  double at(int i, int j, int k = 0) const { return values[index(i, j, k)]; }
  Vector node(int i, int j, int k = 0) const;
};

struct Bounds {
  Vector lo;
  Vector hi;
};

/// Bounding box of the cloud grown by `inflate` times its extent on each side
/// (0.1 = 10% per axis).
Bounds default_bounds(const PointCloud& cloud, double inflate = 0.1);

/// Batched scalar field: rows of positions -> values.
using ScalarField = std::function<Vector(const Matrix&)>;

/// Samples `field` on every lattice node. Throws Error(Numeric) naming the
/// lattice coordinate of the first non-finite sample.
SdfGrid eval_sdf_grid(const ScalarField& field, const Bounds& bounds, const std::vector<int>& resolution,
                      int threads = 1);
SdfGrid eval_sdf_grid(const GlobalSdf& sdf, const Bounds& bounds, const std::vector<int>& resolution,
                      int threads = 1);

struct TriangleMesh {
  std::vector<Eigen::Vector3d> vertices;
  std::vector<std::array<int, 3>> triangles;
  std::vector<Eigen::Vector3d> normals;  // optional, per vertex

  bool empty() const { return triangles.empty(); }
};

/// Table-driven marching cubes with linear edge interpolation. Vertices are
/// welded by lattice edge; faces are wound so their normals point toward
/// increasing field values (outward for an SDF that is negative inside).
TriangleMesh marching_cubes(const SdfGrid& grid, double iso = 0.0);

struct Contour {
  std::vector<Eigen::Vector2d> points;
  bool closed = false;
};

/// 16-case marching squares. Saddle cells are decided by `center` at the cell
/// center when given, otherwise by the mean of the four corners.
std::vector<Contour> marching_squares(const SdfGrid& grid, double iso = 0.0,
                                      const std::optional<ScalarField>& center = std::nullopt);

/// Vertex count minus edge count plus face count.
long euler_characteristic(const TriangleMesh& mesh);
/// Every undirected edge is used by exactly two triangles.
bool is_watertight(const TriangleMesh& mesh);

/// Points spaced at most `step` apart along all contour segments.
Matrix sample_contours(const std::vector<Contour>& contours, double step);

}  // namespace pcp
