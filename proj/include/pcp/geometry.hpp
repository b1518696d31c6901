#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace pcp {

/// n x dim, one position per row.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

struct PointCloud {
  Matrix points;
  std::optional<Matrix> normals;

  PointCloud() = default;
  explicit PointCloud(Matrix pts, std::optional<Matrix> nrm = std::nullopt);

  int dim() const { return static_cast<int>(points.cols()); }
  std::size_t size() const { return static_cast<std::size_t>(points.rows()); }
  bool empty() const { return points.rows() == 0; }
};

/// Validates dimension (2 or 3), finiteness and non-emptiness.
void validate_cloud(const PointCloud& cloud);

struct Neighbor {
  std::int64_t index = -1;
  double dist2 = 0.0;
};

/// Exact Euclidean nearest-neighbour search (kd-tree). Equidistant candidates
/// resolve to the lowest point index. Immutable after construction.
class SpatialIndex {
 public:
  explicit SpatialIndex(const Matrix& points);

  std::size_t size() const { return static_cast<std::size_t>(points_.rows()); }
  int dim() const { return static_cast<int>(points_.cols()); }
  const Matrix& points() const { return points_; }

  Neighbor nearest(const double* q) const;
  Neighbor nearest(const Vector& q) const { return nearest(q.data()); }
  /// k nearest, ascending by (distance, index). Returns min(k, size) entries.
  std::vector<Neighbor> knearest(const double* q, std::size_t k) const;

 private:
  struct KdNode {
    std::int32_t begin, end;  // range into order_
    std::int32_t left = -1, right = -1;
    std::int32_t axis = -1;
    double split = 0.0;
  };
  std::int32_t build(std::int32_t begin, std::int32_t end);
  void search_nearest(std::int32_t node, const double* q, Neighbor& best) const;
  void search_knn(std::int32_t node, const double* q, std::size_t k, std::vector<Neighbor>& heap) const;
  double dist2(std::int64_t i, const double* q) const;

  Matrix points_;
  std::vector<std::int64_t> order_;
  std::vector<KdNode> nodes_;
};

SpatialIndex build_index(const PointCloud& cloud);

struct KthDistance {
  double distance = 0.0;
  /// k exceeded the available neighbours and was clamped.
  bool clamped = false;
  std::size_t k_used = 0;
};

/// Distance from p to its k-th nearest cloud point, not counting p itself when
/// p is a cloud member (one exact copy is excluded).
KthDistance kth_nn_distance(const SpatialIndex& index, const double* p, std::size_t k);

/// Cell of a regular bounding-box grid and the indices of its points.
struct RegionCell {
  std::vector<int> grid_index;
  std::vector<std::int64_t> members;
};

/// Splits the bounding box into grid_n^dim equal cells using half-open
/// intervals [lo, hi) (the last cell on each axis is closed). Returns the
/// non-empty cells in ascending linear cell order.
std::vector<RegionCell> partition_regions(const PointCloud& cloud, int grid_n);

struct LocalRegion {
  Matrix points;  // normalized
  Vector center;  // world units
  double scale = 1.0;  // world units per normalized unit (longest bbox edge)
  std::vector<int> grid_index;
  std::vector<std::int64_t> members;

  Matrix denormalize(const Matrix& local) const;
};

/// Centers the bounding box at the origin and maps its longest edge onto
/// [-0.5, 0.5]. Throws Error(Data) when all points coincide.
LocalRegion normalize_region(const Matrix& points);

/// partition_regions followed by normalize_region; degenerate cells (a single
/// distinct position) are skipped with a warning.
std::vector<LocalRegion> build_local_regions(const PointCloud& cloud, int grid_n);

enum class SigmaMode { Variance, StdDev };

struct SamplingConfig {
  std::size_t per_point = 40;
  std::size_t k_sigma = 50;
  SigmaMode sigma_mode = SigmaMode::Variance;
};

struct QueryBatch {
  Matrix queries;                     // (n*per_point) x dim
  std::vector<std::int64_t> anchors;  // surface point each query was drawn around
  std::vector<std::int64_t> nn_index; // nearest cloud point of each query
  Matrix nn_targets;                  // positions of nn_index
  bool k_clamped = false;

  std::size_t size() const { return anchors.size(); }
};

/// Gaussian queries around every surface point. The per-point spread comes
/// from the k_sigma-th neighbour distance d: variance d (SigmaMode::Variance)
/// or standard deviation d (SigmaMode::StdDev).
QueryBatch sample_queries(const PointCloud& cloud, const SpatialIndex& index, const SamplingConfig& cfg,
                          std::mt19937_64& rng);

/// Picks `count` row indices of a pool of size n: without replacement when
/// n >= count, otherwise every index once plus uniform draws to fill up.
std::vector<std::int64_t> select_subset(std::size_t n, std::size_t count, std::mt19937_64& rng);

/// Axis-aligned bounds of a point set.
std::pair<Vector, Vector> bounding_box(const Matrix& points);

}  // namespace pcp
