#include "pcp/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "pcp/error.hpp"
#include "pcp/log.hpp"

namespace pcp {

namespace {

bool closer(const Neighbor& a, const Neighbor& b) {
  return a.dist2 < b.dist2 || (a.dist2 == b.dist2 && a.index < b.index);
}

constexpr std::int32_t kLeafSize = 8;

}  // namespace

PointCloud::PointCloud(Matrix pts, std::optional<Matrix> nrm) : points(std::move(pts)), normals(std::move(nrm)) {}

void validate_cloud(const PointCloud& cloud) {
  if (cloud.empty()) data_error("point cloud is empty");
  if (cloud.dim() != 2 && cloud.dim() != 3) data_error("point cloud dimension must be 2 or 3");
  if (!cloud.points.allFinite()) data_error("point cloud contains non-finite coordinates");
  if (cloud.normals && (cloud.normals->rows() != cloud.points.rows() || cloud.normals->cols() != cloud.points.cols()))
    data_error("normals do not match point count/dimension");
}

// ---- SpatialIndex ---------------------------------------------------------

SpatialIndex::SpatialIndex(const Matrix& points) : points_(points) {
  if (points_.rows() == 0) data_error("build_index: empty cloud");
  order_.resize(static_cast<std::size_t>(points_.rows()));
  std::iota(order_.begin(), order_.end(), 0);
  nodes_.reserve(2 * order_.size() / kLeafSize + 2);
  build(0, static_cast<std::int32_t>(order_.size()));
}

std::int32_t SpatialIndex::build(std::int32_t begin, std::int32_t end) {
  const auto id = static_cast<std::int32_t>(nodes_.size());
  nodes_.push_back(KdNode{begin, end});
  if (end - begin <= kLeafSize) return id;

  // Split the widest axis at the median.
  const int d = dim();
  int axis = 0;
  double widest = -1.0;
  for (int a = 0; a < d; ++a) {
    double lo = INFINITY, hi = -INFINITY;
    for (auto i = begin; i < end; ++i) {
      const double v = points_(order_[i], a);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (hi - lo > widest) {
      widest = hi - lo;
      axis = a;
    }
  }
  if (widest <= 0.0) return id;  // all coincident; stay a leaf

  const auto mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](std::int64_t a, std::int64_t b) {
                     const double va = points_(a, axis), vb = points_(b, axis);
                     return va < vb || (va == vb && a < b);
                   });
  const double split = points_(order_[mid], axis);
  const auto left = build(begin, mid);
  const auto right = build(mid, end);
  nodes_[id].axis = axis;
  nodes_[id].split = split;
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

double SpatialIndex::dist2(std::int64_t i, const double* q) const {
  double s = 0.0;
  for (int a = 0; a < dim(); ++a) {
    const double t = points_(i, a) - q[a];
    s += t * t;
  }
  return s;
}

void SpatialIndex::search_nearest(std::int32_t id, const double* q, Neighbor& best) const {
  const auto& n = nodes_[id];
  if (n.axis < 0) {
    for (auto i = n.begin; i < n.end; ++i) {
      Neighbor c{order_[i], dist2(order_[i], q)};
      if (best.index < 0 || closer(c, best)) best = c;
    }
    return;
  }
  const double diff = q[n.axis] - n.split;
  const auto first = diff < 0 ? n.left : n.right;
  const auto second = diff < 0 ? n.right : n.left;
  search_nearest(first, q, best);
  // Equal distances may hide a lower index on the far side; prune strictly.
  if (best.index < 0 || diff * diff <= best.dist2) search_nearest(second, q, best);
}

void SpatialIndex::search_knn(std::int32_t id, const double* q, std::size_t k, std::vector<Neighbor>& heap) const {
  const auto& n = nodes_[id];
  if (n.axis < 0) {
    for (auto i = n.begin; i < n.end; ++i) {
      Neighbor c{order_[i], dist2(order_[i], q)};
      if (heap.size() < k) {
        heap.push_back(c);
        std::push_heap(heap.begin(), heap.end(), closer);
      } else if (closer(c, heap.front())) {
        std::pop_heap(heap.begin(), heap.end(), closer);
        heap.back() = c;
        std::push_heap(heap.begin(), heap.end(), closer);
      }
    }
    return;
  }
  const double diff = q[n.axis] - n.split;
  const auto first = diff < 0 ? n.left : n.right;
  const auto second = diff < 0 ? n.right : n.left;
  search_knn(first, q, k, heap);
  if (heap.size() < k || diff * diff <= heap.front().dist2) search_knn(second, q, k, heap);
}

Neighbor SpatialIndex::nearest(const double* q) const {
  Neighbor best;
  search_nearest(0, q, best);
  return best;
}

std::vector<Neighbor> SpatialIndex::knearest(const double* q, std::size_t k) const {
  std::vector<Neighbor> heap;
  if (k == 0) return heap;
  heap.reserve(k + 1);
  search_knn(0, q, k, heap);
  std::sort_heap(heap.begin(), heap.end(), closer);
  return heap;
}

SpatialIndex build_index(const PointCloud& cloud) { return SpatialIndex(cloud.points); }

KthDistance kth_nn_distance(const SpatialIndex& index, const double* p, std::size_t k) {
  if (k == 0) usage_error("kth_nn_distance: k must be positive");
  auto nbrs = index.knearest(p, k + 1);
  // Drop one exact copy of p (p itself when it is a cloud member).
  if (!nbrs.empty() && nbrs.front().dist2 == 0.0) nbrs.erase(nbrs.begin());
  KthDistance out;
  if (nbrs.empty()) {
    out.clamped = true;
    return out;
  }
  std::size_t kk = k;
  if (kk > nbrs.size()) {
    kk = nbrs.size();
    out.clamped = true;
  }
  out.k_used = kk;
  out.distance = std::sqrt(nbrs[kk - 1].dist2);
  return out;
}

// ---- partition / normalization ----------------------------------------------

std::pair<Vector, Vector> bounding_box(const Matrix& points) {
  Vector lo = points.colwise().minCoeff().transpose();
  Vector hi = points.colwise().maxCoeff().transpose();
  return {lo, hi};
}

std::vector<RegionCell> partition_regions(const PointCloud& cloud, int grid_n) {
  if (grid_n < 1) usage_error("partition_regions: grid_n must be >= 1");
  validate_cloud(cloud);
  const int d = cloud.dim();
  auto [lo, hi] = bounding_box(cloud.points);

  std::vector<std::int64_t> linear(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    std::int64_t lin = 0;
    for (int a = 0; a < d; ++a) {
      const double extent = hi(a) - lo(a);
      int c = 0;
      if (extent > 0.0) {
        c = static_cast<int>(std::floor((cloud.points(static_cast<Eigen::Index>(i), a) - lo(a)) / extent * grid_n));
        c = std::clamp(c, 0, grid_n - 1);
      }
      lin = lin * grid_n + c;
    }
    linear[i] = lin;
  }

  std::vector<std::int64_t> order(cloud.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return linear[a] < linear[b]; });

  std::vector<RegionCell> cells;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto lin = linear[order[i]];
    if (i == 0 || lin != linear[order[i - 1]]) {
      RegionCell cell;
      cell.grid_index.resize(d);
      auto rem = lin;
      for (int a = d - 1; a >= 0; --a) {
        cell.grid_index[a] = static_cast<int>(rem % grid_n);
        rem /= grid_n;
      }
      cells.push_back(std::move(cell));
    }
    cells.back().members.push_back(order[i]);
  }
  return cells;
}

Matrix LocalRegion::denormalize(const Matrix& local) const {
  Matrix out = local * scale;
  out.rowwise() += center.transpose();
  return out;
}

LocalRegion normalize_region(const Matrix& points) {
  if (points.rows() == 0) data_error("normalize_region: no points");
  auto [lo, hi] = bounding_box(points);
  const double longest = (hi - lo).maxCoeff();
  if (!(longest > 0.0)) data_error("normalize_region: all points coincide, scale undefined");
  LocalRegion r;
  r.center = 0.5 * (lo + hi);
  r.scale = longest;
  r.points = (points.rowwise() - r.center.transpose()) / longest;
  return r;
}

std::vector<LocalRegion> build_local_regions(const PointCloud& cloud, int grid_n) {
  std::vector<LocalRegion> out;
  for (auto& cell : partition_regions(cloud, grid_n)) {
    Matrix pts(static_cast<Eigen::Index>(cell.members.size()), cloud.dim());
    for (std::size_t i = 0; i < cell.members.size(); ++i)
      pts.row(static_cast<Eigen::Index>(i)) = cloud.points.row(cell.members[i]);
    auto [lo, hi] = bounding_box(pts);
    if (!((hi - lo).maxCoeff() > 0.0)) {
      std::ostringstream os;
      for (int g : cell.grid_index) os << ' ' << g;
      log::warn("skipping degenerate region at cell", os.str(), " (", cell.members.size(), " coincident points)");
      continue;
    }
    LocalRegion r = normalize_region(pts);
    r.grid_index = std::move(cell.grid_index);
    r.members = std::move(cell.members);
    out.push_back(std::move(r));
  }
  return out;
}

// ---- query sampling -----------------------------------------------------------

QueryBatch sample_queries(const PointCloud& cloud, const SpatialIndex& index, const SamplingConfig& cfg,
                          std::mt19937_64& rng) {
  validate_cloud(cloud);
  const auto n = static_cast<Eigen::Index>(cloud.size());
  const int d = cloud.dim();
  const auto per = static_cast<Eigen::Index>(cfg.per_point);

  QueryBatch b;
  b.queries.resize(n * per, d);
  b.nn_targets.resize(n * per, d);
  b.anchors.resize(static_cast<std::size_t>(n * per));
  b.nn_index.resize(static_cast<std::size_t>(n * per));

  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto kd = kth_nn_distance(index, cloud.points.row(i).data(), cfg.k_sigma);
    b.k_clamped = b.k_clamped || kd.clamped;
    const double stddev = cfg.sigma_mode == SigmaMode::Variance ? std::sqrt(kd.distance) : kd.distance;
    for (Eigen::Index j = 0; j < per; ++j) {
      const auto row = i * per + j;
      for (int a = 0; a < d; ++a) b.queries(row, a) = cloud.points(i, a) + stddev * normal(rng);
      b.anchors[static_cast<std::size_t>(row)] = i;
    }
  }
  if (b.k_clamped)
    log::debug("sample_queries: k_sigma=", cfg.k_sigma, " clamped to available neighbours (", cloud.size(),
               " points)");

  for (Eigen::Index r = 0; r < b.queries.rows(); ++r) {
    const auto nb = index.nearest(b.queries.row(r).data());
    b.nn_index[static_cast<std::size_t>(r)] = nb.index;
    b.nn_targets.row(r) = cloud.points.row(nb.index);
  }
  return b;
}

std::vector<std::int64_t> select_subset(std::size_t n, std::size_t count, std::mt19937_64& rng) {
  if (n == 0) usage_error("select_subset: empty pool");
  std::vector<std::int64_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  if (n >= count) {
    // Partial Fisher-Yates.
    for (std::size_t i = 0; i < count; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, n - 1);
      std::swap(idx[i], idx[pick(rng)]);
    }
    idx.resize(count);
    return idx;
  }
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  while (idx.size() < count) idx.push_back(static_cast<std::int64_t>(pick(rng)));
  return idx;
}

}  // namespace pcp
