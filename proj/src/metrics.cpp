#include "pcp/metrics.hpp"

#include <cmath>
#include <iomanip>
#include <random>
#include <sstream>

#include "json.hpp"

#include "pcp/error.hpp"
#include "pcp/log.hpp"
#include "pcp/random.hpp"

namespace pcp {

namespace {

void require_points(const Matrix& m, const char* what) {
  if (m.rows() == 0) usage_error(std::string(what) + ": point set is empty");
}

void require_same_dim(const Matrix& x, const Matrix& y, const char* what) {
  if (x.cols() != y.cols()) usage_error(std::string(what) + ": point sets differ in dimension");
}

// Nearest-neighbour distance of every row of `from` against `to`.
Vector nn_distances(const Matrix& from, const SpatialIndex& to) {
  Vector d(from.rows());
  for (Eigen::Index i = 0; i < from.rows(); ++i) d(i) = std::sqrt(to.nearest(from.row(i).data()).dist2);
  return d;
}

Matrix unit_rows(const Matrix& n, const char* what) {
  Matrix out = n;
  bool warned = false;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const double len = out.row(i).norm();
    if (std::abs(len - 1.0) > 1e-6) {
      if (!warned) {
        log::warn(what, ": non-unit normals normalized");
        warned = true;
      }
      if (len > 0.0) out.row(i) /= len;
    }
  }
  return out;
}

double precision(const Matrix& from, const SpatialIndex& to, double tau) {
  std::size_t hit = 0;
  for (Eigen::Index i = 0; i < from.rows(); ++i)
    if (std::sqrt(to.nearest(from.row(i).data()).dist2) < tau) ++hit;
  return static_cast<double>(hit) / static_cast<double>(from.rows());
}

}  // namespace

SurfaceSamples sample_mesh_surface(const TriangleMesh& mesh, std::size_t n, std::uint64_t seed) {
  if (mesh.empty()) data_error("sample_mesh_surface: mesh has no triangles");
  if (n == 0) usage_error("sample_mesh_surface: sample count must be positive");
  const auto nv = static_cast<int>(mesh.vertices.size());
  std::vector<double> area(mesh.triangles.size());
  std::vector<Eigen::Vector3d> normal(mesh.triangles.size());
  double total = 0.0;
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& tri = mesh.triangles[t];
    for (int v : tri)
      if (v < 0 || v >= nv) data_error("sample_mesh_surface: triangle index out of range");
    const Eigen::Vector3d c =
        (mesh.vertices[tri[1]] - mesh.vertices[tri[0]]).cross(mesh.vertices[tri[2]] - mesh.vertices[tri[0]]);
    const double len = c.norm();
    area[t] = 0.5 * len;
    normal[t] = len > 0.0 ? Eigen::Vector3d(c / len) : Eigen::Vector3d::Zero();
    total += area[t];
  }
  if (!(total > 0.0)) data_error("sample_mesh_surface: mesh has zero total area");

  auto rng = make_stream(seed, "surface");
  std::discrete_distribution<std::size_t> pick(area.begin(), area.end());
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  SurfaceSamples s;
  s.points.resize(static_cast<Eigen::Index>(n), 3);
  s.normals.resize(static_cast<Eigen::Index>(n), 3);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t t = pick(rng);
    const double r1 = std::sqrt(uni(rng));
    const double r2 = uni(rng);
    const auto& tri = mesh.triangles[t];
    const Eigen::Vector3d p = (1.0 - r1) * mesh.vertices[tri[0]] + r1 * (1.0 - r2) * mesh.vertices[tri[1]] +
                              r1 * r2 * mesh.vertices[tri[2]];
    s.points.row(static_cast<Eigen::Index>(i)) = p.transpose();
    s.normals.row(static_cast<Eigen::Index>(i)) = normal[t].transpose();
  }
  return s;
}

double chamfer(const Matrix& x, const Matrix& y, int order) {
  require_points(x, "chamfer");
  require_points(y, "chamfer");
  require_same_dim(x, y, "chamfer");
  if (order != 1 && order != 2) usage_error("chamfer: order must be 1 or 2");
  const SpatialIndex ix(x), iy(y);
  Vector dxy = nn_distances(x, iy);
  Vector dyx = nn_distances(y, ix);
  if (order == 2) {
    dxy = dxy.array().square();
    dyx = dyx.array().square();
  }
  return 0.5 * (dxy.mean() + dyx.mean());
}

double normal_consistency(const Matrix& x, const Matrix& nx, const Matrix& y, const Matrix& ny) {
  require_points(x, "normal_consistency");
  require_points(y, "normal_consistency");
  require_same_dim(x, y, "normal_consistency");
  if (nx.rows() != x.rows() || ny.rows() != y.rows() || nx.cols() != x.cols() || ny.cols() != y.cols())
    usage_error("normal_consistency: normals must match their point sets");
  const Matrix ux = unit_rows(nx, "normal_consistency");
  const Matrix uy = unit_rows(ny, "normal_consistency");
  const SpatialIndex ix(x), iy(y);
  auto one_way = [](const Matrix& from, const Matrix& nfrom, const SpatialIndex& to, const Matrix& nto) {
    double sum = 0.0;
    for (Eigen::Index i = 0; i < from.rows(); ++i) {
      const auto j = to.nearest(from.row(i).data()).index;
      sum += std::abs(nfrom.row(i).dot(nto.row(j)));
    }
    return sum / static_cast<double>(from.rows());
  };
  return 0.5 * (one_way(x, ux, iy, uy) + one_way(y, uy, ix, ux));
}

double fscore(const Matrix& x, const Matrix& y, double tau) {
  if (!(tau > 0.0)) usage_error("fscore: threshold must be positive");
  require_points(x, "fscore");
  require_points(y, "fscore");
  require_same_dim(x, y, "fscore");
  const SpatialIndex ix(x), iy(y);
  const double p = precision(x, iy, tau);
  const double r = precision(y, ix, tau);
  return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
}

void MetricConfig::validate() const {
  if (sample_count == 0) usage_error("metrics: sample_count must be positive");
  if (!(fscore_threshold > 0.0)) usage_error("metrics: fscore threshold must be positive");
}

std::string MetricReport::to_kv() const {
  std::ostringstream os;
  os << std::setprecision(9);
  os << "chamfer_l1=" << chamfer_l1 << '\n';
  os << "chamfer_l2=" << chamfer_l2 << '\n';
  if (normal_consistency) os << "normal_consistency=" << *normal_consistency << '\n';
  os << "fscore_mu=" << fscore_mu << '\n';
  os << "fscore_2mu=" << fscore_2mu << '\n';
  os << "threshold=" << threshold << '\n';
  os << "samples=" << samples << '\n';
  return os.str();
}

std::string MetricReport::to_json() const {
  nlohmann::ordered_json j;
  j["chamfer_l1"] = chamfer_l1;
  j["chamfer_l2"] = chamfer_l2;
  if (normal_consistency) j["normal_consistency"] = *normal_consistency;
  j["fscore_mu"] = fscore_mu;
  j["fscore_2mu"] = fscore_2mu;
  j["threshold"] = threshold;
  j["samples"] = samples;
  return j.dump(2) + "\n";
}

namespace {

MetricReport report_from(const SurfaceSamples& mine, const Matrix& ref, const std::optional<Matrix>& ref_normals,
                         const MetricConfig& cfg) {
  MetricReport r;
  r.chamfer_l1 = chamfer(mine.points, ref, 1);
  r.chamfer_l2 = chamfer(mine.points, ref, 2);
  if (ref_normals) r.normal_consistency = normal_consistency(mine.points, mine.normals, ref, *ref_normals);
  r.fscore_mu = fscore(mine.points, ref, cfg.fscore_threshold);
  r.fscore_2mu = fscore(mine.points, ref, 2.0 * cfg.fscore_threshold);
  r.threshold = cfg.fscore_threshold;
  r.samples = cfg.sample_count;
  return r;
}

}  // namespace

MetricReport evaluate(const TriangleMesh& mesh, const PointCloud& reference, const MetricConfig& cfg) {
  cfg.validate();
  validate_cloud(reference);
  if (reference.dim() != 3) usage_error("evaluate: reference cloud must be 3-D");
  const auto mine = sample_mesh_surface(mesh, cfg.sample_count, cfg.seed);
  if (!reference.normals) log::warn("evaluate: reference has no normals; normal consistency omitted");
  return report_from(mine, reference.points, reference.normals, cfg);
}

MetricReport evaluate(const TriangleMesh& mesh, const TriangleMesh& reference, const MetricConfig& cfg) {
  cfg.validate();
  const auto mine = sample_mesh_surface(mesh, cfg.sample_count, cfg.seed);
  const auto theirs = sample_mesh_surface(reference, cfg.sample_count, cfg.seed);
  return report_from(mine, theirs.points, theirs.normals, cfg);
}

}  // namespace pcp
