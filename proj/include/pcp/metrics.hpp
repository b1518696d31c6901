#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "pcp/geometry.hpp"
#include "pcp/mesher.hpp"

namespace pcp {

struct SurfaceSamples {
  Matrix points;
  Matrix normals;
};

/// Area-weighted uniform samples; each sample carries its triangle's unit
/// normal. Throws Error(Data) for an empty mesh or zero total area.
SurfaceSamples sample_mesh_surface(const TriangleMesh& mesh, std::size_t n, std::uint64_t seed);

/// 0.5 * (mean_x d(x,Y)^order + mean_y d(y,X)^order), order 1 or 2.
double chamfer(const Matrix& x, const Matrix& y, int order);

/// 0.5 * (mean_x |n_x . n_nn(x)| + mean_y |n_y . n_nn(y)|). Non-unit normals
/// are normalized with a warning.
double normal_consistency(const Matrix& x, const Matrix& nx, const Matrix& y, const Matrix& ny);

/// Harmonic mean of precision (X within tau of Y) and recall (Y within tau of
/// X); "within" is strict, d < tau. 0 when both are 0.
double fscore(const Matrix& x, const Matrix& y, double tau);

struct MetricConfig {
  std::size_t sample_count = 10000;
  double fscore_threshold = 0.002;
  std::uint64_t seed = 0;

  void validate() const;
};

struct MetricReport {
  double chamfer_l1 = 0.0;
  double chamfer_l2 = 0.0;
  std::optional<double> normal_consistency;
  double fscore_mu = 0.0;
  double fscore_2mu = 0.0;
  double threshold = 0.0;
  std::size_t samples = 0;

  std::string to_kv() const;
  std::string to_json() const;
};

/// Compares sampled mesh surface against a reference cloud. NC is computed
/// only when the reference carries normals.
MetricReport evaluate(const TriangleMesh& mesh, const PointCloud& reference, const MetricConfig& cfg);
/// Mesh against mesh; both sides are sampled, so NC is always available.
MetricReport evaluate(const TriangleMesh& mesh, const TriangleMesh& reference, const MetricConfig& cfg);

}  // namespace pcp
