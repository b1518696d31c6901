#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <limits>
#include <random>
#include <string>

#include "pcp/autodiff.hpp"
#include "pcp/geometry.hpp"

namespace testing {

using pcp::Matrix;
using pcp::ad::Tensor;

inline Tensor randn(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> n(0.0, sd);
  Tensor t(r, c);
  for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = n(rng);
  return t;
}

inline Matrix uniform_points(Eigen::Index n, int dim, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(n, dim);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

inline Matrix sphere_points(Eigen::Index n, double r, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix m(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Vector3d v(g(rng), g(rng), g(rng));
    m.row(i) = (r * v.normalized()).transpose();
  }
  return m;
}

/// Central-difference gradient of f with respect to every entry of x.
inline Tensor fd_gradient(Tensor& x, const std::function<double()>& f, double h) {
  Tensor g(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double saved = x.data()[i];
    x.data()[i] = saved + h;
    const double up = f();
    x.data()[i] = saved - h;
    const double down = f();
    x.data()[i] = saved;
    g.data()[i] = (up - down) / (2.0 * h);
  }
  return g;
}

inline double rel_error(const Tensor& a, const Tensor& b) {
  const double scale = std::max({a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff(), 1e-12});
  return (a - b).cwiseAbs().maxCoeff() / scale;
}

/// O(n^2) nearest neighbour: lowest index among equidistant candidates.
inline std::pair<Eigen::Index, double> brute_nearest(const Matrix& pts, const double* q) {
  Eigen::Index best = -1;
  double bd = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    double d = 0.0;
    for (Eigen::Index a = 0; a < pts.cols(); ++a) d += (pts(i, a) - q[a]) * (pts(i, a) - q[a]);
    if (d < bd) {
      bd = d;
      best = i;
    }
  }
  return {best, bd};
}

inline std::string temp_path(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "pcp_tests";
  std::filesystem::create_directories(dir);
  return (dir / name).string();
}

}  // namespace testing
