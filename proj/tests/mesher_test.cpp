#include <cmath>
#include <map>
#include <string>

#include "doctest.h"
#include "pcp/error.hpp"
#include "pcp/mesher.hpp"
#include "support.hpp"

using namespace pcp;

namespace {

Bounds cube(double h) {
  Bounds b;
  b.lo = Vector::Constant(3, -h);
  b.hi = Vector::Constant(3, h);
  return b;
}

Bounds square(double h) {
  Bounds b;
  b.lo = Vector::Constant(2, -h);
  b.hi = Vector::Constant(2, h);
  return b;
}

ScalarField sphere_sdf(double r) {
  return [r](const Matrix& p) -> Vector { return p.rowwise().norm().array() - r; };
}

// Trilinear sample of the lattice at a point lying on a lattice edge: two of
// the fractional coordinates are integers, the third is interpolated.
double edge_interpolation(const SdfGrid& g, const Eigen::Vector3d& v) {
  double u[3];
  int axis = -1;
  for (int a = 0; a < 3; ++a) {
    u[a] = (v(a) - g.origin(a)) / g.spacing(a);
    if (std::abs(u[a] - std::round(u[a])) > 1e-7) axis = a;
  }
  int base[3];
  for (int a = 0; a < 3; ++a) base[a] = static_cast<int>(std::lround(u[a]));
  if (axis < 0) return g.at(base[0], base[1], base[2]);
  base[axis] = static_cast<int>(std::floor(u[axis]));
  int next[3] = {base[0], base[1], base[2]};
  next[axis] += 1;
  const double t = u[axis] - base[axis];
  return (1 - t) * g.at(base[0], base[1], base[2]) + t * g.at(next[0], next[1], next[2]);
}

Eigen::Vector3d face_normal(const TriangleMesh& m, const std::array<int, 3>& t) {
  return (m.vertices[t[1]] - m.vertices[t[0]]).cross(m.vertices[t[2]] - m.vertices[t[0]]);
}

}  // namespace

TEST_CASE("lattice evaluation") {
  SUBCASE("node placement, x fastest") {
    const auto g = eval_sdf_grid([](const Matrix& p) -> Vector { return p.col(0) + 10.0 * p.col(1) + 100.0 * p.col(2); },
                                 cube(1.0), {3, 5, 2});
    CHECK(g.values.size() == 30);
    CHECK(g.spacing(0) == doctest::Approx(1.0));
    CHECK(g.spacing(1) == doctest::Approx(0.5));
    CHECK(g.spacing(2) == doctest::Approx(2.0));
    CHECK(g.values[1] == doctest::Approx(0.0 - 10.0 - 100.0));
    CHECK(g.at(2, 4, 1) == doctest::Approx(1.0 + 10.0 + 100.0));
    CHECK(g.index(2, 4, 1) == 29);
  }
  SUBCASE("doubling the resolution keeps shared nodes bit-identical") {
    const auto coarse = eval_sdf_grid(sphere_sdf(0.3), cube(0.5), {9, 9, 9});
    const auto fine = eval_sdf_grid(sphere_sdf(0.3), cube(0.5), {17, 17, 17});
    for (int k = 0; k < 9; ++k)
      for (int j = 0; j < 9; ++j)
        for (int i = 0; i < 9; ++i) REQUIRE(coarse.at(i, j, k) == fine.at(2 * i, 2 * j, 2 * k));
  }
  SUBCASE("thread count does not change values") {
    const auto a = eval_sdf_grid(sphere_sdf(0.3), cube(0.5), {12, 12, 12}, 1);
    const auto b = eval_sdf_grid(sphere_sdf(0.3), cube(0.5), {12, 12, 12}, 4);
    CHECK(a.values == b.values);
  }
  SUBCASE("non-finite samples name the node") {
    auto bad = [](const Matrix& p) -> Vector {
      Vector v = p.col(0);
      for (Eigen::Index i = 0; i < v.size(); ++i)
        if (p(i, 0) > 0.9 && p(i, 1) < -0.9) v(i) = std::nan("");
      return v;
    };
    try {
      eval_sdf_grid(bad, square(1.0), {3, 3});
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Numeric);
      CHECK(std::string(e.what()).find("(2, 0") != std::string::npos);
    }
  }
  SUBCASE("bad resolution") { CHECK_THROWS_AS(eval_sdf_grid(sphere_sdf(0.3), cube(0.5), {1, 4, 4}), Error); }
}

TEST_CASE("marching cubes") {
  SUBCASE("single negative corner gives one triangle at edge midpoints") {
    SdfGrid g;
    g.origin = Vector::Zero(3);
    g.spacing = Vector::Ones(3);
    g.resolution = {2, 2, 2};
    g.values.assign(8, 1.0);
    g.values[0] = -1.0;
    const auto m = marching_cubes(g);
    REQUIRE(m.triangles.size() == 1);
    REQUIRE(m.vertices.size() == 3);
    for (const auto& v : m.vertices) {
      CHECK(v.sum() == doctest::Approx(0.5));
      CHECK(v.maxCoeff() == doctest::Approx(0.5));
    }
    // Normal points away from the negative corner.
    CHECK(face_normal(m, m.triangles[0]).dot(Eigen::Vector3d(1, 1, 1)) > 0.0);
  }
  SUBCASE("sphere: closed, genus zero, oriented, on the interpolation model") {
    const double r = 0.4;
    const auto g = eval_sdf_grid(sphere_sdf(r), cube(0.5), {64, 64, 64});
    const auto m = marching_cubes(g);
    REQUIRE_FALSE(m.empty());
    CHECK(is_watertight(m));
    CHECK(euler_characteristic(m) == 2);
    const double diag = g.spacing.norm();
    std::size_t agree = 0;
    for (const auto& t : m.triangles) {
      const Eigen::Vector3d c = (m.vertices[t[0]] + m.vertices[t[1]] + m.vertices[t[2]]) / 3.0;
      // Gradient of |x| - r is x/|x|: outward normals point toward positive SDF.
      if (face_normal(m, t).dot(c) > 0.0) ++agree;
    }
    CHECK(static_cast<double>(agree) >= 0.99 * static_cast<double>(m.triangles.size()));
    double worst_dist = 0.0, worst_interp = 0.0;
    for (const auto& v : m.vertices) {
      worst_dist = std::max(worst_dist, std::abs(v.norm() - r));
      worst_interp = std::max(worst_interp, std::abs(edge_interpolation(g, v)));
    }
    CHECK(worst_dist < diag);
    CHECK(worst_interp < 1e-9);
  }
  SUBCASE("all-negative and all-positive lattices give empty meshes") {
    auto neg = eval_sdf_grid([](const Matrix& p) -> Vector { return Vector::Constant(p.rows(), -1.0); }, cube(1), {5, 5, 5});
    CHECK(marching_cubes(neg).empty());
    auto pos = eval_sdf_grid([](const Matrix& p) -> Vector { return Vector::Constant(p.rows(), 2.0); }, cube(1), {5, 5, 5});
    CHECK(marching_cubes(pos).empty());
  }
  SUBCASE("nonzero iso level") {
    const auto g = eval_sdf_grid(sphere_sdf(0.0), cube(0.5), {40, 40, 40});
    const auto m = marching_cubes(g, 0.3);
    CHECK(is_watertight(m));
    for (const auto& v : m.vertices) CHECK(std::abs(v.norm() - 0.3) < g.spacing.norm());
  }
  SUBCASE("2-D lattice rejected") {
    const auto g = eval_sdf_grid([](const Matrix& p) -> Vector { return p.col(0); }, square(1), {4, 4});
    CHECK_THROWS_AS(marching_cubes(g), Error);
  }
}

TEST_CASE("mesh topology helpers") {
  TriangleMesh tet;
  tet.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  tet.triangles = {{0, 2, 1}, {0, 1, 3}, {0, 3, 2}, {1, 2, 3}};
  CHECK(is_watertight(tet));
  CHECK(euler_characteristic(tet) == 2);
  tet.triangles.pop_back();
  CHECK_FALSE(is_watertight(tet));
  CHECK(euler_characteristic(tet) == 1);
}

TEST_CASE("marching squares") {
  SUBCASE("circle gives one closed contour near the true curve") {
    const auto g = eval_sdf_grid([](const Matrix& p) -> Vector { return p.rowwise().norm().array() - 0.35; },
                                 square(0.5), {80, 80});
    const auto cs = marching_squares(g);
    REQUIRE(cs.size() == 1);
    CHECK(cs[0].closed);
    for (const auto& p : cs[0].points) CHECK(std::abs(p.norm() - 0.35) < g.spacing.norm());
    const Matrix s = sample_contours(cs, 0.01);
    CHECK(s.rows() > static_cast<Eigen::Index>(2 * M_PI * 0.35 / 0.01));
    for (Eigen::Index i = 1; i < s.rows(); ++i) CHECK((s.row(i) - s.row(i - 1)).norm() <= 0.01 + 1e-12);
  }
  SUBCASE("all-negative lattice gives nothing") {
    auto g = eval_sdf_grid([](const Matrix& p) -> Vector { return Vector::Constant(p.rows(), -1.0); }, square(1), {6, 6});
    CHECK(marching_squares(g).empty());
  }
  SUBCASE("open contour across the box") {
    auto g = eval_sdf_grid([](const Matrix& p) -> Vector { return p.col(1).array() - 0.05; }, square(1), {11, 11});
    const auto cs = marching_squares(g);
    REQUIRE(cs.size() == 1);
    CHECK_FALSE(cs[0].closed);
    CHECK(cs[0].points.size() == 11);
    for (const auto& p : cs[0].points) CHECK(p.y() == doctest::Approx(0.05));
  }
  SUBCASE("saddle decided by the centre value") {
    SdfGrid g;
    g.origin = Vector::Zero(2);
    g.spacing = Vector::Ones(2);
    g.resolution = {2, 2};
    g.values = {-1.0, 1.0, 1.0, -1.0};  // diagonal negatives
    const ScalarField neg_center = [](const Matrix& p) -> Vector { return Vector::Constant(p.rows(), -1.0); };
    const ScalarField pos_center = [](const Matrix& p) -> Vector { return Vector::Constant(p.rows(), 1.0); };
    const auto a = marching_squares(g, 0.0, neg_center);
    const auto b = marching_squares(g, 0.0, pos_center);
    REQUIRE(a.size() == 2);
    REQUIRE(b.size() == 2);
    // Negative centre joins the negative corners, so each segment cuts off a
    // positive corner (1,0) or (0,1); positive centre cuts off the negatives.
    auto cuts_corner = [](const std::vector<Contour>& cs, Eigen::Vector2d corner) {
      for (const auto& c : cs) {
        const Eigen::Vector2d mid = 0.5 * (c.points.front() + c.points.back());
        if ((mid - corner).norm() < 0.5) return true;
      }
      return false;
    };
    CHECK(cuts_corner(a, {1, 0}));
    CHECK(cuts_corner(a, {0, 1}));
    CHECK(cuts_corner(b, {0, 0}));
    CHECK(cuts_corner(b, {1, 1}));
  }
}
