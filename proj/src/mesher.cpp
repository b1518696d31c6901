#include "pcp/mesher.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <thread>
#include <unordered_map>

#include "mc_tables.hpp"
#include "pcp/error.hpp"
#include "pcp/log.hpp"
#include "pcp/specialize.hpp"

namespace pcp {

std::size_t SdfGrid::index(int i, int j, int k) const {
  const auto nx = static_cast<std::size_t>(resolution[0]);
  const auto ny = static_cast<std::size_t>(resolution[1]);
  return (static_cast<std::size_t>(k) * ny + static_cast<std::size_t>(j)) * nx + static_cast<std::size_t>(i);
}

Vector SdfGrid::node(int i, int j, int k) const {
  Vector p = origin;
  p(0) += i * spacing(0);
  p(1) += j * spacing(1);
  if (dim() == 3) p(2) += k * spacing(2);
  return p;
}

Bounds default_bounds(const PointCloud& cloud, double inflate) {
  validate_cloud(cloud);
  auto [lo, hi] = bounding_box(cloud.points);
  Vector pad = (hi - lo) * inflate;
  // Flat clouds still need a non-degenerate box.
  const double fallback = std::max((hi - lo).maxCoeff() * inflate, 1e-3);
  for (Eigen::Index a = 0; a < pad.size(); ++a)
    if (pad(a) <= 0.0) pad(a) = fallback;
  return {lo - pad, hi + pad};
}

SdfGrid eval_sdf_grid(const ScalarField& field, const Bounds& bounds, const std::vector<int>& resolution, int threads) {
  const int d = static_cast<int>(resolution.size());
  if (d != 2 && d != 3) usage_error("eval_sdf_grid: resolution must have 2 or 3 entries");
  if (bounds.lo.size() != d || bounds.hi.size() != d) usage_error("eval_sdf_grid: bounds dimension mismatch");
  for (int a = 0; a < d; ++a) {
    if (resolution[a] < 2) usage_error("eval_sdf_grid: resolution must be >= 2 per axis");
    if (!(bounds.hi(a) > bounds.lo(a))) usage_error("eval_sdf_grid: degenerate bounds");
  }

  SdfGrid g;
  g.resolution = resolution;
  g.origin = bounds.lo;
  g.spacing.resize(d);
  for (int a = 0; a < d; ++a) g.spacing(a) = (bounds.hi(a) - bounds.lo(a)) / (resolution[a] - 1);
  const int nz = d == 3 ? resolution[2] : 1;
  const std::size_t slab = static_cast<std::size_t>(resolution[0]) * resolution[1];
  g.values.resize(slab * nz);

  // One batch per z-slab (or per row block in 2D); slabs are independent.
  const int ny = resolution[1];
  const int units = d == 3 ? nz : ny;
  auto work = [&](int u) {
    std::vector<std::array<int, 3>> ids;
    const int j0 = d == 3 ? 0 : u, j1 = d == 3 ? ny : u + 1;
    const int k = d == 3 ? u : 0;
    for (int j = j0; j < j1; ++j)
      for (int i = 0; i < resolution[0]; ++i) ids.push_back({i, j, k});
    Matrix pts(static_cast<Eigen::Index>(ids.size()), d);
    for (std::size_t r = 0; r < ids.size(); ++r)
      pts.row(static_cast<Eigen::Index>(r)) = g.node(ids[r][0], ids[r][1], ids[r][2]).transpose();
    Vector v = field(pts);
    if (v.size() != pts.rows()) usage_error("eval_sdf_grid: field returned wrong number of values");
    for (std::size_t r = 0; r < ids.size(); ++r) g.values[g.index(ids[r][0], ids[r][1], ids[r][2])] = v(r);
  };

  const int nthreads = std::max(1, std::min(threads, units));
  if (nthreads == 1) {
    for (int u = 0; u < units; ++u) work(u);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(nthreads);
    for (int t = 0; t < nthreads; ++t)
      pool.emplace_back([&, t] {
        try {
          for (int u = t; u < units; u += nthreads) work(u);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  for (std::size_t n = 0; n < g.values.size(); ++n) {
    if (!std::isfinite(g.values[n])) {
      const auto i = n % resolution[0];
      const auto j = (n / resolution[0]) % ny;
      const auto k = n / slab;
      std::ostringstream os;
      os << "eval_sdf_grid: non-finite SDF value at lattice node (" << i << ", " << j;
      if (d == 3) os << ", " << k;
      os << ')';
      numeric_error(os.str());
    }
  }
  return g;
}

SdfGrid eval_sdf_grid(const GlobalSdf& sdf, const Bounds& bounds, const std::vector<int>& resolution, int threads) {
  return eval_sdf_grid([&sdf](const Matrix& q) { return sdf.eval(q); }, bounds, resolution, threads);
}

// ---- marching cubes -------------------------------------------------------

TriangleMesh marching_cubes(const SdfGrid& grid, double iso) {
  if (grid.dim() != 3) usage_error("marching_cubes: grid must be 3-D");
  const int nx = grid.resolution[0], ny = grid.resolution[1], nz = grid.resolution[2];
  TriangleMesh mesh;
  // Edge key: lattice node index of the lower endpoint * 3 + axis.
  std::unordered_map<std::uint64_t, int> welded;

  auto vertex_on_edge = [&](int i, int j, int k, int edge) -> int {
    const auto& c = detail::kEdgeCorners[edge];
    const auto& o0 = detail::kCornerOffsets[c[0]];
    const auto& o1 = detail::kCornerOffsets[c[1]];
    int a[3] = {i + o0[0], j + o0[1], k + o0[2]};
    int b[3] = {i + o1[0], j + o1[1], k + o1[2]};
    int axis = 0;
    while (a[axis] == b[axis]) ++axis;
    if (a[axis] > b[axis]) std::swap(a, b);
    const std::uint64_t key = static_cast<std::uint64_t>(grid.index(a[0], a[1], a[2])) * 3 + axis;
    auto it = welded.find(key);
    if (it != welded.end()) return it->second;
    const double va = grid.at(a[0], a[1], a[2]);
    const double vb = grid.at(b[0], b[1], b[2]);
    const double t = (iso - va) / (vb - va);
    Vector pa = grid.node(a[0], a[1], a[2]);
    Vector pb = grid.node(b[0], b[1], b[2]);
    Vector p = pa + t * (pb - pa);
    const int id = static_cast<int>(mesh.vertices.size());
    mesh.vertices.emplace_back(p(0), p(1), p(2));
    welded.emplace(key, id);
    return id;
  };

  for (int k = 0; k + 1 < nz; ++k)
    for (int j = 0; j + 1 < ny; ++j)
      for (int i = 0; i + 1 < nx; ++i) {
        int cube = 0;
        for (int c = 0; c < 8; ++c) {
          const auto& o = detail::kCornerOffsets[c];
          if (grid.at(i + o[0], j + o[1], k + o[2]) < iso) cube |= 1 << c;
        }
        if (detail::kEdgeTable[cube] == 0) continue;
        const auto& tri = detail::kTriTable[cube];
        for (int t = 0; tri[t] != -1; t += 3) {
          const int v0 = vertex_on_edge(i, j, k, tri[t]);
          const int v1 = vertex_on_edge(i, j, k, tri[t + 1]);
          const int v2 = vertex_on_edge(i, j, k, tri[t + 2]);
          // The table winds faces toward the inside; flip to face outward.
          mesh.triangles.push_back({v0, v2, v1});
        }
      }
  if (mesh.triangles.empty()) log::info("marching_cubes: field has no crossing of iso=", iso, "; empty mesh");
  return mesh;
}

long euler_characteristic(const TriangleMesh& mesh) {
  std::map<std::pair<int, int>, int> edges;
  for (const auto& t : mesh.triangles)
    for (int e = 0; e < 3; ++e) edges[std::minmax(t[e], t[(e + 1) % 3])]++;
  return static_cast<long>(mesh.vertices.size()) - static_cast<long>(edges.size()) +
         static_cast<long>(mesh.triangles.size());
}

bool is_watertight(const TriangleMesh& mesh) {
  std::map<std::pair<int, int>, int> edges;
  for (const auto& t : mesh.triangles)
    for (int e = 0; e < 3; ++e) edges[std::minmax(t[e], t[(e + 1) % 3])]++;
  return !edges.empty() && std::all_of(edges.begin(), edges.end(), [](const auto& e) { return e.second == 2; });
}

// ---- marching squares -------------------------------------------------------

namespace {

// Corners: 0=(0,0) 1=(1,0) 2=(1,1) 3=(0,1). Edges: 0 bottom, 1 right, 2 top,
// 3 left. Bit c of the case is set when corner c is inside (below iso).
constexpr std::array<std::array<int, 2>, 4> kSquareCorners = {{{{0, 0}}, {{1, 0}}, {{1, 1}}, {{0, 1}}}};
constexpr std::array<std::array<int, 2>, 4> kSquareEdges = {{{{0, 1}}, {{1, 2}}, {{2, 3}}, {{3, 0}}}};

// Segments per case as edge pairs; saddles (5, 10) handled separately.
constexpr std::array<std::array<int, 4>, 16> kSquareSegments = {{
    {{-1, -1, -1, -1}},
    {{3, 0, -1, -1}},
    {{0, 1, -1, -1}},
    {{3, 1, -1, -1}},
    {{1, 2, -1, -1}},
    {{-1, -1, -1, -1}},
    {{0, 2, -1, -1}},
    {{3, 2, -1, -1}},
    {{2, 3, -1, -1}},
    {{0, 2, -1, -1}},
    {{-1, -1, -1, -1}},
    {{1, 2, -1, -1}},
    {{1, 3, -1, -1}},
    {{0, 1, -1, -1}},
    {{3, 0, -1, -1}},
    {{-1, -1, -1, -1}},
}};

}  // namespace

std::vector<Contour> marching_squares(const SdfGrid& grid, double iso, const std::optional<ScalarField>& center) {
  if (grid.dim() != 2) usage_error("marching_squares: grid must be 2-D");
  const int nx = grid.resolution[0], ny = grid.resolution[1];

  std::vector<Eigen::Vector2d> verts;
  std::unordered_map<std::uint64_t, int> welded;
  std::vector<std::array<int, 2>> segments;

  auto vertex_on_edge = [&](int i, int j, int edge) -> int {
    const auto& c0 = kSquareCorners[kSquareEdges[edge][0]];
    const auto& c1 = kSquareCorners[kSquareEdges[edge][1]];
    int a[2] = {i + c0[0], j + c0[1]};
    int b[2] = {i + c1[0], j + c1[1]};
    const int axis = a[0] == b[0] ? 1 : 0;
    if (a[axis] > b[axis]) std::swap(a, b);
    const std::uint64_t key = static_cast<std::uint64_t>(grid.index(a[0], a[1])) * 2 + axis;
    auto it = welded.find(key);
    if (it != welded.end()) return it->second;
    const double va = grid.at(a[0], a[1]), vb = grid.at(b[0], b[1]);
    const double t = (iso - va) / (vb - va);
    Vector pa = grid.node(a[0], a[1]), pb = grid.node(b[0], b[1]);
    Vector p = pa + t * (pb - pa);
    const int id = static_cast<int>(verts.size());
    verts.emplace_back(p(0), p(1));
    welded.emplace(key, id);
    return id;
  };

  // Saddle cells need a center sample; collect them first so a user field
  // can be evaluated in one batch.
  std::vector<std::array<int, 2>> saddles;
  for (int j = 0; j + 1 < ny; ++j)
    for (int i = 0; i + 1 < nx; ++i) {
      int c = 0;
      for (int k = 0; k < 4; ++k)
        if (grid.at(i + kSquareCorners[k][0], j + kSquareCorners[k][1]) < iso) c |= 1 << k;
      if (c == 5 || c == 10) saddles.push_back({i, j});
    }
  std::map<std::pair<int, int>, double> center_value;
  if (!saddles.empty()) {
    Matrix pts(static_cast<Eigen::Index>(saddles.size()), 2);
    for (std::size_t s = 0; s < saddles.size(); ++s) {
      const auto [i, j] = saddles[s];
      pts.row(static_cast<Eigen::Index>(s)) = (grid.node(i, j) + 0.5 * grid.spacing).transpose();
    }
    Vector vals(pts.rows());
    if (center) {
      vals = (*center)(pts);
    } else {
      for (std::size_t s = 0; s < saddles.size(); ++s) {
        const auto [i, j] = saddles[s];
        vals(static_cast<Eigen::Index>(s)) =
            0.25 * (grid.at(i, j) + grid.at(i + 1, j) + grid.at(i + 1, j + 1) + grid.at(i, j + 1));
      }
    }
    for (std::size_t s = 0; s < saddles.size(); ++s)
      center_value[{saddles[s][0], saddles[s][1]}] = vals(static_cast<Eigen::Index>(s));
  }

  for (int j = 0; j + 1 < ny; ++j)
    for (int i = 0; i + 1 < nx; ++i) {
      int c = 0;
      for (int k = 0; k < 4; ++k)
        if (grid.at(i + kSquareCorners[k][0], j + kSquareCorners[k][1]) < iso) c |= 1 << k;
      std::array<int, 4> seg = kSquareSegments[c];
      if (c == 5 || c == 10) {
        const bool center_inside = center_value.at({i, j}) < iso;
        // Inside center joins the inside corners; cut off the outside ones.
        const bool cut_c0_c2 = (c == 5) != center_inside;
        seg = cut_c0_c2 ? std::array<int, 4>{3, 0, 1, 2} : std::array<int, 4>{0, 1, 2, 3};
      }
      for (int s = 0; s < 4 && seg[s] >= 0; s += 2)
        segments.push_back({vertex_on_edge(i, j, seg[s]), vertex_on_edge(i, j, seg[s + 1])});
    }

  // Chain segments into polylines through shared vertices.
  std::vector<std::vector<int>> incident(verts.size());
  for (std::size_t s = 0; s < segments.size(); ++s) {
    incident[segments[s][0]].push_back(static_cast<int>(s));
    incident[segments[s][1]].push_back(static_cast<int>(s));
  }
  std::vector<bool> used(segments.size(), false);
  std::vector<Contour> out;
  auto other = [&](int s, int v) { return segments[s][0] == v ? segments[s][1] : segments[s][0]; };
  auto next_segment = [&](int v) -> int {
    for (int s : incident[v])
      if (!used[s]) return s;
    return -1;
  };
  auto trace = [&](int start_vertex, int first_segment) {
    Contour ct;
    ct.points.push_back(verts[start_vertex]);
    int v = start_vertex, s = first_segment;
    while (s >= 0) {
      used[s] = true;
      v = other(s, v);
      if (v == start_vertex) {
        ct.closed = true;
        break;
      }
      ct.points.push_back(verts[v]);
      s = next_segment(v);
    }
    out.push_back(std::move(ct));
  };
  // Open chains start at endpoints of degree one.
  for (std::size_t v = 0; v < verts.size(); ++v)
    if (incident[v].size() == 1 && !used[incident[v][0]]) trace(static_cast<int>(v), incident[v][0]);
  for (std::size_t s = 0; s < segments.size(); ++s)
    if (!used[s]) trace(segments[s][0], static_cast<int>(s));

  if (out.empty()) log::info("marching_squares: field has no crossing of iso=", iso, "; empty contour set");
  return out;
}

Matrix sample_contours(const std::vector<Contour>& contours, double step) {
  if (!(step > 0.0)) usage_error("sample_contours: step must be positive");
  std::vector<Eigen::Vector2d> pts;
  for (const auto& c : contours) {
    const std::size_t n = c.points.size();
    const std::size_t nseg = c.closed ? n : (n > 0 ? n - 1 : 0);
    if (n == 1) pts.push_back(c.points[0]);
    for (std::size_t s = 0; s < nseg; ++s) {
      const auto& a = c.points[s];
      const auto& b = c.points[(s + 1) % n];
      const int pieces = std::max(1, static_cast<int>(std::ceil((b - a).norm() / step)));
      for (int t = 0; t < pieces; ++t) pts.push_back(a + (b - a) * (static_cast<double>(t) / pieces));
      if (!c.closed && s + 1 == nseg) pts.push_back(b);
    }
  }
  Matrix m(static_cast<Eigen::Index>(pts.size()), 2);
  for (std::size_t i = 0; i < pts.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = pts[i].transpose();
  return m;
}

}  // namespace pcp
