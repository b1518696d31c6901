#include <cmath>
#include <numbers>

#include "pcp/error.hpp"
#include "pcp/io.hpp"
#include "pcp/log.hpp"
#include "pcp/metrics.hpp"
#include "pcp/pipeline.hpp"
#include "pcp/random.hpp"

namespace pcp {

Demo2dConfig::Demo2dConfig() {
  arch.dim = 2;
  arch.cond_width = 32;
  arch.encoder_hidden = {64, 128};
  arch.implicit_hidden = 64;
  arch.query_hidden = 64;
  train.epochs = 1000;
  train.adam.lr = 1e-3;
  train.sampling.sigma_mode = SigmaMode::StdDev;
  train.sampling.k_sigma = 20;
  specialize.steps = 2000;
  specialize.adam.lr = 1e-3;
  specialize.sampling.sigma_mode = SigmaMode::StdDev;
  specialize.sampling.k_sigma = 20;
}

PointCloud circle_cloud(std::size_t n, double radius) {
  if (n < 3 || !(radius > 0.0)) usage_error("circle_cloud: need >= 3 points and a positive radius");
  Matrix p(static_cast<Eigen::Index>(n), 2);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n);
    p(static_cast<Eigen::Index>(i), 0) = radius * std::cos(t);
    p(static_cast<Eigen::Index>(i), 1) = radius * std::sin(t);
  }
  return PointCloud(std::move(p));
}

PointCloud square_cloud(std::size_t n, double side) {
  if (n < 4 || !(side > 0.0)) usage_error("square_cloud: need >= 4 points and a positive side");
  const double h = 0.5 * side;
  Matrix p(static_cast<Eigen::Index>(n), 2);
  for (std::size_t i = 0; i < n; ++i) {
    // Arc-length parameter in [0, 4) edges, counter-clockwise from (-h,-h).
    const double s = 4.0 * static_cast<double>(i) / static_cast<double>(n);
    const int edge = static_cast<int>(s);
    const double t = (s - edge) * side;
    Eigen::Vector2d q;
    switch (edge) {
      case 0: q = {-h + t, -h}; break;
      case 1: q = {h, -h + t}; break;
      case 2: q = {h - t, h}; break;
      default: q = {-h, h - t}; break;
    }
    p.row(static_cast<Eigen::Index>(i)) = q.transpose();
  }
  return PointCloud(std::move(p));
}

double square_boundary_distance(const Eigen::Vector2d& p, double side) {
  const double h = 0.5 * side;
  const Eigen::Vector2d a = p.cwiseAbs();
  if (a.x() <= h && a.y() <= h) return h - a.maxCoeff();
  return (a - Eigen::Vector2d(h, h)).cwiseMax(0.0).norm();
}

PriorCheckpoint demo2d_prior(const Demo2dConfig& cfg) {
  if (cfg.arch.dim != 2) usage_error("demo2d: arch.dim must be 2");
  const auto regions = build_local_regions(circle_cloud(cfg.circle_points, cfg.circle_radius), cfg.prior_grid);
  TrainConfig train = cfg.train;
  train.seed = cfg.seed;
  return train_local_prior(regions, cfg.arch, train, [](int epoch, double loss) {
    if (epoch % 100 == 0) log::info("demo2d prior: epoch ", epoch, " loss ", loss);
  });
}

Demo2dResult demo2d_specialize(const PriorCheckpoint& prior, const Demo2dConfig& cfg) {
  const PointCloud square = square_cloud(cfg.square_points, cfg.square_side);
  SpecializeConfig sc = cfg.specialize;
  sc.seed = cfg.seed;
  if (sc.mode == SpecializeMode::FixedCond) sc.fixed_condition = cloud_condition(prior, square);
  GlobalSdf g = specialize(square, prior, sc, [](int step, double loss) {
    if (step % 100 == 0) log::info("demo2d specialize: step ", step, " loss ", loss);
  });

  Demo2dResult r;
  r.specialize_history = g.loss_history;
  r.implicit_frozen = g.implicit_checksum_after == g.implicit_checksum_before &&
                      g.implicit.parameters().checksum() == prior.implicit.parameters().checksum();

  // Fresh queries around the square, drawn the same way as training queries.
  SpatialIndex index(square.points);
  auto rng = make_stream(cfg.seed, "eval");
  auto pool = sample_queries(square, index, sc.sampling, rng);
  const auto sel = select_subset(pool.size(), cfg.eval_queries, rng);
  Matrix qg(static_cast<Eigen::Index>(sel.size()), 2);
  for (std::size_t i = 0; i < sel.size(); ++i) qg.row(static_cast<Eigen::Index>(i)) = pool.queries.row(sel[i]);
  const PullResult pull = g.pull(qg);
  std::size_t within = 0;
  for (Eigen::Index i = 0; i < qg.rows(); ++i) {
    TransportRow row;
    row.q_global = qg.row(i).transpose();
    row.q_local = pull.local_queries.row(i).transpose();
    row.sdf = pull.sdf(i);
    row.pulled = pull.pulled.row(i).transpose();
    if (square_boundary_distance(row.pulled, cfg.square_side) <= cfg.pull_tolerance) ++within;
    r.transport.push_back(row);
  }
  r.pulled_within_fraction = static_cast<double>(within) / static_cast<double>(qg.rows());

  const Bounds bounds = default_bounds(square);
  const ScalarField field = [&g](const Matrix& q) { return g.eval(q); };
  const SdfGrid grid = eval_sdf_grid(field, bounds, {cfg.contour_res, cfg.contour_res});
  r.contours = marching_squares(grid, 0.0, field);
  const double spacing = grid.spacing.minCoeff();
  const Matrix truth = square_cloud(std::max<std::size_t>(4000, cfg.square_points), cfg.square_side).points;
  if (r.contours.empty()) {
    r.contour_chamfer_l1 = std::numeric_limits<double>::infinity();
  } else {
    r.contour_chamfer_l1 = chamfer(sample_contours(r.contours, 0.25 * spacing), truth, 1);
  }
  r.pulled_pass = r.pulled_within_fraction >= cfg.pull_fraction;
  r.contour_pass = r.contour_chamfer_l1 < cfg.contour_tolerance;
  return r;
}

std::string transport_table(const std::vector<TransportRow>& rows) {
  std::string out = "qg_x,qg_y,ql_x,ql_y,s\n";
  for (const auto& r : rows)
    out += io::fmt_g9(r.q_global.x()) + ',' + io::fmt_g9(r.q_global.y()) + ',' + io::fmt_g9(r.q_local.x()) + ',' +
           io::fmt_g9(r.q_local.y()) + ',' + io::fmt_g9(r.sdf) + '\n';
  return out;
}

}  // namespace pcp
