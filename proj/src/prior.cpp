#include "pcp/prior.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "pcp/error.hpp"
#include "pcp/log.hpp"
#include "pcp/random.hpp"

namespace pcp {

using ad::Tensor;
using ad::Var;

LossMode parse_loss_mode(const std::string& s) {
  if (s == "squared") return LossMode::Squared;
  if (s == "plain") return LossMode::Plain;
  usage_error("unknown loss mode '" + s + "' (expected squared|plain)");
}

std::string to_string(LossMode m) { return m == LossMode::Squared ? "squared" : "plain"; }

SigmaMode parse_sigma_mode(const std::string& s) {
  if (s == "variance") return SigmaMode::Variance;
  if (s == "stddev") return SigmaMode::StdDev;
  usage_error("unknown sigma mode '" + s + "' (expected variance|stddev)");
}

std::string to_string(SigmaMode m) { return m == SigmaMode::Variance ? "variance" : "stddev"; }

Var pulled_points(const Var& q, const Var& s, const Var& grad_s) {
  Var norm = ad::add_scalar(ad::row_norm(grad_s), kGradNormEps);
  Var step = ad::mul_col(grad_s, ad::div_col(s, norm));
  return ad::sub(q, step);
}

Var pulling_loss(const Var& q, const Var& nn, const Var& s, const Var& grad_s, LossMode mode) {
  if (q.rows() != nn.rows() || q.cols() != nn.cols() || grad_s.rows() != q.rows() || grad_s.cols() != q.cols())
    usage_error("pulling_loss: shapes q" + q.shape() + " nn" + nn.shape() + " grad" + grad_s.shape());
  if (s.rows() != q.rows() || s.cols() != 1) usage_error("pulling_loss: sdf shape " + s.shape());
  Var residual = ad::sub(nn, pulled_points(q, s, grad_s));
  if (mode == LossMode::Squared) return ad::mean(ad::sum_cols(ad::mul(residual, residual)));
  return ad::mean(ad::row_norm(residual));
}

ad::ParameterSet PriorCheckpoint::all_parameters() const {
  ad::ParameterSet all;
  all.append(encoder.parameters());
  all.append(implicit.parameters());
  return all;
}

PriorCheckpoint init_prior(const nets::Arch& arch, std::uint64_t seed) {
  arch.validate();
  auto rng = make_stream(seed, "init");
  PriorCheckpoint ck;
  ck.arch = arch;
  ck.encoder = nets::RegionEncoder(arch, rng);
  ck.implicit = nets::ImplicitNet(arch, rng);
  return ck;
}

namespace {

Matrix gather_rows(const Matrix& m, const std::vector<std::int64_t>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
  return out;
}

}  // namespace

PriorCheckpoint train_local_prior(const std::vector<LocalRegion>& regions, const nets::Arch& arch,
                                  const TrainConfig& cfg, const EpochCallback& on_epoch) {
  if (regions.empty()) data_error("train_local_prior: no regions");
  if (cfg.epochs < 0 || cfg.queries_per_region == 0 || cfg.sampling.per_point == 0 || cfg.sampling.k_sigma == 0)
    usage_error("train_local_prior: counts must be positive");
  for (std::size_t i = 0; i < regions.size(); ++i) {
    if (regions[i].points.cols() != arch.dim) usage_error("train_local_prior: region dimension does not match arch");
    if (!(regions[i].scale > 0.0)) data_error("train_local_prior: region " + std::to_string(i) + " has no scale");
  }

  PriorCheckpoint ck = init_prior(arch, cfg.seed);
  ck.config = cfg;
  auto params = ck.all_parameters();
  ad::Adam adam(cfg.adam);

  std::vector<PointCloud> clouds;
  std::vector<SpatialIndex> indices;
  clouds.reserve(regions.size());
  indices.reserve(regions.size());
  for (const auto& r : regions) {
    clouds.emplace_back(r.points);
    indices.emplace_back(r.points);
  }

  auto shuffle_rng = make_stream(cfg.seed, "shuffle");
  auto sample_rng = make_stream(cfg.seed, "sampling");
  auto select_rng = make_stream(cfg.seed, "selection");

  std::vector<std::size_t> order(regions.size());
  std::int64_t step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_sum = 0.0;
    for (auto r : order) {
      auto batch = sample_queries(clouds[r], indices[r], cfg.sampling, sample_rng);
      auto sel = select_subset(batch.size(), cfg.queries_per_region, select_rng);
      Var q = Var::input(gather_rows(batch.queries, sel));
      Var nn = Var::constant(gather_rows(batch.nn_targets, sel));

      Var f = ck.encoder.encode(nn);
      auto sg = ck.implicit.eval_with_grad(q, f);
      Var loss = pulling_loss(q, nn, sg.sdf, sg.grad, cfg.loss_mode);
      const double value = loss.scalar();
      if (!std::isfinite(value)) {
        std::ostringstream os;
        os << "train_local_prior: non-finite loss at epoch " << epoch << ", step " << step << ", region " << r;
        numeric_error(os.str());
      }
      ad::backward(loss);
      adam.step(params);
      ck.loss_history.push_back({step, value});
      epoch_sum += value;
      ++step;
    }
    const double mean_loss = epoch_sum / static_cast<double>(order.size());
    ck.epoch_loss.push_back(mean_loss);
    if (on_epoch) on_epoch(epoch, mean_loss);
  }
  return ck;
}

Tensor cloud_condition(const PriorCheckpoint& prior, const PointCloud& cloud) {
  validate_cloud(cloud);
  auto region = normalize_region(cloud.points);
  ad::NoGradGuard guard;
  return prior.encoder.encode(Var::constant(region.points)).value();
}

}  // namespace pcp
