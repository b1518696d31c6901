#include "pcp/specialize.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "pcp/error.hpp"
#include "pcp/log.hpp"
#include "pcp/random.hpp"

namespace pcp {

using ad::Tensor;
using ad::Var;

namespace {
constexpr Eigen::Index kEvalChunk = 4096;

Matrix gather_rows(const Matrix& m, const std::vector<std::int64_t>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
  return out;
}
}  // namespace

SpecializeMode parse_specialize_mode(const std::string& s) {
  if (s == "full") return SpecializeMode::Full;
  if (s == "no_shift" || s == "no-shift") return SpecializeMode::NoShift;
  if (s == "direct_q" || s == "direct-q") return SpecializeMode::DirectQ;
  if (s == "fixed_cond" || s == "fixed-cond") return SpecializeMode::FixedCond;
  if (s == "no_prior" || s == "no-prior") return SpecializeMode::NoPrior;
  if (s == "joint_tune" || s == "joint-tune") return SpecializeMode::JointTune;
  usage_error("unknown mode '" + s + "' (expected full|no-shift|direct-q|fixed-cond|no-prior|joint-tune)");
}

std::string to_string(SpecializeMode m) {
  switch (m) {
    case SpecializeMode::Full: return "full";
    case SpecializeMode::NoShift: return "no_shift";
    case SpecializeMode::DirectQ: return "direct_q";
    case SpecializeMode::FixedCond: return "fixed_cond";
    case SpecializeMode::NoPrior: return "no_prior";
    case SpecializeMode::JointTune: return "joint_tune";
  }
  return "?";
}

nets::QueryMode query_mode(SpecializeMode m) {
  switch (m) {
    case SpecializeMode::NoShift: return nets::QueryMode::NoShift;
    case SpecializeMode::DirectQ: return nets::QueryMode::DirectQ;
    case SpecializeMode::FixedCond: return nets::QueryMode::FixedCond;
    default: return nets::QueryMode::Full;
  }
}

bool freezes_implicit(SpecializeMode m) { return m != SpecializeMode::NoPrior && m != SpecializeMode::JointTune; }

nets::QueryPrediction GlobalSdf::predict(const Var& q_global) const {
  std::optional<Var> cond;
  if (fixed_condition) cond = Var::constant(*fixed_condition);
  return query.predict(q_global, query_mode(mode), cond);
}

ad::ParameterSet GlobalSdf::all_parameters() const {
  ad::ParameterSet all;
  all.append(implicit.parameters());
  all.append(query.parameters());
  return all;
}

Vector GlobalSdf::eval(const Matrix& q_global) const {
  if (q_global.cols() != arch.dim) usage_error("global_sdf_eval: query width does not match dimension");
  ad::NoGradGuard guard;
  Vector out(q_global.rows());
  for (Eigen::Index r0 = 0; r0 < q_global.rows(); r0 += kEvalChunk) {
    const auto n = std::min(kEvalChunk, q_global.rows() - r0);
    Var q = Var::constant(q_global.middleRows(r0, n));
    auto p = predict(q);
    out.segment(r0, n) = implicit.eval(p.query, p.condition).value().col(0);
  }
  return out;
}

PullResult GlobalSdf::pull(const Matrix& q_global) const {
  if (q_global.cols() != arch.dim) usage_error("pull: query width does not match dimension");
  const auto total = q_global.rows();
  PullResult r;
  r.local_queries.resize(total, arch.dim);
  r.sdf.resize(total);
  r.gradients.resize(total, arch.dim);
  r.pulled.resize(total, arch.dim);
  for (Eigen::Index r0 = 0; r0 < total; r0 += kEvalChunk) {
    const auto n = std::min(kEvalChunk, total - r0);
    Var q = Var::constant(q_global.middleRows(r0, n));
    auto p = predict(q);
    Var ql = Var::input(p.query.value());
    auto sg = implicit.eval_with_grad(ql, Var::constant(p.condition.value()));
    Var pulled = pulled_points(q, sg.sdf, sg.grad);
    r.local_queries.middleRows(r0, n) = ql.value();
    r.sdf.segment(r0, n) = sg.sdf.value().col(0);
    r.gradients.middleRows(r0, n) = sg.grad.value();
    r.pulled.middleRows(r0, n) = pulled.value();
  }
  return r;
}

GlobalSdf init_global_sdf(const PriorCheckpoint& prior, const SpecializeConfig& cfg) {
  const auto& arch = prior.arch;
  arch.validate();
  if (cfg.mode == SpecializeMode::FixedCond) {
    if (!cfg.fixed_condition) usage_error("specialize: fixed_cond mode requires a condition");
    if (cfg.fixed_condition->rows() != 1 || cfg.fixed_condition->cols() != arch.cond_width)
      usage_error("specialize: fixed condition must be 1 x " + std::to_string(arch.cond_width));
  }
  GlobalSdf g;
  g.arch = arch;
  g.mode = cfg.mode;
  if (cfg.mode == SpecializeMode::FixedCond) g.fixed_condition = cfg.fixed_condition;

  auto rng = make_stream(cfg.seed, "init");
  g.implicit = nets::ImplicitNet(arch, rng);
  g.query = nets::QueryNet(arch, rng);
  if (cfg.mode != SpecializeMode::NoPrior) nets::copy_values(prior.implicit.parameters(), g.implicit.parameters());
  if (freezes_implicit(cfg.mode)) g.implicit.parameters().set_trainable(false);
  g.implicit_checksum_before = g.implicit.parameters().checksum();
  g.implicit_checksum_after = g.implicit_checksum_before;
  return g;
}

GlobalSdf specialize(const PointCloud& cloud, const PriorCheckpoint& prior, const SpecializeConfig& cfg,
                     const StepCallback& on_step) {
  validate_cloud(cloud);
  if (cloud.dim() != prior.arch.dim)
    usage_error("specialize: cloud is " + std::to_string(cloud.dim()) + "-d but the prior expects " +
                std::to_string(prior.arch.dim) + "-d");
  if (cfg.steps < 0 || cfg.batch == 0) usage_error("specialize: steps must be >= 0 and batch > 0");

  GlobalSdf g = init_global_sdf(prior, cfg);
  if (cfg.steps == 0) return g;

  ad::ParameterSet params;
  if (!freezes_implicit(cfg.mode)) params.append(g.implicit.parameters());
  params.append(g.query.parameters());
  ad::Adam adam(cfg.adam);

  SpatialIndex index(cloud.points);
  auto sample_rng = make_stream(cfg.seed, "sampling");
  auto select_rng = make_stream(cfg.seed, "selection");
  auto pool = sample_queries(cloud, index, cfg.sampling, sample_rng);

  for (int step = 0; step < cfg.steps; ++step) {
    auto sel = select_subset(pool.size(), cfg.batch, select_rng);
    Var qg = Var::constant(gather_rows(pool.queries, sel));
    Var nn = Var::constant(gather_rows(pool.nn_targets, sel));

    auto p = g.predict(qg);
    // The pull direction is dF/dq_l' at the predicted query, not at q_g.
    auto sg = g.implicit.eval_with_grad(p.query, p.condition);
    Var loss = pulling_loss(qg, nn, sg.sdf, sg.grad, cfg.loss_mode);
    const double value = loss.scalar();
    if (!std::isfinite(value)) {
      std::ostringstream os;
      os << "specialize: non-finite loss at step " << step << " (mode " << to_string(cfg.mode) << ")";
      numeric_error(os.str());
    }
    ad::backward(loss);
    adam.step(params);
    g.loss_history.push_back({step, value});
    if (on_step) on_step(step, value);
  }
  g.implicit_checksum_after = g.implicit.parameters().checksum();
  if (freezes_implicit(cfg.mode) && g.implicit_checksum_after != g.implicit_checksum_before)
    numeric_error("specialize: frozen implicit network changed during optimization");
  return g;
}

}  // namespace pcp
