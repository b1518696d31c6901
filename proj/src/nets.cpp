#include "pcp/nets.hpp"

#include <cmath>

#include "pcp/error.hpp"

namespace pcp::nets {

using ad::Tensor;

void Arch::validate() const {
  if (dim != 2 && dim != 3) usage_error("arch: dim must be 2 or 3");
  if (cond_width < 1 || implicit_hidden < 1 || query_hidden < 1) usage_error("arch: widths must be positive");
  if (implicit_layers < 2 || query_layers < 2) usage_error("arch: networks need at least 2 layers");
  if (implicit_skip >= implicit_layers) usage_error("arch: implicit_skip must be < implicit_layers");
  for (int w : encoder_hidden)
    if (w < 1) usage_error("arch: encoder widths must be positive");
}

Linear make_linear(int in, int out, std::mt19937_64& rng, double gain) {
  const double bound = std::sqrt(6.0 / (in + out)) * gain;
  std::uniform_real_distribution<double> u(-bound, bound);
  Tensor w(in, out);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = u(rng);
  return {Var::parameter(std::move(w)), Var::parameter(Tensor::Zero(1, out))};
}

namespace {

void register_layers(const std::string& prefix, const std::vector<Linear>& layers, ad::ParameterSet& params) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    params.add(prefix + "." + std::to_string(i) + ".weight", layers[i].weight);
    params.add(prefix + "." + std::to_string(i) + ".bias", layers[i].bias);
  }
}

// x * W[rows] for a row block of the weight; a single-row x is shared.
Var block_product(const Var& x, const Var& weight, Eigen::Index row0, Eigen::Index nrows) {
  return ad::matmul(x, ad::slice_rows(weight, row0, nrows));
}

// Linear layer over the column concatenation of `segments` without
// materializing it. Single-row segments are broadcast over the batch.
Var linear_concat(const std::vector<Var>& segments, const Linear& layer, Eigen::Index batch) {
  Var full;    // batch-sized contributions
  Var shared;  // single-row contributions (plus bias)
  Eigen::Index row0 = 0;
  for (const auto& s : segments) {
    Var part = segments.size() == 1 ? ad::matmul(s, layer.weight) : block_product(s, layer.weight, row0, s.cols());
    row0 += s.cols();
    if (s.rows() == 1 && batch != 1)
      shared = shared.defined() ? ad::add(shared, part) : part;
    else
      full = full.defined() ? ad::add(full, part) : part;
  }
  if (row0 != layer.weight.rows())
    usage_error("layer input width " + std::to_string(row0) + " does not match weight " + layer.weight.shape());
  shared = shared.defined() ? ad::add(shared, layer.bias) : layer.bias;
  if (!full.defined()) return ad::repeat_rows(shared, batch);
  return ad::add_row(full, shared);
}

}  // namespace

void copy_values(const ad::ParameterSet& src, ad::ParameterSet& dst) {
  for (auto& p : dst) {
    const auto* s = src.find(p.name);
    if (!s) usage_error("copy_values: missing tensor '" + p.name + "'");
    if (s->var.rows() != p.var.rows() || s->var.cols() != p.var.cols())
      usage_error("copy_values: shape mismatch for '" + p.name + "': " + s->var.shape() + " vs " + p.var.shape());
    p.var.mutable_value() = s->var.value();
  }
}

// ---- RegionEncoder --------------------------------------------------------

RegionEncoder::RegionEncoder(const Arch& arch, std::mt19937_64& rng) {
  arch.validate();
  int in = arch.dim;
  for (int w : arch.encoder_hidden) {
    layers_.push_back(make_linear(in, w, rng));
    in = w;
  }
  layers_.push_back(make_linear(in, arch.cond_width, rng));
  register_layers("encoder", layers_, params_);
}

Var RegionEncoder::encode(const Var& points) const {
  if (points.rows() == 0) usage_error("encode_region: empty point set");
  if (points.cols() != layers_.front().weight.rows())
    usage_error("encode_region: expected " + std::to_string(layers_.front().weight.rows()) + "-d points, got " +
                points.shape());
  Var h = points;
  for (const auto& l : layers_) h = ad::relu(ad::add_row(ad::matmul(h, l.weight), l.bias));
  return ad::max_rows(h);
}

// ---- ImplicitNet ------------------------------------------------------------

ImplicitNet::ImplicitNet(const Arch& arch, std::mt19937_64& rng)
    : dim_(arch.dim), cond_(arch.cond_width), hidden_(arch.implicit_hidden), skip_(arch.implicit_skip) {
  arch.validate();
  const int in0 = dim_ + cond_;
  for (int i = 0; i < arch.implicit_layers; ++i) {
    const int in = i == 0 ? in0 : (i == skip_ ? hidden_ + in0 : hidden_);
    const int out = i == arch.implicit_layers - 1 ? 1 : hidden_;
    layers_.push_back(make_linear(in, out, rng));
  }
  register_layers("implicit", layers_, params_);
}

Var ImplicitNet::eval(const Var& q, const Var& f) const {
  if (q.cols() != dim_) usage_error("sdf_eval: query width " + q.shape() + " != dim " + std::to_string(dim_));
  if (f.cols() != cond_) usage_error("sdf_eval: condition width " + f.shape() + " != " + std::to_string(cond_));
  if (f.rows() != 1 && f.rows() != q.rows()) usage_error("sdf_eval: condition rows " + f.shape() + " vs " + q.shape());
  const auto batch = q.rows();
  Var h = linear_concat({q, f}, layers_[0], batch);
  for (std::size_t i = 1; i < layers_.size(); ++i) {
    h = ad::relu(h);
    if (static_cast<int>(i) == skip_)
      h = linear_concat({h, q, f}, layers_[i], batch);
    else
      h = ad::add_row(ad::matmul(h, layers_[i].weight), layers_[i].bias);
  }
  return h;
}

SdfWithGrad ImplicitNet::eval_with_grad(const Var& q, const Var& f) const {
  Var qin = q.requires_grad() ? q : Var::input(q.value());
  Var s = eval(qin, f);
  auto g = ad::input_gradient(ad::sum(s), qin);
  return {qin, s, g.value};
}

// ---- QueryNet -----------------------------------------------------------------

QueryMode parse_query_mode(const std::string& s) {
  if (s == "full") return QueryMode::Full;
  if (s == "no_shift" || s == "no-shift") return QueryMode::NoShift;
  if (s == "direct_q" || s == "direct-q") return QueryMode::DirectQ;
  if (s == "fixed_cond" || s == "fixed-cond") return QueryMode::FixedCond;
  usage_error("unknown query mode '" + s + "'");
}

std::string to_string(QueryMode m) {
  switch (m) {
    case QueryMode::Full: return "full";
    case QueryMode::NoShift: return "no_shift";
    case QueryMode::DirectQ: return "direct_q";
    case QueryMode::FixedCond: return "fixed_cond";
  }
  return "?";
}

QueryNet::QueryNet(const Arch& arch, std::mt19937_64& rng) : dim_(arch.dim), cond_(arch.cond_width) {
  arch.validate();
  int in = dim_;
  for (int i = 0; i < arch.query_layers - 1; ++i) {
    layers_.push_back(make_linear(in, arch.query_hidden, rng));
    in = arch.query_hidden;
  }
  // Small head so the initial shift is close to zero.
  layers_.push_back(make_linear(in, cond_ + dim_, rng, 0.01));
  register_layers("query", layers_, params_);
}

Var QueryNet::forward(const Var& q_global) const {
  if (q_global.cols() != dim_) usage_error("predict_query: query width " + q_global.shape() + " != dim");
  Var h = q_global;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    h = ad::add_row(ad::matmul(h, layers_[i].weight), layers_[i].bias);
    if (i + 1 < layers_.size()) h = ad::relu(h);
  }
  return h;
}

QueryPrediction QueryNet::predict(const Var& q_global, QueryMode mode, const std::optional<Var>& fixed_condition) const {
  if (mode == QueryMode::FixedCond) {
    if (!fixed_condition || !fixed_condition->defined()) usage_error("predict_query: fixed_cond mode needs a condition");
    if (fixed_condition->rows() != 1 || fixed_condition->cols() != cond_)
      usage_error("predict_query: fixed condition must be 1 x " + std::to_string(cond_));
  }
  Var out = forward(q_global);
  QueryPrediction p;
  switch (mode) {
    case QueryMode::Full:
      p.condition = ad::slice_cols(out, 0, cond_);
      p.shift = ad::slice_cols(out, cond_, dim_);
      p.query = ad::add(q_global, p.shift);
      break;
    case QueryMode::NoShift:
      p.condition = ad::slice_cols(out, 0, cond_);
      p.query = q_global;
      break;
    case QueryMode::DirectQ:
      p.condition = ad::slice_cols(out, 0, cond_);
      p.query = ad::slice_cols(out, cond_, dim_);
      break;
    case QueryMode::FixedCond:
      p.condition = *fixed_condition;
      p.shift = ad::slice_cols(out, cond_, dim_);
      p.query = ad::add(q_global, p.shift);
      break;
  }
  return p;
}

}  // namespace pcp::nets
