#include <algorithm>
#include <cmath>
#include <random>

#include "pcp/error.hpp"
#include "pcp/log.hpp"
#include "pcp/pipeline.hpp"
#include "pcp/random.hpp"

namespace pcp {

using ad::Tensor;
using ad::Var;

namespace {

constexpr double kStep = 1e-6;
constexpr int kProbesPerInstance = 40;

Tensor random_tensor(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Tensor t(r, c);
  for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = n(rng);
  return t;
}

int uniform_int(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

// Max-norm relative error of `analytic` against central differences of `f`
// over a random subset of parameter entries.
template <typename F>
double compare_with_fd(ad::ParameterSet& params, const std::vector<Tensor>& analytic, F&& f, std::mt19937_64& rng) {
  std::vector<std::pair<std::size_t, Eigen::Index>> entries;
  for (std::size_t p = 0; p < params.size(); ++p)
    for (Eigen::Index i = 0; i < params[p].var.value().size(); ++i) entries.emplace_back(p, i);
  std::shuffle(entries.begin(), entries.end(), rng);
  if (entries.size() > kProbesPerInstance) entries.resize(kProbesPerInstance);

  double diff = 0.0, scale = 0.0;
  for (auto [p, i] : entries) {
    double& w = params[p].var.mutable_value().data()[i];
    const double saved = w;
    w = saved + kStep;
    const double up = f();
    w = saved - kStep;
    const double down = f();
    w = saved;
    const double fd = (up - down) / (2.0 * kStep);
    const double a = analytic[p].data()[i];
    diff = std::max(diff, std::abs(a - fd));
    scale = std::max({scale, std::abs(a), std::abs(fd)});
  }
  return diff / std::max(scale, 1e-8);
}

std::vector<Tensor> take_grads(ad::ParameterSet& params) {
  std::vector<Tensor> g;
  for (auto& p : params) g.push_back(p.var.has_grad() ? p.var.grad() : Tensor::Zero(p.var.rows(), p.var.cols()));
  params.zero_grad();
  return g;
}

double first_order_instance(const GradCheckConfig& cfg, std::mt19937_64& rng) {
  const int layers = uniform_int(rng, 1, cfg.max_layers);
  const int in = uniform_int(rng, 1, 8);
  const int batch = uniform_int(rng, 1, 8);
  std::vector<nets::Linear> net;
  ad::ParameterSet params;
  int width = in;
  for (int l = 0; l < layers; ++l) {
    const int out = l + 1 == layers ? 1 : uniform_int(rng, 1, cfg.max_width);
    net.push_back(nets::make_linear(width, out, rng));
    // Nonzero biases so that every parameter has a generic gradient.
    net.back().bias.mutable_value() = random_tensor(1, out, rng) * 0.1;
    params.add("l" + std::to_string(l) + ".w", net.back().weight);
    params.add("l" + std::to_string(l) + ".b", net.back().bias);
    width = out;
  }
  const Var x = Var::constant(random_tensor(batch, in, rng));
  const Var c = Var::constant(random_tensor(batch, 1, rng));
  auto forward = [&] {
    Var h = x;
    for (std::size_t l = 0; l < net.size(); ++l) {
      h = ad::add_row(ad::matmul(h, net[l].weight), net[l].bias);
      if (l + 1 < net.size()) h = ad::relu(h);
    }
    return ad::sum(ad::mul(h, c));
  };
  ad::backward(forward());
  const auto analytic = take_grads(params);
  ad::NoGradGuard guard;
  return compare_with_fd(params, analytic, [&] { return forward().scalar(); }, rng);
}

double double_backprop_instance(const GradCheckConfig& cfg, std::mt19937_64& rng) {
  nets::Arch arch;
  arch.dim = uniform_int(rng, 2, 3);
  arch.cond_width = uniform_int(rng, 1, 16);
  arch.implicit_hidden = uniform_int(rng, 2, cfg.max_width);
  arch.implicit_layers = uniform_int(rng, 2, std::max(2, cfg.max_layers));
  arch.implicit_skip = uniform_int(rng, 0, arch.implicit_layers - 1);
  nets::ImplicitNet net(arch, rng);
  auto& params = net.parameters();
  for (auto& p : params)
    if (p.var.rows() == 1) p.var.mutable_value() = random_tensor(1, p.var.cols(), rng) * 0.1;

  const int batch = uniform_int(rng, 1, 16);
  const Tensor q = random_tensor(batch, arch.dim, rng) * 0.5;
  const Var nn = Var::constant(random_tensor(batch, arch.dim, rng) * 0.5);
  const Var f = Var::constant(random_tensor(1, arch.cond_width, rng));
  auto loss = [&] {
    auto sg = net.eval_with_grad(Var::input(q), f);
    return pulling_loss(sg.query, nn, sg.sdf, sg.grad, LossMode::Squared);
  };
  ad::backward(loss());
  const auto analytic = take_grads(params);
  // The loss itself needs the input gradient, so FD evaluations keep recording.
  const double err = compare_with_fd(params, analytic, [&] { return loss().scalar(); }, rng);
  params.zero_grad();
  return err;
}

}  // namespace

GradCheckReport run_grad_check(const GradCheckConfig& cfg) {
  if (cfg.max_layers < 1 || cfg.max_width < 1) usage_error("grad-check: layers and width must be >= 1");
  if (cfg.first_order_instances < 0 || cfg.double_backprop_instances < 0)
    usage_error("grad-check: instance counts must be >= 0");
  GradCheckReport r;
  auto rng1 = make_stream(cfg.seed, "gradcheck.first_order");
  for (int i = 0; i < cfg.first_order_instances; ++i) {
    const double e = first_order_instance(cfg, rng1);
    r.first_order_max_rel = std::max(r.first_order_max_rel, e);
    if (!(e < cfg.first_order_tol)) {
      ++r.first_order_failures;
      log::warn("grad-check: first-order instance ", i, " relative error ", e);
    }
  }
  auto rng2 = make_stream(cfg.seed, "gradcheck.double_backprop");
  for (int i = 0; i < cfg.double_backprop_instances; ++i) {
    const double e = double_backprop_instance(cfg, rng2);
    r.double_backprop_max_rel = std::max(r.double_backprop_max_rel, e);
    if (!(e < cfg.double_backprop_tol)) {
      ++r.double_backprop_failures;
      log::warn("grad-check: double-backprop instance ", i, " relative error ", e);
    }
  }
  return r;
}

}  // namespace pcp
