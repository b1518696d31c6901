#include "pcp/optim.hpp"

#include <cmath>
#include <cstring>

#include "pcp/error.hpp"
#include "pcp/log.hpp"

namespace pcp::ad {

void ParameterSet::add(const std::string& name, Var var) {
  if (find(name)) usage_error("ParameterSet: duplicate parameter name '" + name + "'");
  Parameter p{name, var, Tensor::Zero(var.rows(), var.cols()), Tensor::Zero(var.rows(), var.cols())};
  params_.push_back(std::move(p));
}

void ParameterSet::append(const ParameterSet& other) {
  for (const auto& p : other) add(p.name, p.var);
}

const Parameter* ParameterSet::find(const std::string& name) const {
  for (const auto& p : params_)
    if (p.name == name) return &p;
  return nullptr;
}

Parameter* ParameterSet::find(const std::string& name) {
  for (auto& p : params_)
    if (p.name == name) return &p;
  return nullptr;
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) p.var.zero_grad();
}

void ParameterSet::set_trainable(bool on) {
  for (auto& p : params_) p.var.set_trainable(on);
}

std::uint64_t ParameterSet::checksum() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ULL;
    }
  };
  for (const auto& p : params_) {
    mix(p.name.data(), p.name.size());
    const auto& t = p.var.value();
    const std::int64_t shape[2] = {t.rows(), t.cols()};
    mix(shape, sizeof(shape));
    mix(t.data(), sizeof(double) * static_cast<std::size_t>(t.size()));
  }
  return h;
}

void Adam::step(ParameterSet& params) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (auto& p : params) {
    if (!p.var.has_grad()) {
      if (cfg_.strict) usage_error("adam: parameter '" + p.name + "' has no gradient");
      log::warn("adam: skipping '", p.name, "' (no gradient)");
      continue;
    }
    const Tensor& g = p.var.grad();
    p.m = cfg_.beta1 * p.m + (1.0 - cfg_.beta1) * g;
    p.v = cfg_.beta2 * p.v + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
    auto m_hat = p.m.array() / bc1;
    auto v_hat = p.v.array() / bc2;
    p.var.mutable_value().array() -= cfg_.lr * m_hat / (v_hat.sqrt() + cfg_.eps);
    p.var.zero_grad();
  }
}

}  // namespace pcp::ad
