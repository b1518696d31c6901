#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pcp/autodiff.hpp"

namespace pcp::ad {

struct Parameter {
  std::string name;
  Var var;
  Tensor m;  // first moment
  Tensor v;  // second moment
};

/// Named trainable tensors. Names are unique; insertion order is preserved
/// and defines serialization order.
class ParameterSet {
 public:
  void add(const std::string& name, Var var);
  void append(const ParameterSet& other);

  std::size_t size() const { return params_.size(); }
  Parameter& operator[](std::size_t i) { return params_[i]; }
  const Parameter& operator[](std::size_t i) const { return params_[i]; }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  const Parameter* find(const std::string& name) const;
  Parameter* find(const std::string& name);

  void zero_grad();
  void set_trainable(bool on);
  /// FNV-1a over names, shapes and value bytes.
  std::uint64_t checksum() const;

 private:
  std::vector<Parameter> params_;
};

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Missing adjoint: throw when strict, otherwise skip with a warning.
  bool strict = false;
};

class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  /// One bias-corrected Adam update on every parameter, then clears adjoints.
  void step(ParameterSet& params);
  std::int64_t steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  std::int64_t t_ = 0;
};

}  // namespace pcp::ad
