#pragma once

#include <optional>
#include <random>
#include <string>
#include <vector>

#include "pcp/autodiff.hpp"
#include "pcp/optim.hpp"

namespace pcp::nets {

using ad::Var;

/// Layer shapes of the three networks. Defaults are the full-size
/// configuration; tests and desk-scale runs shrink the hidden widths.
struct Arch {
  int dim = 3;
  int cond_width = 512;
  std::vector<int> encoder_hidden = {64, 128};
  int implicit_hidden = 512;
  int implicit_layers = 8;
  /// Layer that receives [h, q, f] instead of h. Values <= 0 disable the skip.
  int implicit_skip = 4;
  int query_hidden = 512;
  int query_layers = 8;

  void validate() const;
  bool operator==(const Arch&) const = default;
};

struct Linear {
  Var weight;  // in x out
  Var bias;    // 1 x out
};

/// Per-point MLP with ReLU followed by a max-pool over points (PointNet).
class RegionEncoder {
 public:
  RegionEncoder() = default;
  RegionEncoder(const Arch& arch, std::mt19937_64& rng);

  /// (n x dim) normalized points -> (1 x cond_width) feature.
  Var encode(const Var& points) const;

  ad::ParameterSet& parameters() { return params_; }
  const ad::ParameterSet& parameters() const { return params_; }

 private:
  std::vector<Linear> layers_;
  ad::ParameterSet params_;
};

struct SdfWithGrad {
  Var query;  // node the gradient was taken with respect to
  Var sdf;    // B x 1
  Var grad;   // B x dim, differentiable
};

/// Conditioned signed-distance MLP: s = F(q, f). ReLU on hidden layers, the
/// last layer is linear. The condition is concatenated to the query at the
/// input and again at the skip layer.
class ImplicitNet {
 public:
  ImplicitNet() = default;
  ImplicitNet(const Arch& arch, std::mt19937_64& rng);

  /// q: (B x dim). f: (B x cond) or (1 x cond), a single row being shared by
  /// all queries. Returns (B x 1).
  Var eval(const Var& q, const Var& f) const;
  SdfWithGrad eval_with_grad(const Var& q, const Var& f) const;

  int dim() const { return dim_; }
  int cond_width() const { return cond_; }
  ad::ParameterSet& parameters() { return params_; }
  const ad::ParameterSet& parameters() const { return params_; }

 private:
  int dim_ = 0;
  int cond_ = 0;
  int hidden_ = 0;
  int skip_ = -1;
  std::vector<Linear> layers_;
  ad::ParameterSet params_;
};

enum class QueryMode { Full, NoShift, DirectQ, FixedCond };

QueryMode parse_query_mode(const std::string& s);
std::string to_string(QueryMode m);

struct QueryPrediction {
  Var query;      // q_l' (B x dim)
  Var condition;  // f_l' (B x cond), or the shared fixed condition (1 x cond)
  Var shift;      // Δq (B x dim); undefined when the mode bypasses it
};

/// MLP mapping a global query to a local query plus its condition. The last
/// layer is linear with cond_width + dim outputs: [f_l', Δq].
class QueryNet {
 public:
  QueryNet() = default;
  QueryNet(const Arch& arch, std::mt19937_64& rng);

  /// Raw network output, (B x (cond + dim)).
  Var forward(const Var& q_global) const;
  /// fixed_condition is required (1 x cond) for QueryMode::FixedCond.
  QueryPrediction predict(const Var& q_global, QueryMode mode, const std::optional<Var>& fixed_condition = {}) const;

  int dim() const { return dim_; }
  int cond_width() const { return cond_; }
  ad::ParameterSet& parameters() { return params_; }
  const ad::ParameterSet& parameters() const { return params_; }

 private:
  int dim_ = 0;
  int cond_ = 0;
  std::vector<Linear> layers_;
  ad::ParameterSet params_;
};

/// Glorot-uniform weights, zero bias; weights multiplied by `gain`.
Linear make_linear(int in, int out, std::mt19937_64& rng, double gain = 1.0);

/// Copies values of `src` into same-named tensors of `dst`; shapes must agree.
void copy_values(const ad::ParameterSet& src, ad::ParameterSet& dst);

}  // namespace pcp::nets
