#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "pcp/geometry.hpp"
#include "pcp/nets.hpp"
#include "pcp/prior.hpp"

namespace pcp {

/// full: train θ3 only. no_shift / direct_q / fixed_cond: ablations of the
/// query head, θ3 only. no_prior: random θ2, train θ2+θ3. joint_tune: θ2 from
/// the prior, train θ2+θ3.
enum class SpecializeMode { Full, NoShift, DirectQ, FixedCond, NoPrior, JointTune };

SpecializeMode parse_specialize_mode(const std::string& s);
std::string to_string(SpecializeMode m);
nets::QueryMode query_mode(SpecializeMode m);
/// Whether θ2 stays frozen at the prior's values in this mode.
bool freezes_implicit(SpecializeMode m);

struct SpecializeConfig {
  int steps = 1000;
  std::size_t batch = 2000;
  SamplingConfig sampling;
  ad::AdamConfig adam;
  std::uint64_t seed = 0;
  LossMode loss_mode = LossMode::Squared;
  SpecializeMode mode = SpecializeMode::Full;
  /// Required for fixed_cond, (1 x cond_width).
  std::optional<ad::Tensor> fixed_condition;
};

struct PullResult {
  Matrix local_queries;  // q_l'
  Vector sdf;            // s'
  Matrix gradients;      // dF/dq_l' at q_l'
  Matrix pulled;         // q_g - s' * grad / |grad|
};

/// s'(q_g) = F(q_l'(q_g), f_l'(q_g)) with a frozen implicit network and a
/// cloud-specific query network.
class GlobalSdf {
 public:
  nets::Arch arch;
  nets::ImplicitNet implicit;
  nets::QueryNet query;
  SpecializeMode mode = SpecializeMode::Full;
  std::optional<ad::Tensor> fixed_condition;
  std::vector<LossRecord> loss_history;
  std::uint64_t implicit_checksum_before = 0;
  std::uint64_t implicit_checksum_after = 0;

  /// Batched evaluation of s' at the rows of q_global.
  Vector eval(const Matrix& q_global) const;
  /// Predicted local queries, s', dF/dq_l' and the pulled positions.
  PullResult pull(const Matrix& q_global) const;

  nets::QueryPrediction predict(const ad::Var& q_global) const;
  ad::ParameterSet all_parameters() const;
};

using StepCallback = std::function<void(int step, double loss)>;

/// Optimizes the query network (and θ2 in no_prior / joint_tune) on the
/// cloud's pulling loss. Queries are sampled once around the cloud; every
/// step draws a fresh mini-batch of `batch` of them.
GlobalSdf specialize(const PointCloud& cloud, const PriorCheckpoint& prior, const SpecializeConfig& cfg,
                     const StepCallback& on_step = {});

/// Untrained global SDF (the state specialize starts from).
GlobalSdf init_global_sdf(const PriorCheckpoint& prior, const SpecializeConfig& cfg);

}  // namespace pcp
