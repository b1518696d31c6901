#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pcp/autodiff.hpp"
#include "pcp/geometry.hpp"
#include "pcp/nets.hpp"
#include "pcp/optim.hpp"

namespace pcp {

enum class LossMode { Squared, Plain };

LossMode parse_loss_mode(const std::string& s);
std::string to_string(LossMode m);
SigmaMode parse_sigma_mode(const std::string& s);
std::string to_string(SigmaMode m);

/// Added to |grad s| before normalizing the pull direction.
inline constexpr double kGradNormEps = 1e-12;

/// q - s * grad / (|grad| + eps), row-wise.
ad::Var pulled_points(const ad::Var& q, const ad::Var& s, const ad::Var& grad_s);

/// Mean over the batch of |nn - pulled|^2 (Squared) or |nn - pulled| (Plain).
/// q, nn, grad_s: (B x dim); s: (B x 1).
ad::Var pulling_loss(const ad::Var& q, const ad::Var& nn, const ad::Var& s, const ad::Var& grad_s, LossMode mode);

struct TrainConfig {
  int epochs = 100;
  std::size_t queries_per_region = 2000;
  SamplingConfig sampling;
  ad::AdamConfig adam;
  std::uint64_t seed = 0;
  LossMode loss_mode = LossMode::Squared;
};

struct LossRecord {
  std::int64_t step = 0;
  double loss = 0.0;
};

/// Encoder (θ1) and implicit network (θ2) trained on local regions.
struct PriorCheckpoint {
  nets::Arch arch;
  nets::RegionEncoder encoder;
  nets::ImplicitNet implicit;
  TrainConfig config;
  std::vector<LossRecord> loss_history;  // one entry per optimizer step
  std::vector<double> epoch_loss;        // mean step loss of each epoch

  ad::ParameterSet all_parameters() const;
};

/// Freshly initialized networks (weights from the "init" stream of seed).
PriorCheckpoint init_prior(const nets::Arch& arch, std::uint64_t seed);

using EpochCallback = std::function<void(int epoch, double mean_loss)>;

/// Jointly optimizes θ1 and θ2 on the pulling loss. Each epoch visits every
/// region once in shuffled order; each visit samples fresh queries, selects
/// queries_per_region of them and feeds their nearest neighbours to the
/// encoder. Aborts with Error(Numeric) on a non-finite loss.
PriorCheckpoint train_local_prior(const std::vector<LocalRegion>& regions, const nets::Arch& arch,
                                  const TrainConfig& cfg, const EpochCallback& on_epoch = {});

/// Condition of a whole cloud: the encoder applied to its normalized points.
ad::Tensor cloud_condition(const PriorCheckpoint& prior, const PointCloud& cloud);

}  // namespace pcp
