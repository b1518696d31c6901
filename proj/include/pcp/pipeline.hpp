#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pcp/config.hpp"
#include "pcp/geometry.hpp"
#include "pcp/mesher.hpp"
#include "pcp/prior.hpp"
#include "pcp/specialize.hpp"

namespace pcp {

inline constexpr const char* kVersion = "0.1.0";

/// Command options are JSON documents. Resolution order: the command's
/// defaults, then the file named by "config_file" (if any), then the
/// remaining keys of the request itself.
Json default_options(const std::string& command);
Json resolve_options(const std::string& command, const Json& request);

struct CommandResult {
  int exit_code = 0;
  std::string report;  // human-readable, one item per line
  std::vector<std::string> outputs;
};

/// Dispatches "train-prior", "reconstruct", "evaluate", "demo2d" or
/// "grad-check". Errors propagate as pcp::Error.
CommandResult run_command(const std::string& command, const Json& request);

CommandResult cmd_train_prior(const Json& options);
CommandResult cmd_reconstruct(const Json& options);
CommandResult cmd_evaluate(const Json& options);
CommandResult cmd_demo2d(const Json& options);
CommandResult cmd_grad_check(const Json& options);

struct Manifest {
  std::string command;
  Json config;
  std::uint64_t seed = 0;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  double duration_seconds = 0.0;
  std::string started_at;  // UTC, ISO-8601
};

void write_manifest(const Manifest& m, const std::string& path);
std::string utc_timestamp();

// ---- gradient self-check ----------------------------------------------------

struct GradCheckConfig {
  std::uint64_t seed = 0;
  int max_layers = 5;
  int max_width = 64;
  int first_order_instances = 100;
  int double_backprop_instances = 20;
  double first_order_tol = 1e-4;
  double double_backprop_tol = 1e-3;
};

struct GradCheckReport {
  double first_order_max_rel = 0.0;
  double double_backprop_max_rel = 0.0;
  int first_order_failures = 0;
  int double_backprop_failures = 0;
  bool passed() const { return first_order_failures == 0 && double_backprop_failures == 0; }
};

/// Compares reverse-mode gradients of random ReLU MLPs with central
/// differences: weight gradients of a scalar output, and weight gradients of
/// the pulling loss (which contains the input gradient).
GradCheckReport run_grad_check(const GradCheckConfig& cfg);

// ---- 2-D demo -----------------------------------------------------------------

struct Demo2dConfig {
  nets::Arch arch;
  std::size_t circle_points = 200;
  double circle_radius = 1.0;
  int prior_grid = 1;
  TrainConfig train;
  std::size_t square_points = 2000;
  double square_side = 1.0;
  SpecializeConfig specialize;
  std::size_t eval_queries = 2000;
  int contour_res = 128;
  double pull_tolerance = 0.02;
  double pull_fraction = 0.95;
  double contour_tolerance = 0.02;
  std::uint64_t seed = 0;

  Demo2dConfig();
};

struct TransportRow {
  Eigen::Vector2d q_global;
  Eigen::Vector2d q_local;
  double sdf = 0.0;
  Eigen::Vector2d pulled;
};

struct Demo2dResult {
  std::vector<TransportRow> transport;
  double pulled_within_fraction = 0.0;
  double contour_chamfer_l1 = 0.0;
  std::vector<Contour> contours;
  std::vector<LossRecord> specialize_history;
  bool pulled_pass = false;
  bool contour_pass = false;
  /// θ2 checksum unchanged by specialization.
  bool implicit_frozen = false;
};

PointCloud circle_cloud(std::size_t n, double radius);
/// Evenly spaced along the perimeter of an axis-aligned square centred at 0.
PointCloud square_cloud(std::size_t n, double side);
/// Unsigned distance from p to the boundary of that square.
double square_boundary_distance(const Eigen::Vector2d& p, double side);

PriorCheckpoint demo2d_prior(const Demo2dConfig& cfg);
/// Specializes `prior` to the square and measures pulled points and contour.
Demo2dResult demo2d_specialize(const PriorCheckpoint& prior, const Demo2dConfig& cfg);

std::string transport_table(const std::vector<TransportRow>& rows);

}  // namespace pcp
