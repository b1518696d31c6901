// Flags become a JSON options object for the C API. Only flags present on
// the command line are forwarded.
#include <functional>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#ifdef __GLIBC__
#include <malloc.h>
#endif

#include "CLI11.hpp"
#include "json.hpp"

#include "pcp/pcp.h"

namespace {

using Json = nlohmann::ordered_json;

struct Flags {
  Json options = Json::object();
  std::vector<std::function<void()>> apply;

  // Records `target` under the JSON pointer `ptr` when the option was given.
  template <typename T>
  CLI::Option* add(CLI::App* app, const std::string& name, const std::string& ptr, const std::string& help) {
    auto value = std::make_shared<T>();
    CLI::Option* opt = app->add_option(name, *value, help);
    apply.push_back([this, opt, value, ptr] {
      if (opt->count() > 0) options[Json::json_pointer(ptr)] = *value;
    });
    return opt;
  }

  CLI::Option* flag(CLI::App* app, const std::string& name, const std::string& ptr, const std::string& help) {
    auto value = std::make_shared<bool>(false);
    CLI::Option* opt = app->add_flag(name, *value, help);
    apply.push_back([this, opt, value, ptr] {
      if (opt->count() > 0) options[Json::json_pointer(ptr)] = *value;
    });
    return opt;
  }

  void finalize() {
    for (auto& f : apply) f();
  }
};

void add_arch_flags(CLI::App* app, Flags& f) {
  f.add<int>(app, "--cond-width", "/arch/cond_width", "Condition feature width");
  f.add<int>(app, "--implicit-hidden", "/arch/implicit_hidden", "Implicit network hidden width");
  f.add<int>(app, "--implicit-layers", "/arch/implicit_layers", "Implicit network depth");
  f.add<int>(app, "--query-hidden", "/arch/query_hidden", "Query network hidden width");
  f.add<int>(app, "--query-layers", "/arch/query_layers", "Query network depth");
}

void add_sampling_flags(CLI::App* app, Flags& f, const std::string& section) {
  f.add<std::size_t>(app, "--per-point", "/" + section + "/sampling/per_point", "Queries drawn per surface point");
  f.add<std::size_t>(app, "--k-sigma", "/" + section + "/sampling/k_sigma", "Neighbour rank defining the spread");
  f.add<std::string>(app, "--sigma-mode", "/" + section + "/sampling/sigma_mode", "variance | stddev");
  f.add<std::string>(app, "--loss-mode", "/" + section + "/loss_mode", "squared | plain");
  f.add<double>(app, "--lr", "/" + section + "/adam/lr", "Adam learning rate");
}

}  // namespace

int main(int argc, char** argv) {
#ifdef __GLIBC__
  // Training allocates and frees many same-sized temporaries per step; keep
  // them on the heap instead of returning pages to the kernel every time.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  mallopt(M_TOP_PAD, 256 << 20);
#endif
  CLI::App app{"Surface reconstruction from point clouds with learned local priors"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(pcp_version()));

  Flags flags;
  std::string config_file;
  bool verbose = false, quiet = false;
  app.add_option("--config", config_file, "JSON config file (flags override it)")->check(CLI::ExistingFile);
  app.add_flag("-v,--verbose", verbose, "Progress messages on stderr");
  app.add_flag("-q,--quiet", quiet, "Errors only");
  flags.add<std::uint64_t>(&app, "--seed", "/seed", "Seed for every random stream");

  auto* train = app.add_subcommand("train-prior", "Learn a local prior from point clouds");
  flags.add<std::vector<std::string>>(train, "inputs", "/inputs", "Point-cloud files or directories")->required();
  flags.add<std::string>(train, "-o,--output", "/output", "Checkpoint path");
  flags.add<int>(train, "--grid", "/grid", "Cells per axis of the region grid");
  flags.add<int>(train, "--dim", "/dim", "Point dimension (2 or 3)");
  flags.add<int>(train, "--epochs", "/train/epochs", "Passes over all regions");
  flags.add<std::size_t>(train, "--queries-per-region", "/train/queries_per_region", "Queries per region visit");
  add_sampling_flags(train, flags, "train");
  add_arch_flags(train, flags);

  auto* recon = app.add_subcommand("reconstruct", "Specialize the prior to one cloud and mesh it");
  flags.add<std::string>(recon, "input", "/input", "Input point cloud")->required();
  flags.add<std::string>(recon, "--prior", "/prior", "Prior checkpoint (optional for no-prior)");
  flags.add<std::string>(recon, "-o,--output", "/output", "Mesh path (.obj/.ply; contour file in 2-D)");
  flags.add<std::string>(recon, "--mode", "/specialize/mode",
                         "full | no-shift | direct-q | fixed-cond | no-prior | joint-tune");
  flags.add<int>(recon, "--steps", "/specialize/steps", "Optimizer steps");
  flags.add<std::size_t>(recon, "--batch", "/specialize/batch", "Queries per step");
  flags.add<int>(recon, "--mc-res", "/mc_res", "Lattice nodes per axis");
  flags.add<double>(recon, "--bounds-inflate", "/bounds_inflate", "Lattice margin as a fraction of the extent");
  flags.flag(recon, "--prescale", "/prescale", "Normalize the cloud first and map the mesh back");
  flags.add<int>(recon, "--threads", "/threads", "Grid evaluation threads (0 = all cores)");
  flags.add<int>(recon, "--dim", "/dim", "Point dimension without a prior");
  flags.add<std::string>(recon, "--save-sdf", "/save_sdf", "Also write the specialized SDF checkpoint");
  flags.add<std::string>(recon, "--samples", "/samples", "Also write surface samples of the mesh (XYZ)");
  add_sampling_flags(recon, flags, "specialize");
  add_arch_flags(recon, flags);

  auto* eval = app.add_subcommand("evaluate", "Compare a mesh with a reference cloud or mesh");
  flags.add<std::string>(eval, "mesh", "/mesh", "Reconstructed mesh")->required();
  flags.add<std::string>(eval, "reference", "/reference", "Reference cloud or mesh")->required();
  flags.add<std::string>(eval, "-o,--output", "/output", "Report path (key=value; JSON alongside)");
  flags.add<double>(eval, "--fscore-threshold", "/metrics/fscore_threshold", "F-score threshold mu");
  flags.add<std::size_t>(eval, "--samples", "/metrics/sample_count", "Surface samples per mesh");

  auto* demo = app.add_subcommand("demo2d", "Circle prior specialized to a square");
  flags.add<std::string>(demo, "-o,--output-dir", "/output_dir", "Output directory");
  flags.add<std::string>(demo, "--prior", "/prior", "Reuse a 2-D prior instead of training one");
  flags.add<std::string>(demo, "--mode", "/specialize/mode", "Specialization mode");
  flags.add<int>(demo, "--epochs", "/train/epochs", "Prior epochs");
  flags.add<int>(demo, "--steps", "/specialize/steps", "Specialization steps");
  flags.add<int>(demo, "--contour-res", "/contour_res", "Lattice nodes per axis");
  flags.flag(demo, "--require-pass", "/require_pass", "Exit 3 unless both bounds hold");
  add_arch_flags(demo, flags);

  auto* gc = app.add_subcommand("grad-check", "Finite-difference check of the autodiff engine");
  flags.add<int>(gc, "--layers", "/layers", "Maximum layers per random network");
  flags.add<int>(gc, "--width", "/width", "Maximum hidden width");
  flags.add<int>(gc, "--instances", "/first_order_instances", "First-order instances");
  flags.add<int>(gc, "--double-instances", "/double_backprop_instances", "Double-backprop instances");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return PCP_ERR_USAGE;
  }

  pcp_set_log_level(quiet ? PCP_LOG_ERROR : verbose ? PCP_LOG_INFO : PCP_LOG_WARN);
  flags.finalize();
  if (!config_file.empty()) flags.options["config_file"] = config_file;

  const std::string command = app.get_subcommands().front()->get_name();
  pcp_session* session = nullptr;
  if (pcp_session_create(&session) != PCP_OK) {
    std::cerr << "error: " << pcp_last_error() << "\n";
    return PCP_ERR_INTERNAL;
  }
  int exit_code = 0;
  const pcp_status st = pcp_run(session, command.c_str(), flags.options.dump().c_str(), &exit_code);
  if (st != PCP_OK) {
    std::cerr << "error: " << pcp_last_error() << "\n";
    pcp_session_destroy(session);
    return st;
  }
  std::cout << pcp_session_report(session);
  pcp_session_destroy(session);
  return exit_code;
}
