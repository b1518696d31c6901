#include "pcp/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <set>
#include <sstream>
#include <thread>

#include "pcp/error.hpp"
#include "pcp/io.hpp"
#include "pcp/log.hpp"
#include "pcp/metrics.hpp"

namespace pcp {

namespace fs = std::filesystem;

namespace {

// Sections whose seed comes from the single top-level "seed".
void drop_seed(Json& section) { section.erase("seed"); }

void reject_unknown(const std::string& command, const Json& resolved, const Json& defaults) {
  for (auto it = resolved.begin(); it != resolved.end(); ++it)
    if (!defaults.contains(it.key())) usage_error(command + ": unknown option '" + it.key() + "'");
}

void reject_section_seed(const std::string& command, const Json& j) {
  for (const char* s : {"train", "specialize", "metrics"})
    if (j.contains(s) && j[s].is_object() && j[s].contains("seed"))
      usage_error(command + ": '" + s + ".seed' is not configurable; use the top-level seed");
}

template <typename T>
T get(const Json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    usage_error(std::string("option '") + key + "': " + e.what());
  }
}

std::string sibling(const std::string& path, const std::string& suffix) { return path + suffix; }

struct Timer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  std::string started_at = utc_timestamp();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

int resolve_threads(const Json& o) {
  const int t = get<int>(o, "threads");
  if (t > 0) return t;
  return std::max(1u, std::thread::hardware_concurrency());
}

std::vector<std::string> expand_inputs(const std::vector<std::string>& inputs) {
  std::vector<std::string> files;
  for (const auto& in : inputs) {
    std::error_code ec;
    if (fs::is_directory(in, ec)) {
      std::vector<std::string> found;
      for (const auto& e : fs::directory_iterator(in)) {
        const auto ext = e.path().extension().string();
        if (e.is_regular_file() && (ext == ".xyz" || ext == ".ply" || ext == ".pts" || ext == ".txt"))
          found.push_back(e.path().string());
      }
      std::sort(found.begin(), found.end());
      files.insert(files.end(), found.begin(), found.end());
    } else {
      files.push_back(in);
    }
  }
  return files;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

// .ply files may hold either a cloud or a mesh; a non-empty face element
// makes it a mesh.
bool ply_has_faces(const std::string& path) {
  std::istringstream is(io::read_file(path));
  for (std::string line; std::getline(is, line);) {
    if (line.rfind("end_header", 0) == 0) break;
    std::istringstream ls(line);
    std::string kw, name;
    long long count = 0;
    if (ls >> kw >> name >> count && kw == "element" && name == "face" && count > 0) return true;
  }
  return false;
}

}  // namespace

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_manifest(const Manifest& m, const std::string& path) {
  Json j;
  j["command"] = m.command;
  j["version"] = kVersion;
  j["seed"] = m.seed;
  j["config"] = m.config;
  j["inputs"] = m.inputs;
  j["outputs"] = m.outputs;
  j["started_at"] = m.started_at;
  j["duration_seconds"] = m.duration_seconds;
  io::write_file(path, j.dump(2) + "\n");
}

Json default_options(const std::string& command) {
  Json o;
  o["seed"] = 0;
  if (command == "train-prior") {
    o["inputs"] = Json::array();
    o["output"] = "prior.pcpr";
    o["grid"] = 6;
    o["dim"] = 3;
    o["arch"] = to_json(nets::Arch{});
    o["train"] = to_json(TrainConfig{});
    drop_seed(o["train"]);
  } else if (command == "reconstruct") {
    o["input"] = "";
    o["prior"] = "";
    o["output"] = "mesh.obj";
    o["save_sdf"] = "";
    o["samples"] = "";
    o["dim"] = 3;
    o["mc_res"] = 128;
    o["bounds_inflate"] = 0.1;
    o["prescale"] = false;
    o["threads"] = 0;
    o["arch"] = to_json(nets::Arch{});
    o["specialize"] = to_json(SpecializeConfig{});
    drop_seed(o["specialize"]);
  } else if (command == "evaluate") {
    o["mesh"] = "";
    o["reference"] = "";
    o["output"] = "";
    o["metrics"] = to_json(MetricConfig{});
    drop_seed(o["metrics"]);
  } else if (command == "demo2d") {
    const Demo2dConfig d;
    o["output_dir"] = "demo2d";
    o["prior"] = "";
    o["circle_points"] = d.circle_points;
    o["circle_radius"] = d.circle_radius;
    o["prior_grid"] = d.prior_grid;
    o["square_points"] = d.square_points;
    o["square_side"] = d.square_side;
    o["eval_queries"] = d.eval_queries;
    o["contour_res"] = d.contour_res;
    o["pull_tolerance"] = d.pull_tolerance;
    o["pull_fraction"] = d.pull_fraction;
    o["contour_tolerance"] = d.contour_tolerance;
    o["require_pass"] = false;
    o["arch"] = to_json(d.arch);
    o["train"] = to_json(d.train);
    drop_seed(o["train"]);
    o["specialize"] = to_json(d.specialize);
    drop_seed(o["specialize"]);
  } else if (command == "grad-check") {
    const GradCheckConfig g;
    o["layers"] = g.max_layers;
    o["width"] = g.max_width;
    o["first_order_instances"] = g.first_order_instances;
    o["double_backprop_instances"] = g.double_backprop_instances;
    o["first_order_tol"] = g.first_order_tol;
    o["double_backprop_tol"] = g.double_backprop_tol;
  } else {
    usage_error("unknown command '" + command + "'");
  }
  return o;
}

Json resolve_options(const std::string& command, const Json& request) {
  if (!request.is_object()) usage_error(command + ": options must be a JSON object");
  Json resolved = default_options(command);
  Json flags = request;
  if (flags.contains("config_file")) {
    const auto path = get<std::string>(flags, "config_file");
    flags.erase("config_file");
    if (!path.empty()) {
      Json file = parse_json(io::read_file(path), "config file '" + path + "'");
      if (!file.is_object()) usage_error("config file '" + path + "' must hold a JSON object");
      reject_section_seed(command, file);
      reject_unknown(command, file, resolved);
      resolved.merge_patch(file);
    }
  }
  reject_section_seed(command, flags);
  reject_unknown(command, flags, resolved);
  resolved.merge_patch(flags);
  return resolved;
}

CommandResult run_command(const std::string& command, const Json& request) {
  const Json o = resolve_options(command, request);
  if (command == "train-prior") return cmd_train_prior(o);
  if (command == "reconstruct") return cmd_reconstruct(o);
  if (command == "evaluate") return cmd_evaluate(o);
  if (command == "demo2d") return cmd_demo2d(o);
  return cmd_grad_check(o);
}

// ---- train-prior --------------------------------------------------------------

CommandResult cmd_train_prior(const Json& o) {
  Timer timer;
  const auto seed = get<std::uint64_t>(o, "seed");
  nets::Arch arch;
  apply_json(o.at("arch"), arch);
  arch.dim = get<int>(o, "dim");
  arch.validate();
  TrainConfig cfg;
  apply_json(o.at("train"), cfg);
  cfg.seed = seed;
  const int grid = get<int>(o, "grid");
  if (grid < 1) usage_error("train-prior: grid must be >= 1");
  const auto output = get<std::string>(o, "output");
  if (output.empty()) usage_error("train-prior: output path required");

  const auto files = expand_inputs(get<std::vector<std::string>>(o, "inputs"));
  if (files.empty()) data_error("train-prior: no input point clouds");
  std::vector<LocalRegion> regions;
  for (const auto& f : files) {
    const PointCloud cloud = io::read_pointcloud(f, arch.dim);
    auto r = build_local_regions(cloud, grid);
    log::info("train-prior: ", f, ": ", cloud.size(), " points, ", r.size(), " regions");
    regions.insert(regions.end(), std::make_move_iterator(r.begin()), std::make_move_iterator(r.end()));
  }
  if (regions.empty()) data_error("train-prior: input clouds produced no usable regions");

  const PriorCheckpoint ck = train_local_prior(regions, arch, cfg, [&](int epoch, double loss) {
    log::info("train-prior: epoch ", epoch, " mean loss ", loss);
  });

  CommandResult res;
  io::save_prior(ck, output);
  const auto loss_path = sibling(output, ".loss.csv");
  io::write_loss_history(ck.loss_history, loss_path);
  res.outputs = {output, loss_path};
  const auto manifest_path = sibling(output, ".manifest.json");
  write_manifest({"train-prior", o, seed, files, res.outputs, timer.seconds(), timer.started_at}, manifest_path);
  res.outputs.push_back(manifest_path);

  res.report += "clouds=" + std::to_string(files.size()) + "\n";
  res.report += "regions=" + std::to_string(regions.size()) + "\n";
  res.report += "epochs=" + std::to_string(cfg.epochs) + "\n";
  if (!ck.epoch_loss.empty()) {
    res.report += "first_epoch_loss=" + fmt(ck.epoch_loss.front()) + "\n";
    res.report += "final_epoch_loss=" + fmt(ck.epoch_loss.back()) + "\n";
  }
  res.report += "checkpoint=" + output + "\n";
  return res;
}

// ---- reconstruct --------------------------------------------------------------

CommandResult cmd_reconstruct(const Json& o) {
  Timer timer;
  const auto seed = get<std::uint64_t>(o, "seed");
  const auto input = get<std::string>(o, "input");
  const auto prior_path = get<std::string>(o, "prior");
  const auto output = get<std::string>(o, "output");
  if (input.empty()) usage_error("reconstruct: input cloud required");
  if (output.empty()) usage_error("reconstruct: output path required");
  SpecializeConfig cfg;
  apply_json(o.at("specialize"), cfg);
  cfg.seed = seed;
  const int mc_res = get<int>(o, "mc_res");
  if (mc_res < 2) usage_error("reconstruct: mc_res must be >= 2");
  const double inflate = get<double>(o, "bounds_inflate");
  if (!(inflate >= 0.0)) usage_error("reconstruct: bounds_inflate must be >= 0");

  PriorCheckpoint prior;
  std::vector<std::string> inputs = {input};
  if (!prior_path.empty()) {
    prior = io::load_prior(prior_path);
    inputs.push_back(prior_path);
  } else if (cfg.mode == SpecializeMode::NoPrior) {
    nets::Arch arch;
    apply_json(o.at("arch"), arch);
    arch.dim = get<int>(o, "dim");
    prior = init_prior(arch, seed);
  } else {
    usage_error("reconstruct: --prior is required for mode " + to_string(cfg.mode));
  }
  const int dim = prior.arch.dim;
  if (dim == 2) {
    const auto ext = output.substr(output.find_last_of('.') + 1);
    if (ext == "obj" || ext == "ply") usage_error("reconstruct: 2-D output is a contour file, not a mesh");
  } else {
    io::mesh_format_for(output);
  }

  PointCloud cloud = io::read_pointcloud(input, dim);
  // Optional pre-scale: work in the normalized frame, map outputs back.
  const bool prescale = get<bool>(o, "prescale");
  Vector center = Vector::Zero(dim);
  double scale = 1.0;
  if (prescale) {
    const LocalRegion frame = normalize_region(cloud.points);
    center = frame.center;
    scale = frame.scale;
    cloud = PointCloud(frame.points);
  }
  const auto to_world = [&](const Eigen::VectorXd& p) -> Eigen::VectorXd { return p * scale + center; };
  if (cfg.mode == SpecializeMode::FixedCond) cfg.fixed_condition = cloud_condition(prior, cloud);
  const GlobalSdf g = specialize(cloud, prior, cfg, [](int step, double loss) {
    if (step % 100 == 0) log::info("reconstruct: step ", step, " loss ", loss);
  });

  const Bounds bounds = default_bounds(cloud, inflate);
  const SdfGrid grid = eval_sdf_grid(g, bounds, std::vector<int>(dim, mc_res), resolve_threads(o));
  const Vector at_points = g.eval(cloud.points);
  const double mean_abs = at_points.cwiseAbs().mean() * scale;

  CommandResult res;
  res.outputs.push_back(output);
  if (dim == 3) {
    TriangleMesh mesh = marching_cubes(grid);
    for (auto& v : mesh.vertices) v = to_world(v);
    io::write_mesh(mesh, output);
    res.report += "vertices=" + std::to_string(mesh.vertices.size()) + "\n";
    res.report += "triangles=" + std::to_string(mesh.triangles.size()) + "\n";
    const auto samples = get<std::string>(o, "samples");
    if (!samples.empty() && !mesh.empty()) {
      const auto s = sample_mesh_surface(mesh, MetricConfig{}.sample_count, seed);
      io::write_xyz(PointCloud(s.points, s.normals), samples);
      res.outputs.push_back(samples);
    }
  } else {
    auto contours = marching_squares(grid, 0.0, ScalarField([&g](const Matrix& q) { return g.eval(q); }));
    for (auto& c : contours)
      for (auto& p : c.points) p = to_world(p);
    io::write_contours(contours, output);
    res.report += "contours=" + std::to_string(contours.size()) + "\n";
  }
  const auto save_sdf = get<std::string>(o, "save_sdf");
  if (!save_sdf.empty()) {
    io::save_global_sdf(g, cfg, save_sdf);
    res.outputs.push_back(save_sdf);
  }
  const auto loss_path = sibling(output, ".loss.csv");
  io::write_loss_history(g.loss_history, loss_path);
  res.outputs.push_back(loss_path);
  const auto manifest_path = sibling(output, ".manifest.json");
  write_manifest({"reconstruct", o, seed, inputs, res.outputs, timer.seconds(), timer.started_at}, manifest_path);
  res.outputs.push_back(manifest_path);

  res.report += "mode=" + to_string(cfg.mode) + "\n";
  res.report += "steps=" + std::to_string(cfg.steps) + "\n";
  if (!g.loss_history.empty()) res.report += "final_loss=" + fmt(g.loss_history.back().loss) + "\n";
  res.report += "mean_abs_sdf_at_points=" + fmt(mean_abs) + "\n";
  if (prescale) res.report += "prescale_scale=" + fmt(scale) + "\n";
  if (freezes_implicit(cfg.mode))
    res.report += std::string("implicit_frozen=") +
                  (g.implicit_checksum_before == g.implicit_checksum_after ? "yes" : "no") + "\n";
  res.report += "output=" + output + "\n";
  return res;
}

// ---- evaluate -----------------------------------------------------------------

CommandResult cmd_evaluate(const Json& o) {
  Timer timer;
  const auto seed = get<std::uint64_t>(o, "seed");
  MetricConfig cfg;
  apply_json(o.at("metrics"), cfg);
  cfg.seed = seed;
  const auto mesh_path = get<std::string>(o, "mesh");
  const auto ref_path = get<std::string>(o, "reference");
  if (mesh_path.empty() || ref_path.empty()) usage_error("evaluate: --mesh and --reference are required");

  const TriangleMesh mesh = io::read_mesh(mesh_path);
  if (mesh.empty()) data_error("evaluate: mesh '" + mesh_path + "' has no triangles");
  const auto ext = ref_path.substr(ref_path.find_last_of('.') + 1);
  const bool ref_is_mesh = ext == "obj" || (ext == "ply" && ply_has_faces(ref_path));
  MetricReport report;
  std::string notice;
  if (ref_is_mesh) {
    report = evaluate(mesh, io::read_mesh(ref_path), cfg);
  } else {
    const PointCloud ref = io::read_pointcloud(ref_path, 3);
    if (!ref.normals) notice = "reference has no normals; normal consistency omitted\n";
    report = evaluate(mesh, ref, cfg);
  }

  CommandResult res;
  res.report = report.to_kv();
  if (!notice.empty()) res.report += "# " + notice;
  const auto output = get<std::string>(o, "output");
  if (!output.empty()) {
    io::write_file(output, report.to_kv());
    const auto json_path = sibling(output, ".json");
    io::write_file(json_path, report.to_json());
    res.outputs = {output, json_path};
    const auto manifest_path = sibling(output, ".manifest.json");
    write_manifest({"evaluate", o, seed, {mesh_path, ref_path}, res.outputs, timer.seconds(), timer.started_at},
                   manifest_path);
    res.outputs.push_back(manifest_path);
  }
  return res;
}

// ---- demo2d ---------------------------------------------------------------------

CommandResult cmd_demo2d(const Json& o) {
  Timer timer;
  Demo2dConfig d;
  d.seed = get<std::uint64_t>(o, "seed");
  apply_json(o.at("arch"), d.arch);
  d.arch.dim = 2;
  apply_json(o.at("train"), d.train);
  apply_json(o.at("specialize"), d.specialize);
  d.circle_points = get<std::size_t>(o, "circle_points");
  d.circle_radius = get<double>(o, "circle_radius");
  d.prior_grid = get<int>(o, "prior_grid");
  d.square_points = get<std::size_t>(o, "square_points");
  d.square_side = get<double>(o, "square_side");
  d.eval_queries = get<std::size_t>(o, "eval_queries");
  d.contour_res = get<int>(o, "contour_res");
  d.pull_tolerance = get<double>(o, "pull_tolerance");
  d.pull_fraction = get<double>(o, "pull_fraction");
  d.contour_tolerance = get<double>(o, "contour_tolerance");
  const auto dir = get<std::string>(o, "output_dir");
  if (dir.empty()) usage_error("demo2d: output_dir required");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) data_error("demo2d: cannot create '" + dir + "': " + ec.message());
  const auto path = [&dir](const char* name) { return (fs::path(dir) / name).string(); };

  CommandResult res;
  std::vector<std::string> inputs;
  PriorCheckpoint prior;
  const auto prior_path = get<std::string>(o, "prior");
  if (!prior_path.empty()) {
    prior = io::load_prior(prior_path);
    if (prior.arch.dim != 2) usage_error("demo2d: prior must be 2-D");
    inputs.push_back(prior_path);
  } else {
    prior = demo2d_prior(d);
    io::save_prior(prior, path("prior.pcpr"));
    io::write_loss_history(prior.loss_history, path("prior.loss.csv"));
    res.outputs.push_back(path("prior.pcpr"));
    res.outputs.push_back(path("prior.loss.csv"));
  }

  const Demo2dResult r = demo2d_specialize(prior, d);
  io::write_file(path("transport.csv"), transport_table(r.transport));
  std::string pulled = "px,py,distance\n";
  for (const auto& t : r.transport)
    pulled += io::fmt_g9(t.pulled.x()) + ',' + io::fmt_g9(t.pulled.y()) + ',' +
              io::fmt_g9(square_boundary_distance(t.pulled, d.square_side)) + '\n';
  io::write_file(path("pulled.csv"), pulled);
  io::write_contours(r.contours, path("contour.txt"));
  io::write_loss_history(r.specialize_history, path("specialize.loss.csv"));
  std::string summary;
  summary += "mode=" + to_string(d.specialize.mode) + "\n";
  summary += "pulled_within_fraction=" + io::fmt_g9(r.pulled_within_fraction) + "\n";
  summary += "pulled_tolerance=" + io::fmt_g9(d.pull_tolerance) + "\n";
  summary += std::string("pulled_pass=") + (r.pulled_pass ? "PASS" : "FAIL") + "\n";
  summary += "contour_chamfer_l1=" + io::fmt_g9(r.contour_chamfer_l1) + "\n";
  summary += std::string("contour_pass=") + (r.contour_pass ? "PASS" : "FAIL") + "\n";
  summary += "contours=" + std::to_string(r.contours.size()) + "\n";
  if (freezes_implicit(d.specialize.mode))
    summary += std::string("implicit_frozen=") + (r.implicit_frozen ? "yes" : "no") + "\n";
  io::write_file(path("summary.txt"), summary);
  for (const char* f : {"transport.csv", "pulled.csv", "contour.txt", "specialize.loss.csv", "summary.txt"})
    res.outputs.push_back(path(f));
  write_manifest({"demo2d", o, d.seed, inputs, res.outputs, timer.seconds(), timer.started_at},
                 path("manifest.json"));
  res.outputs.push_back(path("manifest.json"));
  res.report = summary;
  if (get<bool>(o, "require_pass") && !(r.pulled_pass && r.contour_pass)) res.exit_code = 3;
  return res;
}

// ---- grad-check -----------------------------------------------------------------

CommandResult cmd_grad_check(const Json& o) {
  GradCheckConfig g;
  g.seed = get<std::uint64_t>(o, "seed");
  g.max_layers = get<int>(o, "layers");
  g.max_width = get<int>(o, "width");
  g.first_order_instances = get<int>(o, "first_order_instances");
  g.double_backprop_instances = get<int>(o, "double_backprop_instances");
  g.first_order_tol = get<double>(o, "first_order_tol");
  g.double_backprop_tol = get<double>(o, "double_backprop_tol");
  const GradCheckReport r = run_grad_check(g);
  CommandResult res;
  std::ostringstream os;
  os.precision(3);
  os << std::scientific;
  os << "first_order_instances=" << g.first_order_instances << "\n";
  os << "first_order_max_rel_error=" << r.first_order_max_rel << "\n";
  os << "first_order_failures=" << r.first_order_failures << "\n";
  os << "double_backprop_instances=" << g.double_backprop_instances << "\n";
  os << "double_backprop_max_rel_error=" << r.double_backprop_max_rel << "\n";
  os << "double_backprop_failures=" << r.double_backprop_failures << "\n";
  os << "result=" << (r.passed() ? "PASS" : "FAIL") << "\n";
  res.report = os.str();
  res.exit_code = r.passed() ? 0 : 3;
  return res;
}

}  // namespace pcp
