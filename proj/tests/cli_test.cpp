// Drives the command-line tool end to end: exit codes, output files,
// manifests, option precedence and determinism.
#include <cstdlib>
#include <filesystem>
#include <random>
#include <string>
#include <sys/wait.h>

#include "doctest.h"
#include "json.hpp"
#include "pcp/io.hpp"
#include "support.hpp"

using namespace pcp;
namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args, const std::string& stdout_path = "") {
  const std::string out = stdout_path.empty() ? testing::temp_path("cli.out") : stdout_path;
  const std::string cmd = std::string(PCP_CLI_PATH) + " -q " + args + " > " + out + " 2> " + out + ".err";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / "pcp_tests" / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d.string();
}

const char* kTinyArch =
    "--cond-width 4 --implicit-hidden 16 --implicit-layers 5 --query-hidden 16 --query-layers 3";

std::string sphere_file(const std::string& d, double scale = 1.0, double shift = 0.0) {
  std::mt19937_64 rng(42);
  Matrix p = testing::sphere_points(400, 0.4, rng);
  p = (p.array() * scale + shift).matrix();
  const auto path = d + "/sphere.xyz";
  io::write_xyz(PointCloud(p), path);
  return path;
}

nlohmann::json read_json(const std::string& path) { return nlohmann::json::parse(io::read_file(path)); }

}  // namespace

TEST_CASE("usage errors exit with 1") {
  CHECK(run_cli("") == 1);
  CHECK(run_cli("frobnicate") == 1);
  CHECK(run_cli("reconstruct") == 1);
  CHECK(run_cli("grad-check --layers notanumber") == 1);
  const auto d = dir("usage");
  const auto cloud = sphere_file(d);
  // A prior is required outside no-prior mode.
  CHECK(run_cli("reconstruct " + cloud + " -o " + d + "/m.obj --mode full") == 1);
  CHECK(run_cli("reconstruct " + cloud + " -o " + d + "/m.stl --mode no-prior") == 1);
  CHECK(run_cli("reconstruct " + cloud + " -o " + d + "/m.obj --mode sideways") == 1);
  io::write_file(d + "/bad.json", R"({"specialize": {"seed": 3}})");
  CHECK(run_cli("--config " + d + "/bad.json reconstruct " + cloud + " --mode no-prior") == 1);
  io::write_file(d + "/unknown.json", R"({"colour": "blue"})");
  CHECK(run_cli("--config " + d + "/unknown.json grad-check") == 1);
}

TEST_CASE("data errors exit with 2") {
  const auto d = dir("data");
  CHECK(run_cli("reconstruct " + d + "/missing.xyz -o " + d + "/m.obj --mode no-prior") == 2);
  io::write_file(d + "/garbage.xyz", "1 2 three\n");
  CHECK(run_cli("reconstruct " + d + "/garbage.xyz -o " + d + "/m.obj --mode no-prior") == 2);
  io::write_file(d + "/fake.pcpr", "PCPR not really");
  CHECK(run_cli("reconstruct " + sphere_file(d) + " --prior " + d + "/fake.pcpr -o " + d + "/m.obj") == 2);
}

TEST_CASE("grad-check succeeds") {
  const auto out = testing::temp_path("gc.out");
  CHECK(run_cli("grad-check --instances 5 --double-instances 2", out) == 0);
  CHECK(io::read_file(out).find("PASS") != std::string::npos);
}

TEST_CASE("train, reconstruct and evaluate") {
  const auto d = dir("pipeline");
  const auto cloud = sphere_file(d);
  const std::string train = "--seed 5 train-prior " + cloud + " -o " + d + "/prior.pcpr --grid 2 --epochs 2 " +
                            "--queries-per-region 100 --k-sigma 5 " + kTinyArch;
  REQUIRE(run_cli(train) == 0);
  REQUIRE(fs::exists(d + "/prior.pcpr"));
  CHECK(io::read_file(d + "/prior.pcpr.loss.csv").rfind("step,loss\n", 0) == 0);
  const auto tm = read_json(d + "/prior.pcpr.manifest.json");
  CHECK(tm.at("command") == "train-prior");
  CHECK(tm.at("seed") == 5);
  CHECK(tm.at("config").at("grid") == 2);
  CHECK(tm.at("config").at("train").at("epochs") == 2);

  const std::string recon = "--seed 5 reconstruct " + cloud + " --prior " + d + "/prior.pcpr --steps 20 " +
                            "--batch 200 --k-sigma 5 --mc-res 24 --save-sdf " + d + "/sdf.pcpr -o " + d + "/mesh.obj";
  const auto report = testing::temp_path("recon.out");
  REQUIRE(run_cli(recon, report) == 0);
  CHECK(io::read_file(report).find("implicit_frozen=yes") != std::string::npos);
  const auto rm = read_json(d + "/mesh.obj.manifest.json");
  CHECK(rm.at("config").at("specialize").at("mode") == "full");
  CHECK(rm.at("config").at("prescale") == false);
  CHECK(rm.at("inputs").size() == 2);
  CHECK(fs::exists(d + "/sdf.pcpr"));

  SUBCASE("rerunning with the same seed is byte-identical") {
    const std::string first_prior = io::read_file(d + "/prior.pcpr");
    const std::string first_mesh = io::read_file(d + "/mesh.obj");
    REQUIRE(run_cli(train) == 0);
    REQUIRE(run_cli(recon) == 0);
    CHECK(io::read_file(d + "/prior.pcpr") == first_prior);
    CHECK(io::read_file(d + "/mesh.obj") == first_mesh);
  }
  SUBCASE("evaluate a mesh against itself") {
    const auto kv = d + "/metrics.txt";
    REQUIRE(run_cli("evaluate " + d + "/mesh.obj " + d + "/mesh.obj --samples 500 -o " + kv) == 0);
    const auto j = read_json(kv + ".json");
    CHECK(j.at("chamfer_l1").get<double>() == 0.0);
    CHECK(j.at("fscore_mu").get<double>() == 1.0);
    CHECK(fs::exists(kv + ".manifest.json"));
  }
}

TEST_CASE("flags override the config file") {
  const auto d = dir("precedence");
  const auto cloud = sphere_file(d);
  io::write_file(d + "/cfg.json", R"({"specialize": {"steps": 3, "batch": 50}, "mc_res": 16, "seed": 9})");
  const std::string base = "--config " + d + "/cfg.json reconstruct " + cloud + " --mode no-prior " + kTinyArch;
  REQUIRE(run_cli(base + " --steps 4 -o " + d + "/a.obj") == 0);
  const auto m = read_json(d + "/a.obj.manifest.json");
  CHECK(m.at("config").at("specialize").at("steps") == 4);
  CHECK(m.at("config").at("specialize").at("batch") == 50);
  CHECK(m.at("config").at("mc_res") == 16);
  CHECK(m.at("seed") == 9);
  REQUIRE(run_cli("--seed 10 " + base + " -o " + d + "/b.obj") == 0);
  CHECK(read_json(d + "/b.obj.manifest.json").at("seed") == 10);
}

TEST_CASE("pre-scale maps the mesh back to the input frame") {
  const auto d1 = dir("prescale1"), d2 = dir("prescale2");
  const std::string opts = " --mode no-prior --steps 30 --batch 200 --k-sigma 5 --mc-res 20 --prescale " +
                           std::string(kTinyArch);
  REQUIRE(run_cli("reconstruct " + sphere_file(d1) + opts + " -o " + d1 + "/m.obj") == 0);
  REQUIRE(run_cli("reconstruct " + sphere_file(d2, 8.0, 3.0) + opts + " -o " + d2 + "/m.obj") == 0);
  CHECK(read_json(d1 + "/m.obj.manifest.json").at("config").at("prescale") == true);
  const auto a = io::read_mesh(d1 + "/m.obj"), b = io::read_mesh(d2 + "/m.obj");
  REQUIRE_FALSE(a.empty());
  REQUIRE(a.vertices.size() == b.vertices.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < a.vertices.size(); ++i)
    worst = std::max(worst, (a.vertices[i] * 8.0 + Eigen::Vector3d::Constant(3.0) - b.vertices[i]).norm());
  CHECK(worst < 1e-3);
}

TEST_CASE("2-D reconstruction writes contours") {
  const auto d = dir("twod");
  Matrix p(100, 2);
  for (int i = 0; i < 100; ++i) p.row(i) << 0.4 * std::cos(0.0628 * i), 0.4 * std::sin(0.0628 * i);
  io::write_xyz(PointCloud(p), d + "/c.xyz");
  const std::string opts = " --mode no-prior --dim 2 --steps 10 --batch 100 --k-sigma 5 --mc-res 16 ";
  CHECK(run_cli("reconstruct " + d + "/c.xyz" + opts + "-o " + d + "/c.obj") == 1);
  REQUIRE(run_cli("reconstruct " + d + "/c.xyz" + opts + "-o " + d + "/c.txt") == 0);
  CHECK(fs::exists(d + "/c.txt"));
}
