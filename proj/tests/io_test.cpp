#include <cstring>
#include <filesystem>
#include <string>

#include "doctest.h"
#include "pcp/error.hpp"
#include "pcp/io.hpp"
#include "support.hpp"

using namespace pcp;

namespace {

nets::Arch tiny_arch() {
  nets::Arch a;
  a.dim = 2;
  a.cond_width = 3;
  a.encoder_hidden = {4};
  a.implicit_hidden = 5;
  a.implicit_layers = 3;
  a.implicit_skip = 1;
  a.query_hidden = 4;
  a.query_layers = 2;
  return a;
}

bool throws_data(const std::function<void()>& f, const std::string& needle = "") {
  try {
    f();
  } catch (const Error& e) {
    return e.kind() == ErrorKind::Data && std::string(e.what()).find(needle) != std::string::npos;
  }
  return false;
}

}  // namespace

TEST_CASE("XYZ parsing") {
  const auto c = io::parse_xyz("# header\n1 2 3\n\n4 5 6 0 0 1  # trailing normal ignored\n");
  REQUIRE(c.size() == 2);
  CHECK(c.points(1, 2) == 6.0);
  const auto c2 = io::parse_xyz("1 2\n3 4\n", 2);
  CHECK(c2.dim() == 2);
  CHECK(throws_data([] { io::parse_xyz("1 2\n", 3, "a.xyz"); }, "a.xyz: line 1"));
  CHECK(throws_data([] { io::parse_xyz("1 2 3\n4 x 6\n", 3, "b.xyz"); }, "line 2"));
  CHECK(throws_data([] { io::parse_xyz("# nothing\n"); }, "no points"));
  CHECK_THROWS_AS(io::parse_xyz("1 2 3 4\n", 4), Error);
}

TEST_CASE("PLY point clouds") {
  const std::string ply =
      "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\n"
      "property float nx\nproperty float ny\nproperty float nz\nend_header\n"
      "0 0 0 0 0 1\n1 2 3 1 0 0\n";
  const auto c = io::parse_ply_cloud(ply);
  REQUIRE(c.size() == 2);
  REQUIRE(c.normals);
  CHECK(c.points(1, 1) == 2.0);
  CHECK((*c.normals)(0, 2) == 1.0);
  CHECK(throws_data([] { io::parse_ply_cloud("ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\n"); }));
  const std::string noy = "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float z\nend_header\n1 2\n";
  CHECK(throws_data([&] { io::parse_ply_cloud(noy); }, "lacks property"));
}

TEST_CASE("mesh files") {
  TriangleMesh m;
  m.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 0.5, 0.25}};
  m.triangles = {{0, 1, 2}};
  SUBCASE("exact OBJ text") { CHECK(io::format_obj(m) == "v 0 0 0\nv 1 0 0\nv 0 0.5 0.25\nf 1 2 3\n"); }
  SUBCASE("round trips") {
    for (const char* name : {"rt.obj", "rt.ply"}) {
      const auto path = testing::temp_path(name);
      io::write_mesh(m, path);
      const auto back = io::read_mesh(path);
      REQUIRE(back.vertices.size() == 3);
      CHECK(back.triangles == m.triangles);
      for (int i = 0; i < 3; ++i) CHECK(back.vertices[i] == m.vertices[i]);
    }
  }
  SUBCASE("polygons, negative indices and slash forms") {
    const auto path = testing::temp_path("quad.obj");
    io::write_file(path, "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvn 0 0 1\nf 1//1 2//1 3//1 4//1\nf -4 -3 -1\n");
    const auto q = io::read_mesh(path);
    REQUIRE(q.triangles.size() == 3);
    CHECK(q.triangles[0] == std::array<int, 3>{0, 1, 2});
    CHECK(q.triangles[1] == std::array<int, 3>{0, 2, 3});
    CHECK(q.triangles[2] == std::array<int, 3>{0, 1, 3});
  }
  SUBCASE("empty mesh still writes a valid file") {
    const auto path = testing::temp_path("empty.ply");
    io::write_mesh(TriangleMesh{}, path);
    CHECK(io::read_mesh(path).vertices.empty());
    CHECK(io::format_obj(TriangleMesh{}).empty());
  }
  SUBCASE("bad inputs") {
    CHECK_THROWS_AS(io::mesh_format_for("mesh.stl"), Error);
    const auto path = testing::temp_path("bad.obj");
    io::write_file(path, "v 0 0 0\nf 1 2 3\n");
    CHECK(throws_data([&] { io::read_mesh(path); }));
    CHECK(throws_data([] { io::read_mesh(testing::temp_path("does-not-exist.obj")); }, "cannot open"));
  }
}

TEST_CASE("contour and loss files") {
  std::vector<Contour> cs(1);
  cs[0].points = {{0, 0}, {1, 0.5}};
  const auto path = testing::temp_path("c.txt");
  io::write_contours(cs, path);
  CHECK(io::read_file(path) == "contour 0 open 2\n0 0\n1 0.5\n");
  io::write_loss_history({{0, 1.5}, {1, 0.25}}, path);
  CHECK(io::read_file(path) == "step,loss\n0,1.5\n1,0.25\n");
}

TEST_CASE("checkpoints") {
  const auto prior = init_prior(tiny_arch(), 3);
  const auto path = testing::temp_path("p.pcpr");
  io::save_prior(prior, path);
  const std::string bytes = io::read_file(path);

  SUBCASE("layout") {
    CHECK(bytes.substr(0, 4) == "PCPR");
    std::uint32_t version;
    std::memcpy(&version, bytes.data() + 4, 4);
    CHECK(version == 1);
    const auto f = io::decode_checkpoint(bytes);
    CHECK(f.kind == "prior");
    CHECK(f.header.at("arch").at("cond_width") == 3);
    CHECK(f.directory.size() == prior.all_parameters().size());
  }
  SUBCASE("values round-trip through float32 and re-save bit-identically") {
    const auto back = io::load_prior(path);
    CHECK(back.arch == prior.arch);
    const auto a = prior.all_parameters(), b = back.all_parameters();
    for (std::size_t i = 0; i < a.size(); ++i) {
      const ad::Tensor want = a[i].var.value().cast<float>().cast<double>();
      CHECK(b[i].var.value() == want);
    }
    const auto path2 = testing::temp_path("p2.pcpr");
    io::save_prior(back, path2);
    CHECK(io::read_file(path2) == bytes);
  }
  SUBCASE("corruption is reported") {
    CHECK(throws_data([&] { io::decode_checkpoint(bytes.substr(0, bytes.size() - 4)); }, "payload shorter than directory"));
    std::string bumped = bytes;
    bumped[4] = 2;
    CHECK(throws_data([&] { io::decode_checkpoint(bumped); }, "unsupported checkpoint version 2"));
    CHECK(throws_data([&] { io::decode_checkpoint("PLY!" + bytes.substr(4)); }, "bad magic"));
    CHECK(throws_data([&] { io::decode_checkpoint(bytes.substr(0, 40)); }));
  }
  SUBCASE("kind mismatch") {
    CHECK(throws_data([&] { io::load_global_sdf(path); }, "expected 'global_sdf'"));
  }
  SUBCASE("specialized SDF with a fixed condition") {
    SpecializeConfig cfg;
    cfg.mode = SpecializeMode::FixedCond;
    cfg.fixed_condition = ad::Tensor::Constant(1, 3, 0.5);
    const auto g = init_global_sdf(prior, cfg);
    const auto gp = testing::temp_path("g.pcpr");
    io::save_global_sdf(g, cfg, gp);
    const auto back = io::load_global_sdf(gp);
    CHECK(back.mode == SpecializeMode::FixedCond);
    REQUIRE(back.fixed_condition);
    CHECK((*back.fixed_condition)(0, 2) == 0.5);
    Matrix q(2, 2);
    q << 0.1, 0.2, -0.3, 0.4;
    CHECK((back.eval(q) - g.eval(q)).cwiseAbs().maxCoeff() < 1e-5);
  }
}
