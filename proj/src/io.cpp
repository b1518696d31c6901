#include "pcp/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "pcp/error.hpp"
#include "pcp/log.hpp"
#include "pcp/random.hpp"

namespace pcp::io {

namespace {

std::string lower_ext(const std::string& path) {
  const auto dot = path.find_last_of('.');
  const auto slash = path.find_last_of('/');
  if (dot == std::string::npos || (slash != std::string::npos && dot < slash)) return "";
  std::string e = path.substr(dot + 1);
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return e;
}

std::vector<std::string> split_ws(const std::string& line) {
  std::istringstream is(line);
  std::vector<std::string> out;
  for (std::string t; is >> t;) out.push_back(t);
  return out;
}

bool parse_double(const std::string& token, double& out) {
  const char* begin = token.c_str();
  char* end = nullptr;
  out = std::strtod(begin, &end);
  return end != begin && *end == '\0' && std::isfinite(out);
}

bool parse_int(const std::string& token, long long& out) {
  const char* begin = token.c_str();
  char* end = nullptr;
  out = std::strtoll(begin, &end, 10);
  return end != begin && *end == '\0';
}

[[noreturn]] void malformed(const std::string& source, std::size_t line, const std::string& why) {
  data_error(source + ": line " + std::to_string(line) + ": " + why);
}

void check_dim(int dim) {
  if (dim != 2 && dim != 3) usage_error("point cloud dimension must be 2 or 3");
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xFF));
}
void put_u64(std::string& out, std::uint64_t v) {
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xFF));
}
std::uint32_t get_u32(const std::string& in, std::size_t at) {
  std::uint32_t v = 0;
  for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + b])) << (8 * b);
  return v;
}
std::uint64_t get_u64(const std::string& in, std::size_t at) {
  std::uint64_t v = 0;
  for (int b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[at + b])) << (8 * b);
  return v;
}

}  // namespace

std::string fmt_g9(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) data_error("cannot open '" + path + "' for reading");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) data_error("cannot open '" + path + "' for writing");
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) data_error("write to '" + path + "' failed");
}

// ---- point clouds ---------------------------------------------------------

PointCloud parse_xyz(const std::string& text, int dim, const std::string& source) {
  check_dim(dim);
  std::vector<double> vals;
  std::istringstream is(text);
  std::size_t lineno = 0;
  for (std::string line; std::getline(is, line);) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const auto tok = split_ws(line);
    if (tok.empty()) continue;
    if (tok.size() < static_cast<std::size_t>(dim))
      malformed(source, lineno, "expected " + std::to_string(dim) + " coordinates");
    for (int a = 0; a < dim; ++a) {
      double v;
      if (!parse_double(tok[a], v)) malformed(source, lineno, "cannot parse '" + tok[a] + "' as a number");
      vals.push_back(v);
    }
  }
  if (vals.empty()) data_error(source + ": no points");
  const auto n = static_cast<Eigen::Index>(vals.size() / dim);
  Matrix pts = Eigen::Map<Matrix>(vals.data(), n, dim);
  return PointCloud(std::move(pts));
}

PointCloud parse_ply_cloud(const std::string& text, int dim, const std::string& source) {
  check_dim(dim);
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  auto next = [&]() {
    if (!std::getline(is, line)) data_error(source + ": unexpected end of PLY file");
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
  };
  next();
  if (line != "ply") malformed(source, lineno, "missing 'ply' magic");

  struct Element {
    std::string name;
    long long count = 0;
    std::vector<std::string> props;
    bool has_list = false;
  };
  std::vector<Element> elements;
  for (;;) {
    next();
    const auto tok = split_ws(line);
    if (tok.empty() || tok[0] == "comment" || tok[0] == "obj_info") continue;
    if (tok[0] == "end_header") break;
    if (tok[0] == "format") {
      if (tok.size() < 2 || tok[1] != "ascii") malformed(source, lineno, "only ASCII PLY is supported");
    } else if (tok[0] == "element") {
      long long c;
      if (tok.size() != 3 || !parse_int(tok[2], c) || c < 0) malformed(source, lineno, "bad element line");
      elements.push_back({tok[1], c, {}, false});
    } else if (tok[0] == "property") {
      if (elements.empty() || tok.size() < 3) malformed(source, lineno, "property outside an element");
      if (tok[1] == "list") elements.back().has_list = true;
      elements.back().props.push_back(tok.back());
    } else {
      malformed(source, lineno, "unknown header keyword '" + tok[0] + "'");
    }
  }

  static const char* kAxes[] = {"x", "y", "z"};
  static const char* kNormals[] = {"nx", "ny", "nz"};
  Matrix pts, nrm;
  bool have_normals = false;
  bool found = false;
  for (const auto& el : elements) {
    if (el.name != "vertex") {
      for (long long r = 0; r < el.count; ++r) next();
      continue;
    }
    found = true;
    std::vector<int> col(dim, -1), ncol(dim, -1);
    for (int a = 0; a < dim; ++a) {
      for (std::size_t p = 0; p < el.props.size(); ++p) {
        if (el.props[p] == kAxes[a]) col[a] = static_cast<int>(p);
        if (el.props[p] == kNormals[a]) ncol[a] = static_cast<int>(p);
      }
      if (col[a] < 0) data_error(source + ": vertex element lacks property '" + kAxes[a] + "'");
    }
    have_normals = std::all_of(ncol.begin(), ncol.end(), [](int c) { return c >= 0; });
    pts.resize(el.count, dim);
    if (have_normals) nrm.resize(el.count, dim);
    for (long long r = 0; r < el.count; ++r) {
      next();
      const auto tok = split_ws(line);
      if (tok.size() < el.props.size()) malformed(source, lineno, "too few vertex properties");
      for (int a = 0; a < dim; ++a) {
        double v;
        if (!parse_double(tok[col[a]], v)) malformed(source, lineno, "cannot parse '" + tok[col[a]] + "'");
        pts(r, a) = v;
        if (have_normals) {
          if (!parse_double(tok[ncol[a]], v)) malformed(source, lineno, "cannot parse '" + tok[ncol[a]] + "'");
          nrm(r, a) = v;
        }
      }
    }
    break;
  }
  if (!found || pts.rows() == 0) data_error(source + ": no points");
  return PointCloud(std::move(pts), have_normals ? std::optional<Matrix>(std::move(nrm)) : std::nullopt);
}

PointCloud read_pointcloud(const std::string& path, int dim) {
  const std::string text = read_file(path);
  PointCloud c = lower_ext(path) == "ply" ? parse_ply_cloud(text, dim, path) : parse_xyz(text, dim, path);
  validate_cloud(c);
  return c;
}

void write_xyz(const PointCloud& cloud, const std::string& path) {
  std::string out;
  for (Eigen::Index i = 0; i < cloud.points.rows(); ++i) {
    for (Eigen::Index a = 0; a < cloud.points.cols(); ++a) {
      if (a) out += ' ';
      out += fmt_g9(cloud.points(i, a));
    }
    if (cloud.normals)
      for (Eigen::Index a = 0; a < cloud.normals->cols(); ++a) out += ' ' + fmt_g9((*cloud.normals)(i, a));
    out += '\n';
  }
  write_file(path, out);
}

// ---- meshes -----------------------------------------------------------------

MeshFormat mesh_format_for(const std::string& path) {
  const auto e = lower_ext(path);
  if (e == "obj") return MeshFormat::Obj;
  if (e == "ply") return MeshFormat::Ply;
  usage_error("mesh path '" + path + "' must end in .obj or .ply");
}

std::string format_obj(const TriangleMesh& mesh) {
  std::string out;
  for (const auto& v : mesh.vertices) out += "v " + fmt_g9(v.x()) + ' ' + fmt_g9(v.y()) + ' ' + fmt_g9(v.z()) + '\n';
  for (const auto& n : mesh.normals) out += "vn " + fmt_g9(n.x()) + ' ' + fmt_g9(n.y()) + ' ' + fmt_g9(n.z()) + '\n';
  const bool with_normals = !mesh.normals.empty();
  for (const auto& t : mesh.triangles) {
    out += 'f';
    for (int v : t) {
      const auto id = std::to_string(v + 1);
      out += ' ' + (with_normals ? id + "//" + id : id);
    }
    out += '\n';
  }
  return out;
}

std::string format_ply(const TriangleMesh& mesh) {
  const bool with_normals = !mesh.normals.empty();
  std::string out = "ply\nformat ascii 1.0\n";
  out += "element vertex " + std::to_string(mesh.vertices.size()) + "\n";
  out += "property double x\nproperty double y\nproperty double z\n";
  if (with_normals) out += "property double nx\nproperty double ny\nproperty double nz\n";
  out += "element face " + std::to_string(mesh.triangles.size()) + "\n";
  out += "property list uchar int vertex_indices\nend_header\n";
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    const auto& v = mesh.vertices[i];
    out += fmt_g9(v.x()) + ' ' + fmt_g9(v.y()) + ' ' + fmt_g9(v.z());
    if (with_normals) {
      const auto& n = mesh.normals[i];
      out += ' ' + fmt_g9(n.x()) + ' ' + fmt_g9(n.y()) + ' ' + fmt_g9(n.z());
    }
    out += '\n';
  }
  for (const auto& t : mesh.triangles)
    out += "3 " + std::to_string(t[0]) + ' ' + std::to_string(t[1]) + ' ' + std::to_string(t[2]) + '\n';
  return out;
}

void write_mesh(const TriangleMesh& mesh, const std::string& path, MeshFormat format) {
  if (!mesh.normals.empty() && mesh.normals.size() != mesh.vertices.size())
    usage_error("write_mesh: normal count differs from vertex count");
  const int nv = static_cast<int>(mesh.vertices.size());
  for (const auto& t : mesh.triangles)
    for (int v : t)
      if (v < 0 || v >= nv) usage_error("write_mesh: triangle index out of range");
  if (mesh.empty()) log::warn("write_mesh: writing empty mesh to '", path, "'");
  write_file(path, format == MeshFormat::Obj ? format_obj(mesh) : format_ply(mesh));
}

void write_mesh(const TriangleMesh& mesh, const std::string& path) { write_mesh(mesh, path, mesh_format_for(path)); }

namespace {

TriangleMesh parse_obj(const std::string& text, const std::string& source) {
  TriangleMesh m;
  std::istringstream is(text);
  std::size_t lineno = 0;
  std::vector<std::array<int, 3>> pending;
  std::vector<std::size_t> pending_line;
  for (std::string line; std::getline(is, line);) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const auto tok = split_ws(line);
    if (tok.empty()) continue;
    if (tok[0] == "v") {
      if (tok.size() < 4) malformed(source, lineno, "vertex needs 3 coordinates");
      Eigen::Vector3d v;
      for (int a = 0; a < 3; ++a)
        if (!parse_double(tok[1 + a], v[a])) malformed(source, lineno, "cannot parse '" + tok[1 + a] + "'");
      m.vertices.push_back(v);
    } else if (tok[0] == "f") {
      if (tok.size() < 4) malformed(source, lineno, "face needs at least 3 vertices");
      std::vector<int> ids;
      for (std::size_t k = 1; k < tok.size(); ++k) {
        long long id;
        if (!parse_int(tok[k].substr(0, tok[k].find('/')), id) || id == 0)
          malformed(source, lineno, "bad face index '" + tok[k] + "'");
        // Negative indices count back from the latest vertex.
        ids.push_back(static_cast<int>(id > 0 ? id - 1 : static_cast<long long>(m.vertices.size()) + id));
      }
      for (std::size_t k = 1; k + 1 < ids.size(); ++k) {
        pending.push_back({ids[0], ids[k], ids[k + 1]});
        pending_line.push_back(lineno);
      }
    }
  }
  const int nv = static_cast<int>(m.vertices.size());
  for (std::size_t t = 0; t < pending.size(); ++t)
    for (int v : pending[t])
      if (v < 0 || v >= nv) malformed(source, pending_line[t], "face index out of range");
  m.triangles = std::move(pending);
  return m;
}

TriangleMesh parse_ply_mesh(const std::string& text, const std::string& source) {
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  auto next = [&]() {
    if (!std::getline(is, line)) data_error(source + ": unexpected end of PLY file");
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
  };
  next();
  if (line != "ply") malformed(source, lineno, "missing 'ply' magic");
  struct Element {
    std::string name;
    long long count = 0;
    std::vector<std::string> props;
  };
  std::vector<Element> elements;
  for (;;) {
    next();
    const auto tok = split_ws(line);
    if (tok.empty() || tok[0] == "comment" || tok[0] == "obj_info") continue;
    if (tok[0] == "end_header") break;
    if (tok[0] == "format") {
      if (tok.size() < 2 || tok[1] != "ascii") malformed(source, lineno, "only ASCII PLY is supported");
    } else if (tok[0] == "element") {
      long long c;
      if (tok.size() != 3 || !parse_int(tok[2], c) || c < 0) malformed(source, lineno, "bad element line");
      elements.push_back({tok[1], c, {}});
    } else if (tok[0] == "property") {
      if (elements.empty() || tok.size() < 3) malformed(source, lineno, "property outside an element");
      elements.back().props.push_back(tok.back());
    }
  }
  TriangleMesh m;
  for (const auto& el : elements) {
    if (el.name == "vertex") {
      int col[3] = {-1, -1, -1};
      static const char* kAxes[] = {"x", "y", "z"};
      for (int a = 0; a < 3; ++a)
        for (std::size_t p = 0; p < el.props.size(); ++p)
          if (el.props[p] == kAxes[a]) col[a] = static_cast<int>(p);
      if (col[0] < 0 || col[1] < 0 || col[2] < 0) data_error(source + ": vertex element lacks x/y/z");
      for (long long r = 0; r < el.count; ++r) {
        next();
        const auto tok = split_ws(line);
        if (tok.size() < el.props.size()) malformed(source, lineno, "too few vertex properties");
        Eigen::Vector3d v;
        for (int a = 0; a < 3; ++a)
          if (!parse_double(tok[col[a]], v[a])) malformed(source, lineno, "cannot parse '" + tok[col[a]] + "'");
        m.vertices.push_back(v);
      }
    } else if (el.name == "face") {
      for (long long r = 0; r < el.count; ++r) {
        next();
        const auto tok = split_ws(line);
        long long n;
        if (tok.empty() || !parse_int(tok[0], n) || n < 3 || tok.size() < static_cast<std::size_t>(n + 1))
          malformed(source, lineno, "bad face");
        std::vector<int> ids;
        for (long long k = 1; k <= n; ++k) {
          long long id;
          if (!parse_int(tok[k], id) || id < 0 || id >= static_cast<long long>(m.vertices.size()))
            malformed(source, lineno, "face index out of range");
          ids.push_back(static_cast<int>(id));
        }
        for (std::size_t k = 1; k + 1 < ids.size(); ++k) m.triangles.push_back({ids[0], ids[k], ids[k + 1]});
      }
    } else {
      for (long long r = 0; r < el.count; ++r) next();
    }
  }
  return m;
}

}  // namespace

TriangleMesh read_mesh(const std::string& path) {
  const std::string text = read_file(path);
  return mesh_format_for(path) == MeshFormat::Obj ? parse_obj(text, path) : parse_ply_mesh(text, path);
}

void write_contours(const std::vector<Contour>& contours, const std::string& path) {
  std::string out;
  for (std::size_t i = 0; i < contours.size(); ++i) {
    const auto& c = contours[i];
    out += "contour " + std::to_string(i) + (c.closed ? " closed " : " open ") + std::to_string(c.points.size()) + '\n';
    for (const auto& p : c.points) out += fmt_g9(p.x()) + ' ' + fmt_g9(p.y()) + '\n';
  }
  write_file(path, out);
}

void write_loss_history(const std::vector<LossRecord>& history, const std::string& path) {
  std::string out = "step,loss\n";
  for (const auto& r : history) out += std::to_string(r.step) + ',' + fmt_g9(r.loss) + '\n';
  write_file(path, out);
}

// ---- checkpoints ------------------------------------------------------------

const ad::Tensor& CheckpointFile::tensor(const std::string& name) const {
  for (std::size_t i = 0; i < directory.size(); ++i)
    if (directory[i].name == name) return tensors[i];
  data_error("checkpoint has no tensor '" + name + "'");
}

std::string encode_checkpoint(const std::string& kind, Json header_fields,
                              const std::vector<std::pair<std::string, ad::Tensor>>& tensors) {
  Json header;
  header["kind"] = kind;
  for (auto it = header_fields.begin(); it != header_fields.end(); ++it) header[it.key()] = it.value();
  Json dir = Json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : tensors) {
    const std::uint64_t bytes = static_cast<std::uint64_t>(t.size()) * 4;
    dir.push_back(Json{{"name", name}, {"shape", {t.rows(), t.cols()}}, {"offset", offset}, {"bytes", bytes}});
    offset += bytes;
  }
  header["tensors"] = dir;
  const std::string text = header.dump(1);

  std::string out(kCheckpointMagic, 4);
  put_u32(out, kCheckpointVersion);
  put_u64(out, text.size());
  out += text;
  out.reserve(out.size() + offset);
  for (const auto& [name, t] : tensors)
    for (Eigen::Index i = 0; i < t.size(); ++i) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(t.data()[i])));
  return out;
}

CheckpointFile decode_checkpoint(const std::string& bytes, const std::string& source) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0)
    data_error(source + ": not a checkpoint (bad magic)");
  const auto version = get_u32(bytes, 4);
  if (version != kCheckpointVersion)
    data_error(source + ": unsupported checkpoint version " + std::to_string(version) + " (expected " +
               std::to_string(kCheckpointVersion) + ")");
  const auto header_len = get_u64(bytes, 8);
  if (header_len > bytes.size() - 16) data_error(source + ": header extends past end of file");

  CheckpointFile f;
  try {
    f.header = Json::parse(bytes.substr(16, header_len));
    f.kind = f.header.at("kind").get<std::string>();
    for (const auto& e : f.header.at("tensors")) {
      TensorEntry t;
      t.name = e.at("name").get<std::string>();
      t.rows = e.at("shape").at(0).get<std::int64_t>();
      t.cols = e.at("shape").at(1).get<std::int64_t>();
      t.offset = e.at("offset").get<std::uint64_t>();
      t.bytes = e.at("bytes").get<std::uint64_t>();
      f.directory.push_back(t);
    }
  } catch (const nlohmann::json::exception& e) {
    data_error(source + ": corrupt checkpoint header: " + e.what());
  }

  const std::size_t payload_at = 16 + header_len;
  const std::uint64_t payload = bytes.size() - payload_at;
  for (const auto& t : f.directory) {
    if (t.rows < 0 || t.cols < 0 || t.bytes != static_cast<std::uint64_t>(t.rows * t.cols) * 4)
      data_error(source + ": tensor '" + t.name + "' byte count does not match its shape");
    if (t.offset > payload || t.bytes > payload - t.offset) data_error(source + ": payload shorter than directory");
    ad::Tensor m(t.rows, t.cols);
    for (Eigen::Index i = 0; i < m.size(); ++i)
      m.data()[i] = std::bit_cast<float>(get_u32(bytes, payload_at + t.offset + 4 * static_cast<std::size_t>(i)));
    f.tensors.push_back(std::move(m));
  }
  return f;
}

namespace {

std::vector<std::pair<std::string, ad::Tensor>> named_tensors(const ad::ParameterSet& params) {
  std::vector<std::pair<std::string, ad::Tensor>> out;
  for (const auto& p : params) out.emplace_back(p.name, p.var.value());
  return out;
}

// Every parameter must be present with its exact shape; nothing else may be.
void load_values(const CheckpointFile& f, ad::ParameterSet& params, std::size_t extra_allowed) {
  for (auto& p : params) {
    const auto& t = f.tensor(p.name);
    if (t.rows() != p.var.rows() || t.cols() != p.var.cols())
      data_error("checkpoint tensor '" + p.name + "' has shape " + std::to_string(t.rows()) + "x" +
                 std::to_string(t.cols()) + ", expected " + p.var.shape());
    p.var.mutable_value() = t;
  }
  if (f.directory.size() != params.size() + extra_allowed) data_error("checkpoint holds unexpected tensors");
}

nets::Arch arch_from(const CheckpointFile& f) {
  nets::Arch arch;
  try {
    apply_json(f.header.at("arch"), arch);
    arch.validate();
  } catch (const Error& e) {
    data_error(std::string("checkpoint architecture invalid: ") + e.what());
  } catch (const nlohmann::json::exception& e) {
    data_error(std::string("checkpoint architecture missing: ") + e.what());
  }
  return arch;
}

}  // namespace

void save_prior(const PriorCheckpoint& ck, const std::string& path) {
  Json fields{{"arch", to_json(ck.arch)}, {"config", to_json(ck.config)}, {"epochs_completed", ck.epoch_loss.size()}};
  write_file(path, encode_checkpoint("prior", std::move(fields), named_tensors(ck.all_parameters())));
}

PriorCheckpoint prior_from_checkpoint(const CheckpointFile& f) {
  if (f.kind != "prior") data_error("checkpoint kind is '" + f.kind + "', expected 'prior'");
  PriorCheckpoint ck = init_prior(arch_from(f), 0);
  try {
    apply_json(f.header.at("config"), ck.config);
  } catch (const std::exception& e) {
    data_error(std::string("checkpoint config invalid: ") + e.what());
  }
  auto params = ck.all_parameters();
  load_values(f, params, 0);
  return ck;
}

PriorCheckpoint load_prior(const std::string& path) { return prior_from_checkpoint(decode_checkpoint(read_file(path), path)); }

void save_global_sdf(const GlobalSdf& g, const SpecializeConfig& cfg, const std::string& path) {
  Json fields{{"arch", to_json(g.arch)}, {"config", to_json(cfg)}, {"mode", to_string(g.mode)}};
  auto tensors = named_tensors(g.all_parameters());
  if (g.fixed_condition) tensors.emplace_back("fixed_condition", *g.fixed_condition);
  write_file(path, encode_checkpoint("global_sdf", std::move(fields), tensors));
}

GlobalSdf global_sdf_from_checkpoint(const CheckpointFile& f) {
  if (f.kind != "global_sdf") data_error("checkpoint kind is '" + f.kind + "', expected 'global_sdf'");
  GlobalSdf g;
  g.arch = arch_from(f);
  try {
    g.mode = parse_specialize_mode(f.header.at("mode").get<std::string>());
  } catch (const std::exception& e) {
    data_error(std::string("checkpoint mode invalid: ") + e.what());
  }
  auto rng = make_stream(0, "init");
  g.implicit = nets::ImplicitNet(g.arch, rng);
  g.query = nets::QueryNet(g.arch, rng);
  auto params = g.all_parameters();
  const bool fixed = g.mode == SpecializeMode::FixedCond;
  load_values(f, params, fixed ? 1 : 0);
  if (fixed) {
    g.fixed_condition = f.tensor("fixed_condition");
    if (g.fixed_condition->rows() != 1 || g.fixed_condition->cols() != g.arch.cond_width)
      data_error("checkpoint fixed_condition has the wrong shape");
  }
  g.implicit_checksum_before = g.implicit_checksum_after = g.implicit.parameters().checksum();
  return g;
}

GlobalSdf load_global_sdf(const std::string& path) {
  return global_sdf_from_checkpoint(decode_checkpoint(read_file(path), path));
}

}  // namespace pcp::io
