#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pcp/config.hpp"
#include "pcp/geometry.hpp"
#include "pcp/mesher.hpp"
#include "pcp/prior.hpp"
#include "pcp/specialize.hpp"

namespace pcp::io {

/// ASCII XYZ (first `dim` columns; '#' comments) or ASCII PLY with x/y[/z]
/// and optional nx/ny[/nz]. Chosen by extension (.ply, anything else XYZ).
PointCloud read_pointcloud(const std::string& path, int dim = 3);
PointCloud parse_xyz(const std::string& text, int dim = 3, const std::string& source = "<memory>");
PointCloud parse_ply_cloud(const std::string& text, int dim = 3, const std::string& source = "<memory>");

void write_xyz(const PointCloud& cloud, const std::string& path);

enum class MeshFormat { Obj, Ply };
/// From the extension; Error(Usage) for anything other than .obj / .ply.
MeshFormat mesh_format_for(const std::string& path);

std::string format_obj(const TriangleMesh& mesh);
std::string format_ply(const TriangleMesh& mesh);
/// Empty meshes produce a valid file and a warning.
void write_mesh(const TriangleMesh& mesh, const std::string& path);
void write_mesh(const TriangleMesh& mesh, const std::string& path, MeshFormat format);
/// OBJ (polygons fan-triangulated, v/vt/vn index forms accepted) or ASCII PLY.
TriangleMesh read_mesh(const std::string& path);

/// One "contour <i> closed|open <n>" header per polyline followed by n "x y"
/// lines.
void write_contours(const std::vector<Contour>& contours, const std::string& path);

/// "step,loss" per line.
void write_loss_history(const std::vector<LossRecord>& history, const std::string& path);

inline constexpr char kCheckpointMagic[4] = {'P', 'C', 'P', 'R'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct TensorEntry {
  std::string name;
  std::int64_t rows = 0;
  std::int64_t cols = 0;
  std::uint64_t offset = 0;  // from the start of the payload
  std::uint64_t bytes = 0;
};

/// Parsed checkpoint: header (kind, arch, config, directory) plus tensors
/// widened back to double.
struct CheckpointFile {
  std::string kind;  // "prior" or "global_sdf"
  Json header;
  std::vector<TensorEntry> directory;
  std::vector<ad::Tensor> tensors;

  const ad::Tensor& tensor(const std::string& name) const;
};

/// Layout: "PCPR", u32 version, u64 header length, header JSON, payload of
/// float32 little-endian row-major tensors.
std::string encode_checkpoint(const std::string& kind, Json header_fields,
                              const std::vector<std::pair<std::string, ad::Tensor>>& tensors);
CheckpointFile decode_checkpoint(const std::string& bytes, const std::string& source = "<memory>");

void save_prior(const PriorCheckpoint& ck, const std::string& path);
PriorCheckpoint load_prior(const std::string& path);
void save_global_sdf(const GlobalSdf& g, const SpecializeConfig& cfg, const std::string& path);
GlobalSdf load_global_sdf(const std::string& path);

PriorCheckpoint prior_from_checkpoint(const CheckpointFile& f);
GlobalSdf global_sdf_from_checkpoint(const CheckpointFile& f);

std::string read_file(const std::string& path);
/// Truncates and writes; Error(Data) when the path cannot be opened.
void write_file(const std::string& path, const std::string& contents);

/// "%.9g".
std::string fmt_g9(double v);

}  // namespace pcp::io
