#pragma once

// ASCII OBJ / PLY mesh export and point/mesh import. Exact output layout is
// documented in docs/FORMATS.md; all floats are written in shortest
// round-trip decimal form so exports are byte-stable.

#include "anny/asset.hpp"

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

namespace anny {

enum class MeshFormat { Obj, Ply };
enum class PlyFaceMode { Quads, Triangulated };

inline MeshFormat mesh_format_from_path(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  for (char& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (ext == ".obj") return MeshFormat::Obj;
  if (ext == ".ply") return MeshFormat::Ply;
  throw DomainError("cannot infer mesh format from extension '" + ext + "'");
}

namespace detail {

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
  f.write(content.data(), static_cast<std::streamsize>(content.size()));
  f.flush();
  if (!f) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace detail

inline std::string obj_string(const std::vector<Vec3>& vertices, const std::vector<Quad>& faces) {
  std::string out;
  for (const Vec3& v : vertices) {
    out += "v " + format_double(v.x()) + " " + format_double(v.y()) + " " +
           format_double(v.z()) + "\n";
  }
  for (const Quad& q : faces) {
    out += "f";
    for (int c = 0; c < 4; ++c) out += " " + std::to_string(q[c] + 1);
    out += "\n";
  }
  return out;
}

// PLY ASCII with binary64 vertex properties. `vertex_scalar`, when present,
// adds one extra per-vertex property (used for fit error maps).
inline std::string ply_string(const std::vector<Vec3>& vertices, const std::vector<Quad>& faces,
                              PlyFaceMode mode = PlyFaceMode::Quads,
                              const std::vector<double>* vertex_scalar = nullptr,
                              const std::string& scalar_name = "error") {
  if (vertex_scalar && vertex_scalar->size() != vertices.size()) {
    throw DomainError("ply export: scalar attribute count != vertex count");
  }
  size_t nf = mode == PlyFaceMode::Quads ? faces.size() : faces.size() * 2;
  std::string out = "ply\nformat ascii 1.0\ncomment units meters\n";
  out += "element vertex " + std::to_string(vertices.size()) + "\n";
  out += "property double x\nproperty double y\nproperty double z\n";
  if (vertex_scalar) out += "property double " + scalar_name + "\n";
  out += "element face " + std::to_string(nf) + "\n";
  out += "property list uchar int vertex_indices\nend_header\n";
  for (size_t i = 0; i < vertices.size(); ++i) {
    const Vec3& v = vertices[i];
    out += format_double(v.x()) + " " + format_double(v.y()) + " " + format_double(v.z());
    if (vertex_scalar) out += " " + format_double((*vertex_scalar)[i]);
    out += "\n";
  }
  if (mode == PlyFaceMode::Quads) {
    for (const Quad& q : faces) {
      out += "4 " + std::to_string(q[0]) + " " + std::to_string(q[1]) + " " +
             std::to_string(q[2]) + " " + std::to_string(q[3]) + "\n";
    }
  } else {
    for (const Tri& t : triangulate(faces)) {
      out += "3 " + std::to_string(t[0]) + " " + std::to_string(t[1]) + " " +
             std::to_string(t[2]) + "\n";
    }
  }
  return out;
}

inline void export_mesh(const std::vector<Vec3>& vertices, const std::vector<Quad>& faces,
                        const std::filesystem::path& path, MeshFormat format,
                        PlyFaceMode ply_mode = PlyFaceMode::Quads,
                        const std::vector<double>* vertex_scalar = nullptr) {
  if (vertices.empty()) throw DomainError("export_mesh: empty vertex list");
  if (format == MeshFormat::Obj) {
    detail::write_file(path, obj_string(vertices, faces));
  } else {
    detail::write_file(path, ply_string(vertices, faces, ply_mode, vertex_scalar));
  }
}

// ---------------------------------------------------------------------------
// Import. Reads ASCII OBJ (v/f lines) and ASCII PLY; faces are optional so
// the same loaders serve scan point clouds and full meshes.

struct LoadedMesh {
  std::vector<Vec3> vertices;
  std::vector<Quad> quads;
  std::vector<Tri> tris;
};

inline LoadedMesh load_mesh_obj(std::istream& in) {
  LoadedMesh m;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag)) continue;
    if (tag == "v") {
      double x, y, z;
      if (!(ls >> x >> y >> z)) throw ParseError("obj: bad vertex at line " + std::to_string(lineno));
      m.vertices.emplace_back(x, y, z);
    } else if (tag == "f") {
      std::vector<VertexIndex> idx;
      std::string tok;
      while (ls >> tok) {
        // `f v`, `f v/vt`, `f v/vt/vn` forms; only the vertex index is kept.
        size_t slash = tok.find('/');
        long v = std::stol(slash == std::string::npos ? tok : tok.substr(0, slash));
        if (v < 0) v = static_cast<long>(m.vertices.size()) + v + 1;  // relative indices
        idx.push_back(static_cast<VertexIndex>(v - 1));
      }
      if (idx.size() == 3) {
        m.tris.push_back({idx[0], idx[1], idx[2]});
      } else if (idx.size() == 4) {
        m.quads.push_back({idx[0], idx[1], idx[2], idx[3]});
      } else if (!idx.empty()) {
        throw ParseError("obj: unsupported face arity at line " + std::to_string(lineno));
      }
    }
  }
  return m;
}

inline LoadedMesh load_mesh_ply(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("ply", 0) != 0) throw ParseError("ply: missing header");
  size_t nv = 0, nf = 0;
  int xyz_cols[3] = {-1, -1, -1};
  int vertex_props = 0;
  bool in_vertex = false, ascii = false;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "format") {
      std::string fmt;
      ls >> fmt;
      ascii = fmt == "ascii";
    } else if (tag == "element") {
      std::string what;
      size_t n;
      ls >> what >> n;
      in_vertex = what == "vertex";
      if (in_vertex) {
        nv = n;
      } else if (what == "face") {
        nf = n;
      }
    } else if (tag == "property" && in_vertex) {
      std::string type, name;
      ls >> type >> name;
      if (type == "list") continue;
      if (name == "x") xyz_cols[0] = vertex_props;
      if (name == "y") xyz_cols[1] = vertex_props;
      if (name == "z") xyz_cols[2] = vertex_props;
      ++vertex_props;
    } else if (tag == "end_header") {
      break;
    }
  }
  if (!ascii) throw ParseError("ply: only ascii format is supported");
  if (xyz_cols[0] < 0 || xyz_cols[1] < 0 || xyz_cols[2] < 0) {
    throw ParseError("ply: vertex element lacks x/y/z properties");
  }
  LoadedMesh m;
  m.vertices.reserve(nv);
  std::vector<double> cols(vertex_props);
  for (size_t i = 0; i < nv; ++i) {
    if (!std::getline(in, line)) throw ParseError("ply: truncated vertex list");
    std::istringstream ls(line);
    for (int c = 0; c < vertex_props; ++c) {
      if (!(ls >> cols[c])) throw ParseError("ply: bad vertex row " + std::to_string(i));
    }
    m.vertices.emplace_back(cols[xyz_cols[0]], cols[xyz_cols[1]], cols[xyz_cols[2]]);
  }
  for (size_t i = 0; i < nf; ++i) {
    if (!std::getline(in, line)) throw ParseError("ply: truncated face list");
    std::istringstream ls(line);
    int arity;
    if (!(ls >> arity)) throw ParseError("ply: bad face row " + std::to_string(i));
    std::vector<VertexIndex> idx(arity);
    for (int c = 0; c < arity; ++c) ls >> idx[c];
    if (arity == 3) {
      m.tris.push_back({idx[0], idx[1], idx[2]});
    } else if (arity == 4) {
      m.quads.push_back({idx[0], idx[1], idx[2], idx[3]});
    } else {
      throw ParseError("ply: unsupported face arity " + std::to_string(arity));
    }
  }
  return m;
}

inline LoadedMesh load_mesh(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path.string() + "' for reading");
  if (mesh_format_from_path(path) == MeshFormat::Obj) return load_mesh_obj(f);
  return load_mesh_ply(f);
}

inline std::vector<Vec3> load_points(const std::filesystem::path& path) {
  return load_mesh(path).vertices;
}

}  // namespace anny
