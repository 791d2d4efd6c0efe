#pragma once

// On-disk bundle container. Little-endian, versioned, one tagged section per
// asset component; numeric payloads are IEEE-754 binary64 so a bundle
// round-trips bit-exactly. Layout is documented in docs/FORMATS.md.

#include "anny/asset.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

namespace anny {

inline constexpr char kBundleMagic[9] = "ANNYBND1";
inline constexpr std::uint32_t kBundleVersion = 1;

namespace detail {

struct ByteWriter {
  std::string out;

  void raw(const void* p, size_t n) { out.append(static_cast<const char*>(p), n); }
  void u8(std::uint8_t v) { out.push_back(static_cast<char>(v)); }
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    if (s.size() > 0xffff) throw IoError("bundle: string too long");
    u16(static_cast<std::uint16_t>(s.size()));
    raw(s.data(), s.size());
  }
};

struct ByteReader {
  const std::string& buf;
  size_t pos = 0;

  void need(size_t n) const {
    if (pos + n > buf.size()) throw ParseError("bundle: truncated file");
  }
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(buf[pos++]);
  }
  std::uint16_t u16() {
    std::uint16_t v = 0;
    for (int i = 0; i < 2; ++i) v |= static_cast<std::uint16_t>(u8()) << (8 * i);
    return v;
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(u8()) << (8 * i);
    return v;
  }
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    std::uint16_t n = u16();
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
  // Guard for element counts before any allocation.
  size_t count(std::uint64_t n, size_t elem_bytes) const {
    if (n > (buf.size() - pos) / (elem_bytes ? elem_bytes : 1) + 1) {
      throw ParseError("bundle: element count exceeds file size");
    }
    return static_cast<size_t>(n);
  }
};

inline void begin_section(ByteWriter& w, const char tag[5], std::string& scratch) {
  w.raw(tag, 4);
  scratch.clear();
}

}  // namespace detail

inline std::string serialize_bundle(const AssetBundle& b) {
  using detail::ByteWriter;
  ByteWriter w;
  w.raw(kBundleMagic, 8);
  w.u32(kBundleVersion);

  auto section = [&w](const char tag[5], const std::string& payload) {
    w.raw(tag, 4);
    w.u64(payload.size());
    w.raw(payload.data(), payload.size());
  };

  {
    ByteWriter s;
    s.u64(b.mesh.vertices.size());
    for (const Vec3& v : b.mesh.vertices) {
      s.f64(v.x());
      s.f64(v.y());
      s.f64(v.z());
    }
    s.u64(b.mesh.faces.size());
    for (const Quad& q : b.mesh.faces) {
      for (int c = 0; c < 4; ++c) s.i32(q[c]);
    }
    for (std::int32_t l : b.mesh.part_labels) s.i32(l);
    section("MESH", s.out);
  }
  {
    ByteWriter s;
    s.u64(b.skeleton.bones.size());
    for (const Bone& bone : b.skeleton.bones) {
      s.str(bone.name);
      s.i32(bone.parent);
      s.u64(bone.head_anchors.size());
      for (VertexIndex a : bone.head_anchors) s.i32(a);
      s.u64(bone.tail_anchors.size());
      for (VertexIndex a : bone.tail_anchors) s.i32(a);
    }
    s.i32(b.skeleton.root_index);
    section("SKEL", s.out);
  }
  {
    ByteWriter s;
    s.u32(static_cast<std::uint32_t>(b.weights.max_influences));
    s.u64(b.weights.vertex_count());
    for (int v = 0; v < b.weights.vertex_count(); ++v) {
      s.u16(static_cast<std::uint16_t>(b.weights.end(v) - b.weights.begin(v)));
      for (int k = b.weights.begin(v); k < b.weights.end(v); ++k) {
        s.i32(b.weights.bones[k]);
        s.f64(b.weights.weights[k]);
      }
    }
    section("SKIN", s.out);
  }
  {
    ByteWriter s;
    s.u64(b.schema.parameters.size());
    for (const SchemaParameter& p : b.schema.parameters) {
      s.str(p.name);
      s.u64(p.grid.size());
      for (double g : p.grid) s.f64(g);
      s.f64(p.neutral);
    }
    section("SCHM", s.out);
  }
  {
    ByteWriter s;
    s.u64(b.targets.size());
    for (const BlendTarget& t : b.targets) {
      s.u16(static_cast<std::uint16_t>(t.constraints.size()));
      for (const BlendConstraint& c : t.constraints) {
        s.u32(static_cast<std::uint32_t>(c.param));
        s.u32(static_cast<std::uint32_t>(c.node));
      }
      s.u64(t.indices.size());
      for (size_t i = 0; i < t.indices.size(); ++i) {
        s.i32(t.indices[i]);
        s.f64(t.offsets[i].x());
        s.f64(t.offsets[i].y());
        s.f64(t.offsets[i].z());
      }
    }
    section("TRGT", s.out);
  }
  {
    ByteWriter s;
    s.u64(b.symmetry.pairs.size());
    for (auto [l, r] : b.symmetry.pairs) {
      s.i32(l);
      s.i32(r);
    }
    s.u64(b.symmetry.midline.size());
    for (VertexIndex m : b.symmetry.midline) s.i32(m);
    section("SYMM", s.out);
  }
  return w.out;
}

inline AssetBundle deserialize_bundle(const std::string& bytes) {
  detail::ByteReader r{bytes};
  r.need(12);
  if (std::memcmp(bytes.data(), kBundleMagic, 8) != 0) {
    throw ParseError("bundle: bad magic (not a bundle file)");
  }
  r.pos = 8;
  std::uint32_t version = r.u32();
  if (version != kBundleVersion) {
    throw ParseError("bundle: unsupported version " + std::to_string(version));
  }

  AssetBundle b;
  auto expect_section = [&r](const char tag[5]) {
    r.need(12);
    if (std::memcmp(r.buf.data() + r.pos, tag, 4) != 0) {
      throw ParseError(std::string("bundle: expected section ") + tag);
    }
    r.pos += 4;
    return r.u64();  // payload length (sections are read sequentially)
  };

  expect_section("MESH");
  {
    size_t nv = r.count(r.u64(), 24);
    b.mesh.vertices.resize(nv);
    for (size_t i = 0; i < nv; ++i) {
      double x = r.f64(), y = r.f64(), z = r.f64();
      b.mesh.vertices[i] = Vec3(x, y, z);
    }
    size_t nf = r.count(r.u64(), 16);
    b.mesh.faces.resize(nf);
    for (size_t i = 0; i < nf; ++i) {
      for (int c = 0; c < 4; ++c) b.mesh.faces[i][c] = r.i32();
    }
    b.mesh.part_labels.resize(nf);
    for (size_t i = 0; i < nf; ++i) b.mesh.part_labels[i] = r.i32();
  }
  expect_section("SKEL");
  {
    size_t nb = r.count(r.u64(), 8);
    b.skeleton.bones.resize(nb);
    for (size_t i = 0; i < nb; ++i) {
      Bone& bone = b.skeleton.bones[i];
      bone.name = r.str();
      bone.parent = r.i32();
      size_t nh = r.count(r.u64(), 4);
      bone.head_anchors.resize(nh);
      for (size_t k = 0; k < nh; ++k) bone.head_anchors[k] = r.i32();
      size_t nt = r.count(r.u64(), 4);
      bone.tail_anchors.resize(nt);
      for (size_t k = 0; k < nt; ++k) bone.tail_anchors[k] = r.i32();
    }
    b.skeleton.root_index = r.i32();
  }
  expect_section("SKIN");
  {
    b.weights.max_influences = static_cast<int>(r.u32());
    size_t nv = r.count(r.u64(), 2);
    b.weights.offsets.clear();
    b.weights.offsets.push_back(0);
    for (size_t v = 0; v < nv; ++v) {
      std::uint16_t n = r.u16();
      for (int k = 0; k < n; ++k) {
        b.weights.bones.push_back(r.i32());
        b.weights.weights.push_back(r.f64());
      }
      b.weights.offsets.push_back(static_cast<std::int32_t>(b.weights.bones.size()));
    }
  }
  expect_section("SCHM");
  {
    size_t np = r.count(r.u64(), 2);
    b.schema.parameters.resize(np);
    for (size_t i = 0; i < np; ++i) {
      SchemaParameter& p = b.schema.parameters[i];
      p.name = r.str();
      size_t ng = r.count(r.u64(), 8);
      p.grid.resize(ng);
      for (size_t g = 0; g < ng; ++g) p.grid[g] = r.f64();
      p.neutral = r.f64();
    }
  }
  expect_section("TRGT");
  {
    size_t nt = r.count(r.u64(), 2);
    b.targets.resize(nt);
    for (size_t i = 0; i < nt; ++i) {
      BlendTarget& t = b.targets[i];
      std::uint16_t nc = r.u16();
      t.constraints.resize(nc);
      for (int c = 0; c < nc; ++c) {
        t.constraints[c].param = static_cast<std::int32_t>(r.u32());
        t.constraints[c].node = static_cast<std::int32_t>(r.u32());
      }
      size_t ne = r.count(r.u64(), 28);
      t.indices.resize(ne);
      t.offsets.resize(ne);
      for (size_t e = 0; e < ne; ++e) {
        t.indices[e] = r.i32();
        double x = r.f64(), y = r.f64(), z = r.f64();
        t.offsets[e] = Vec3(x, y, z);
      }
    }
  }
  expect_section("SYMM");
  {
    size_t np = r.count(r.u64(), 8);
    b.symmetry.pairs.resize(np);
    for (size_t i = 0; i < np; ++i) {
      VertexIndex l = r.i32();
      VertexIndex rr = r.i32();
      b.symmetry.pairs[i] = {l, rr};
    }
    size_t nm = r.count(r.u64(), 4);
    b.symmetry.midline.resize(nm);
    for (size_t i = 0; i < nm; ++i) b.symmetry.midline[i] = r.i32();
  }

  validate_bundle(b);
  return b;
}

inline void save_bundle(const AssetBundle& b, const std::filesystem::path& path) {
  std::string bytes = serialize_bundle(b);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  f.flush();
  if (!f) throw IoError("write failed for '" + path.string() + "'");
}

inline AssetBundle load_bundle(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path.string() + "' for reading");
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (bytes.empty()) throw ParseError("bundle: empty file '" + path.string() + "'");
  return deserialize_bundle(bytes);
}

}  // namespace anny
