#pragma once

// Procedural toy humanoid: a self-contained AssetBundle used by tests and
// demos in place of production character assets. Eleven closed quad boxes
// (pelvis, torso, head, two-segment arms and legs), one bone per box, two
// phenotype parameters ("age", "weight") with one blend target per grid node
// plus a combined age+weight target. The base mesh is exactly left/right
// mirror symmetric and all targets preserve that symmetry.

#include "anny/asset.hpp"

#include <random>

namespace anny {

enum class ToyResolution { Coarse, Fine };

namespace toy_detail {

// All the knobs that define the box layout. Prototype shapes (baby, heavy,
// ...) are produced by transforming a copy of these dimensions, so blend
// displacements are just vertex differences at fixed topology.
struct ToyDims {
  double pelvis_y0 = 0.88, pelvis_y1 = 1.02, pelvis_hx = 0.15, pelvis_hz = 0.09;
  double torso_y0 = 1.025, torso_y1 = 1.45, torso_hx = 0.16, torso_hz = 0.10;
  double head_y0 = 1.485, head_y1 = 1.72, head_hx = 0.09, head_hz = 0.10;
  double arm_x0 = 0.205, arm_x1 = 0.455, arm_cy = 1.38, arm_h = 0.04;
  double arm2_x0 = 0.465, arm2_x1 = 0.72, arm2_h = 0.035;
  double leg_cx = 0.09, leg_hx = 0.055, leg_hz = 0.065;
  double leg_y_top = 0.875, leg_y_knee_hi = 0.465;
  double leg2_hx = 0.04, leg2_hz = 0.05;
  double leg_y_knee_lo = 0.455, leg_y_bot = 0.04;

  void scale_heights(double s) {
    for (double* y : {&pelvis_y0, &pelvis_y1, &torso_y0, &torso_y1, &head_y0, &head_y1, &arm_cy,
                      &leg_y_top, &leg_y_knee_hi, &leg_y_knee_lo, &leg_y_bot}) {
      *y *= s;
    }
  }
  void scale_widths(double s) {
    for (double* w : {&pelvis_hx, &pelvis_hz, &torso_hx, &torso_hz, &arm_h, &arm2_h, &leg_hx,
                      &leg_hz, &leg2_hx, &leg2_hz, &leg_cx, &arm_x0, &arm_x1, &arm2_x0, &arm2_x1}) {
      *w *= s;
    }
  }
  void scale_head(double s) {
    head_hx *= s;
    head_hz *= s;
    head_y1 = head_y0 + (head_y1 - head_y0) * s;
  }
  void scale_all(double s) {
    scale_heights(s);
    scale_widths(s);
  }
};

// Axis-aligned closed quad box subdivided into `segments` stations along
// `axis`; the two cross axes are (axis+1)%3 and (axis+2)%3.
struct BoxSpec {
  int axis = 1;
  double lo = 0, hi = 1;       // extent along axis
  double c1 = 0, h1 = 0.05;    // center/half-size on (axis+1)%3
  double c2 = 0, h2 = 0.05;    // center/half-size on (axis+2)%3
};

// Interior stations bulge outward so a multi-segment box is a genuinely
// different surface from its single-segment counterpart (end rings match).
inline constexpr double kBoxBulge = 0.10;

inline void box_vertices(const BoxSpec& s, int segments, std::vector<Vec3>& out) {
  int p = (s.axis + 1) % 3, q = (s.axis + 2) % 3;
  // Corner pattern (p,q): (+,+), (+,-), (-,-), (-,+); outward winding below
  // assumes this cyclic order.
  const double sp[4] = {+1, +1, -1, -1};
  const double sq[4] = {+1, -1, -1, +1};
  for (int st = 0; st <= segments; ++st) {
    double t = static_cast<double>(st) / segments;
    double a = s.lo + (s.hi - s.lo) * t;
    double m = 1.0 + kBoxBulge * 4.0 * t * (1.0 - t);
    for (int k = 0; k < 4; ++k) {
      Vec3 v;
      v[s.axis] = a;
      v[p] = s.c1 + sp[k] * (s.h1 * m);
      v[q] = s.c2 + sq[k] * (s.h2 * m);
      out.push_back(v);
    }
  }
}

inline void box_faces(int base, int segments, std::vector<Quad>& out) {
  auto ring = [base](int st, int k) { return static_cast<VertexIndex>(base + st * 4 + (k % 4)); };
  out.push_back({ring(0, 0), ring(0, 1), ring(0, 2), ring(0, 3)});  // lo cap
  for (int st = 0; st < segments; ++st) {
    for (int k = 0; k < 4; ++k) {
      out.push_back({ring(st, k + 1), ring(st, k), ring(st + 1, k), ring(st + 1, k + 1)});
    }
  }
  out.push_back({ring(segments, 3), ring(segments, 2), ring(segments, 1), ring(segments, 0)});
}

struct PartLayout {
  std::string bone_name;
  int parent;          // bone index, -1 for root
  int mirror_of;       // part index this one mirrors, or -1
  int first_vertex = 0;
  int vertex_count = 0;
  int first_face = 0;
  int face_count = 0;
  int prox_station;    // ring blended 0.5/0.5 with the parent bone, or -1
};

// Part order defines bone indices. Parents always precede children.
inline std::vector<PartLayout> part_table() {
  return {
      {"root", -1, -1, 0, 0, 0, 0, -1},
      {"spine", 0, -1, 0, 0, 0, 0, 0},
      {"head", 1, -1, 0, 0, 0, 0, 0},
      {"upperarm.l", 1, -1, 0, 0, 0, 0, 0},
      {"lowerarm.l", 3, -1, 0, 0, 0, 0, 0},
      {"upperarm.r", 1, 3, 0, 0, 0, 0, 0},
      {"lowerarm.r", 5, 4, 0, 0, 0, 0, 0},
      {"upperleg.l", 0, -1, 0, 0, 0, 0, -2},  // -2: proximal ring is the top station
      {"lowerleg.l", 7, -1, 0, 0, 0, 0, -2},
      {"upperleg.r", 0, 7, 0, 0, 0, 0, -2},
      {"lowerleg.r", 9, 8, 0, 0, 0, 0, -2},
  };
}

// Axis-Y boxes have p=Z, q=X; axis-X boxes have p=Y, q=Z.
inline BoxSpec part_box(int part, const ToyDims& d) {
  switch (part) {
    case 0: return {1, d.pelvis_y0, d.pelvis_y1, 0, d.pelvis_hz, 0, d.pelvis_hx};
    case 1: return {1, d.torso_y0, d.torso_y1, 0, d.torso_hz, 0, d.torso_hx};
    case 2: return {1, d.head_y0, d.head_y1, 0, d.head_hz, 0, d.head_hx};
    case 3: return {0, d.arm_x0, d.arm_x1, d.arm_cy, d.arm_h, 0, d.arm_h};
    case 4: return {0, d.arm2_x0, d.arm2_x1, d.arm_cy, d.arm2_h, 0, d.arm2_h};
    case 7: return {1, d.leg_y_knee_hi, d.leg_y_top, 0, d.leg_hz, d.leg_cx, d.leg_hx};
    case 8: return {1, d.leg_y_bot, d.leg_y_knee_lo, 0, d.leg2_hz, d.leg_cx, d.leg2_hx};
    default: throw DomainError("part_box: mirrored parts have no own spec");
  }
}

// Positions for all parts under the given dimensions; mirrored parts copy
// their source part with x negated so symmetry is exact in every bit.
inline std::vector<Vec3> all_vertices(const ToyDims& d, int segments,
                                      const std::vector<PartLayout>& parts) {
  const int vpp = 4 * (segments + 1);
  std::vector<Vec3> verts;
  verts.reserve(parts.size() * vpp);
  for (size_t p = 0; p < parts.size(); ++p) {
    if (parts[p].mirror_of >= 0) {
      int src_base = parts[p].mirror_of * vpp;
      for (int i = 0; i < vpp; ++i) verts.push_back(reflect_sagittal(verts[src_base + i]));
    } else {
      box_vertices(part_box(static_cast<int>(p), d), segments, verts);
    }
  }
  return verts;
}

inline ToyDims jittered_dims(std::uint64_t seed) {
  ToyDims d;
  std::mt19937_64 rng(mix_seed(seed, 0x70795f64ULL));
  std::uniform_real_distribution<double> u(0.92, 1.08);
  d.scale_heights(u(rng));
  d.scale_widths(u(rng));
  d.scale_head(u(rng));
  return d;
}

}  // namespace toy_detail

inline AssetBundle generate_toy_humanoid(std::uint64_t seed, ToyResolution resolution) {
  using namespace toy_detail;
  const int segments = resolution == ToyResolution::Fine ? 4 : 1;
  const ToyDims dims = jittered_dims(seed);
  auto parts = part_table();
  const int ring = 4, stations = segments + 1;
  const int verts_per_part = ring * stations;

  AssetBundle b;

  // Geometry: vertex/face blocks per part, mirrored parts with reversed
  // windings to stay outward.
  b.mesh.vertices = all_vertices(dims, segments, parts);
  for (size_t p = 0; p < parts.size(); ++p) {
    parts[p].first_vertex = static_cast<int>(p) * verts_per_part;
    parts[p].vertex_count = verts_per_part;
    parts[p].first_face = static_cast<int>(b.mesh.faces.size());
    if (parts[p].mirror_of >= 0) {
      const PartLayout& src = parts[parts[p].mirror_of];
      int delta = parts[p].first_vertex - src.first_vertex;
      for (int f = 0; f < src.face_count; ++f) {
        Quad q = b.mesh.faces[src.first_face + f];
        for (auto& idx : q) idx = static_cast<VertexIndex>(idx + delta);
        std::reverse(q.begin(), q.end());
        b.mesh.faces.push_back(q);
      }
    } else {
      box_faces(parts[p].first_vertex, segments, b.mesh.faces);
    }
    parts[p].face_count = static_cast<int>(b.mesh.faces.size()) - parts[p].first_face;
  }

  // Skinning: interior rings fully bound to the part's bone, the proximal
  // ring shared 0.5/0.5 with the parent bone.
  auto ring_vertices = [&](int part, int station) {
    std::vector<VertexIndex> out;
    for (int k = 0; k < 4; ++k) {
      out.push_back(static_cast<VertexIndex>(parts[part].first_vertex + station * 4 + k));
    }
    return out;
  };
  auto prox_station_of = [&](int part) {
    int ps = parts[part].prox_station;
    return ps == -2 ? segments : ps;
  };
  b.weights.max_influences = 4;
  b.weights.offsets.assign(1, 0);
  for (size_t p = 0; p < parts.size(); ++p) {
    int prox = prox_station_of(static_cast<int>(p));
    for (int st = 0; st < stations; ++st) {
      for (int k = 0; k < 4; ++k) {
        if (parts[p].parent >= 0 && st == prox) {
          b.weights.bones.push_back(parts[p].parent);
          b.weights.weights.push_back(0.5);
          b.weights.bones.push_back(static_cast<BoneIndex>(p));
          b.weights.weights.push_back(0.5);
        } else {
          b.weights.bones.push_back(static_cast<BoneIndex>(p));
          b.weights.weights.push_back(1.0);
        }
        b.weights.offsets.push_back(static_cast<std::int32_t>(b.weights.bones.size()));
      }
    }
  }

  // Skeleton: one bone per part; joints anchored on the rings that meet
  // there so they track any morph of the mesh.
  auto merge = [](std::vector<VertexIndex> a, const std::vector<VertexIndex>& c) {
    a.insert(a.end(), c.begin(), c.end());
    return a;
  };
  auto add_bone = [&](int part, std::vector<VertexIndex> head, std::vector<VertexIndex> tail) {
    Bone bone;
    bone.name = parts[part].bone_name;
    bone.parent = parts[part].parent;
    bone.head_anchors = std::move(head);
    bone.tail_anchors = std::move(tail);
    b.skeleton.bones.push_back(std::move(bone));
  };
  const int S = segments;
  auto pelvis_top = merge(ring_vertices(0, S), ring_vertices(1, 0));
  auto neck = merge(ring_vertices(1, S), ring_vertices(2, 0));
  add_bone(0, ring_vertices(0, 0), pelvis_top);
  add_bone(1, pelvis_top, neck);
  add_bone(2, neck, ring_vertices(2, S));
  auto elbow_l = merge(ring_vertices(3, S), ring_vertices(4, 0));
  add_bone(3, ring_vertices(3, 0), elbow_l);
  add_bone(4, elbow_l, ring_vertices(4, S));
  auto elbow_r = merge(ring_vertices(5, S), ring_vertices(6, 0));
  add_bone(5, ring_vertices(5, 0), elbow_r);
  add_bone(6, elbow_r, ring_vertices(6, S));
  auto knee_l = merge(ring_vertices(7, 0), ring_vertices(8, S));
  add_bone(7, ring_vertices(7, S), knee_l);
  add_bone(8, knee_l, ring_vertices(8, 0));
  auto knee_r = merge(ring_vertices(9, 0), ring_vertices(10, S));
  add_bone(9, ring_vertices(9, S), knee_r);
  add_bone(10, knee_r, ring_vertices(10, 0));
  b.skeleton.root_index = 0;

  b.mesh.part_labels = compute_part_labels(b.mesh, b.weights, b.skeleton);

  // Symmetry: mirrored parts pair vertex-for-vertex; center boxes pair the
  // +x/-x corners of each ring internally (q axis is X for axis-Y boxes:
  // corners 0<->1 and 3<->2).
  for (size_t p = 0; p < parts.size(); ++p) {
    if (parts[p].mirror_of >= 0) {
      const PartLayout& src = parts[parts[p].mirror_of];
      for (int i = 0; i < parts[p].vertex_count; ++i) {
        b.symmetry.pairs.push_back({static_cast<VertexIndex>(src.first_vertex + i),
                                    static_cast<VertexIndex>(parts[p].first_vertex + i)});
      }
    } else if (parts[p].bone_name == "root" || parts[p].bone_name == "spine" ||
               parts[p].bone_name == "head") {
      for (int st = 0; st < stations; ++st) {
        int base = parts[p].first_vertex + st * 4;
        b.symmetry.pairs.push_back({static_cast<VertexIndex>(base + 0), static_cast<VertexIndex>(base + 1)});
        b.symmetry.pairs.push_back({static_cast<VertexIndex>(base + 3), static_cast<VertexIndex>(base + 2)});
      }
    }
  }

  // Phenotype schema. Neutral sits on a grid node whose target is empty, so
  // the neutral body is the base mesh itself.
  b.schema.parameters = {
      {"age", {0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0}, 2.0 / 3.0},
      {"weight", {0.0, 0.5, 1.0}, 0.5},
  };

  auto displacement_target = [&](std::vector<BlendConstraint> constraints, const ToyDims& proto) {
    BlendTarget t;
    t.constraints = std::move(constraints);
    std::vector<Vec3> pv = all_vertices(proto, segments, parts);
    for (size_t i = 0; i < pv.size(); ++i) {
      Vec3 delta = pv[i] - b.mesh.vertices[i];
      if (delta.x() != 0.0 || delta.y() != 0.0 || delta.z() != 0.0) {
        t.indices.push_back(static_cast<VertexIndex>(i));
        t.offsets.push_back(delta);
      }
    }
    return t;
  };

  ToyDims baby = dims;
  baby.scale_all(0.45);
  baby.scale_head(1.6);
  ToyDims child = dims;
  child.scale_all(0.7);
  child.scale_head(1.25);
  ToyDims elder = dims;
  elder.scale_all(0.97);
  elder.torso_hz *= 1.15;
  // scale_widths leaves the head untouched, so thin/heavy are body-only.
  ToyDims thin = dims;
  thin.scale_widths(0.8);
  ToyDims heavy = dims;
  heavy.scale_widths(1.35);
  heavy.torso_hz *= 1.15;
  ToyDims belly = dims;
  belly.torso_hz *= 1.25;

  b.targets.push_back(displacement_target({{0, 0}}, baby));
  b.targets.push_back(displacement_target({{0, 1}}, child));
  b.targets.push_back(BlendTarget{{{0, 2}}, {}, {}});  // neutral age node
  b.targets.push_back(displacement_target({{0, 3}}, elder));
  b.targets.push_back(displacement_target({{1, 0}}, thin));
  b.targets.push_back(BlendTarget{{{1, 1}}, {}, {}});  // neutral weight node
  b.targets.push_back(displacement_target({{1, 2}}, heavy));
  b.targets.push_back(displacement_target({{0, 3}, {1, 2}}, belly));

  validate_bundle(b);
  return b;
}

}  // namespace anny
