#pragma once

// Static asset data model: base mesh, skeleton, skinning weights, phenotype
// schema, blendshape targets and the left/right symmetry map. Everything in
// an AssetBundle is immutable after load and safe to share across threads.

#include "anny/core.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace anny {

struct BaseMesh {
  std::vector<Vec3> vertices;            // meters
  std::vector<Quad> faces;               // quadrilaterals, CCW outward
  std::vector<std::int32_t> part_labels; // per face, dominant-bone body part
};

struct Bone {
  std::string name;
  BoneIndex parent = -1;  // -1 for the root
  std::vector<VertexIndex> head_anchors;
  std::vector<VertexIndex> tail_anchors;
};

struct Skeleton {
  std::vector<Bone> bones;
  BoneIndex root_index = 0;

  int find(const std::string& name) const {
    for (size_t i = 0; i < bones.size(); ++i) {
      if (bones[i].name == name) return static_cast<int>(i);
    }
    return -1;
  }
};

// Per-vertex sparse bone influences in CSR layout.
struct SkinningWeights {
  int max_influences = 4;
  std::vector<std::int32_t> offsets;  // size V+1
  std::vector<BoneIndex> bones;
  std::vector<double> weights;

  int vertex_count() const { return static_cast<int>(offsets.size()) - 1; }
  int begin(int v) const { return offsets[v]; }
  int end(int v) const { return offsets[v + 1]; }
};

struct SchemaParameter {
  std::string name;
  std::vector<double> grid;  // strictly increasing, spans [0,1]
  double neutral = 0.0;
};

struct PhenotypeSchema {
  std::vector<SchemaParameter> parameters;

  int find(const std::string& name) const {
    for (size_t i = 0; i < parameters.size(); ++i) {
      if (parameters[i].name == name) return static_cast<int>(i);
    }
    return -1;
  }
  int size() const { return static_cast<int>(parameters.size()); }
};

// Constraint of a blend target: "this target lives at grid node `node` of
// schema parameter `param`". Node values are resolved through the schema so
// serialization stays exact.
struct BlendConstraint {
  std::int32_t param = 0;
  std::int32_t node = 0;
  bool operator==(const BlendConstraint&) const = default;
  bool operator<(const BlendConstraint& o) const {
    return param != o.param ? param < o.param : node < o.node;
  }
};

struct BlendTarget {
  std::vector<BlendConstraint> constraints;  // sorted by param, one per param
  std::vector<VertexIndex> indices;          // sparse support, sorted ascending
  std::vector<Vec3> offsets;                 // meters, parallel to indices
};

struct SymmetryMap {
  std::vector<std::pair<VertexIndex, VertexIndex>> pairs;  // (left, right)
  std::vector<VertexIndex> midline;

  // Involution over all vertices: sigma[l] = r, sigma[r] = l, sigma[m] = m.
  std::vector<VertexIndex> involution(int vertex_count) const {
    std::vector<VertexIndex> sigma(vertex_count, -1);
    for (auto [l, r] : pairs) {
      sigma[l] = r;
      sigma[r] = l;
    }
    for (auto m : midline) sigma[m] = m;
    return sigma;
  }
};

struct AssetBundle {
  BaseMesh mesh;
  Skeleton skeleton;
  SkinningWeights weights;
  PhenotypeSchema schema;
  std::vector<BlendTarget> targets;
  SymmetryMap symmetry;

  int vertex_count() const { return static_cast<int>(mesh.vertices.size()); }
  int bone_count() const { return static_cast<int>(skeleton.bones.size()); }
};

// Reflection through the sagittal plane x = 0.
inline Vec3 reflect_sagittal(const Vec3& v) { return Vec3(-v.x(), v.y(), v.z()); }

// Fixed-diagonal triangulation: quad (a,b,c,d) -> (a,b,c), (a,c,d).
// Triangles 2f and 2f+1 come from quad f.
inline std::vector<Tri> triangulate(const std::vector<Quad>& faces) {
  std::vector<Tri> tris;
  tris.reserve(faces.size() * 2);
  for (const Quad& q : faces) {
    tris.push_back({q[0], q[1], q[2]});
    tris.push_back({q[0], q[2], q[3]});
  }
  return tris;
}

// Body parts are bone indices; parts are adjacent when their bones are in a
// parent/child relation.
inline bool parts_adjacent(const Skeleton& skel, int part_a, int part_b) {
  if (part_a == part_b) return true;
  if (part_a >= 0 && part_a < static_cast<int>(skel.bones.size()) &&
      skel.bones[part_a].parent == part_b) {
    return true;
  }
  if (part_b >= 0 && part_b < static_cast<int>(skel.bones.size()) &&
      skel.bones[part_b].parent == part_a) {
    return true;
  }
  return false;
}

// Dominant-bone face labels: argmax of summed corner weights, ties broken
// toward the larger bone index (labels caps of a child segment as the child).
inline std::vector<std::int32_t> compute_part_labels(const BaseMesh& mesh,
                                                     const SkinningWeights& weights,
                                                     const Skeleton& skel) {
  std::vector<std::int32_t> labels(mesh.faces.size(), 0);
  std::vector<double> acc(skel.bones.size());
  for (size_t f = 0; f < mesh.faces.size(); ++f) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (VertexIndex v : mesh.faces[f]) {
      for (int k = weights.begin(v); k < weights.end(v); ++k) {
        acc[weights.bones[k]] += weights.weights[k];
      }
    }
    int best = 0;
    for (int b = 1; b < static_cast<int>(acc.size()); ++b) {
      if (acc[b] >= acc[best]) best = b;
    }
    labels[f] = best;
  }
  return labels;
}

// ---------------------------------------------------------------------------
// Validation. Collects human-readable violations naming the offending
// element; validate_bundle throws ValidationError with the full list.

inline std::vector<std::string> bundle_violations(const AssetBundle& b) {
  std::vector<std::string> out;
  auto fail = [&out](const std::string& msg) { out.push_back(msg); };
  const int nv = b.vertex_count();
  const int nb = b.bone_count();

  if (nv == 0) fail("mesh: empty vertex list");
  for (size_t f = 0; f < b.mesh.faces.size(); ++f) {
    const Quad& q = b.mesh.faces[f];
    for (int c = 0; c < 4; ++c) {
      if (q[c] < 0 || q[c] >= nv) {
        fail("mesh: face " + std::to_string(f) + " references vertex " +
             std::to_string(q[c]) + " outside [0," + std::to_string(nv) + ")");
      }
    }
    std::set<VertexIndex> uniq(q.begin(), q.end());
    if (uniq.size() != 4) fail("mesh: face " + std::to_string(f) + " is degenerate");
  }
  if (b.mesh.part_labels.size() != b.mesh.faces.size()) {
    fail("mesh: part_labels count " + std::to_string(b.mesh.part_labels.size()) +
         " != face count " + std::to_string(b.mesh.faces.size()));
  }

  // Skeleton: exactly one root and a cycle-free parent map.
  if (nb == 0) {
    fail("skeleton: no bones");
  } else {
    if (b.skeleton.root_index < 0 || b.skeleton.root_index >= nb) {
      fail("skeleton: root_index out of range");
    }
    int roots = 0;
    for (int i = 0; i < nb; ++i) {
      const Bone& bone = b.skeleton.bones[i];
      if (bone.parent == -1) {
        ++roots;
        if (i != b.skeleton.root_index) {
          fail("skeleton: bone '" + bone.name + "' has no parent but is not root_index");
        }
      } else if (bone.parent < 0 || bone.parent >= nb) {
        fail("skeleton: bone '" + bone.name + "' parent index out of range");
      }
      if (bone.head_anchors.empty() || bone.tail_anchors.empty()) {
        fail("skeleton: bone '" + bone.name + "' has an empty anchor set");
      }
      for (VertexIndex a : bone.head_anchors) {
        if (a < 0 || a >= nv) fail("skeleton: bone '" + bone.name + "' head anchor out of range");
      }
      for (VertexIndex a : bone.tail_anchors) {
        if (a < 0 || a >= nv) fail("skeleton: bone '" + bone.name + "' tail anchor out of range");
      }
    }
    if (roots != 1) fail("skeleton: expected exactly 1 root, found " + std::to_string(roots));
    for (int i = 0; i < nb; ++i) {
      int steps = 0, cur = i;
      while (cur != -1 && steps <= nb) {
        cur = b.skeleton.bones[cur].parent;
        ++steps;
      }
      if (steps > nb) {
        fail("skeleton: parent chain of bone '" + b.skeleton.bones[i].name + "' has a cycle");
        break;
      }
    }
  }

  // Weights.
  if (b.weights.vertex_count() != nv) {
    fail("weights: vertex count " + std::to_string(b.weights.vertex_count()) +
         " != mesh vertex count " + std::to_string(nv));
  } else {
    for (int v = 0; v < nv; ++v) {
      double sum = 0.0;
      int n = b.weights.end(v) - b.weights.begin(v);
      if (n > b.weights.max_influences) {
        fail("weights: vertex " + std::to_string(v) + " has " + std::to_string(n) +
             " influences > max " + std::to_string(b.weights.max_influences));
      }
      for (int k = b.weights.begin(v); k < b.weights.end(v); ++k) {
        if (b.weights.bones[k] < 0 || b.weights.bones[k] >= nb) {
          fail("weights: vertex " + std::to_string(v) + " references invalid bone");
        }
        if (b.weights.weights[k] < 0.0) {
          fail("weights: vertex " + std::to_string(v) + " has a negative weight");
        }
        sum += b.weights.weights[k];
      }
      if (std::abs(sum - 1.0) > 1e-9) {
        fail("weights: vertex " + std::to_string(v) + " weights sum to " +
             format_double(sum) + ", expected 1 within 1e-9");
      }
    }
  }

  // Schema.
  {
    std::set<std::string> names;
    for (const auto& p : b.schema.parameters) {
      if (!names.insert(p.name).second) fail("schema: duplicate parameter '" + p.name + "'");
      if (p.grid.size() < 2) fail("schema: parameter '" + p.name + "' has fewer than 2 nodes");
      for (size_t i = 0; i + 1 < p.grid.size(); ++i) {
        if (!(p.grid[i] < p.grid[i + 1])) {
          fail("schema: parameter '" + p.name + "' grid not strictly increasing");
          break;
        }
      }
      if (!p.grid.empty() && (p.grid.front() != 0.0 || p.grid.back() != 1.0)) {
        fail("schema: parameter '" + p.name + "' grid must span [0,1]");
      }
      if (p.neutral < 0.0 || p.neutral > 1.0) {
        fail("schema: parameter '" + p.name + "' neutral value outside [0,1]");
      }
    }
  }

  // Targets.
  {
    std::set<std::vector<BlendConstraint>> seen;
    for (size_t t = 0; t < b.targets.size(); ++t) {
      const BlendTarget& tg = b.targets[t];
      std::set<std::int32_t> params;
      for (const BlendConstraint& c : tg.constraints) {
        if (c.param < 0 || c.param >= b.schema.size()) {
          fail("target " + std::to_string(t) + ": constraint references unknown parameter");
          continue;
        }
        if (c.node < 0 || c.node >= static_cast<int>(b.schema.parameters[c.param].grid.size())) {
          fail("target " + std::to_string(t) + ": constraint on '" +
               b.schema.parameters[c.param].name + "' references unknown grid node");
        }
        if (!params.insert(c.param).second) {
          fail("target " + std::to_string(t) + ": duplicate constraint on parameter '" +
               b.schema.parameters[c.param].name + "'");
        }
      }
      if (!seen.insert(tg.constraints).second) {
        fail("target " + std::to_string(t) + ": constraint set duplicates an earlier target");
      }
      if (tg.indices.size() != tg.offsets.size()) {
        fail("target " + std::to_string(t) + ": displacement index/offset size mismatch");
      }
      for (size_t i = 0; i < tg.indices.size(); ++i) {
        if (tg.indices[i] < 0 || tg.indices[i] >= nv) {
          fail("target " + std::to_string(t) + ": displacement references vertex " +
               std::to_string(tg.indices[i]) + " out of range");
        }
        if (i > 0 && tg.indices[i] <= tg.indices[i - 1]) {
          fail("target " + std::to_string(t) + ": displacement indices not sorted ascending");
          break;
        }
      }
    }
  }

  // Symmetry: involutive disjoint pairs, full coverage with the midline.
  {
    std::vector<int> seen(nv, 0);
    for (size_t i = 0; i < b.symmetry.pairs.size(); ++i) {
      auto [l, r] = b.symmetry.pairs[i];
      if (l < 0 || l >= nv || r < 0 || r >= nv) {
        fail("symmetry: pair " + std::to_string(i) + " references invalid vertex");
        continue;
      }
      if (l == r) fail("symmetry: pair " + std::to_string(i) + " maps a vertex to itself");
      seen[l]++;
      seen[r]++;
    }
    for (VertexIndex m : b.symmetry.midline) {
      if (m < 0 || m >= nv) {
        fail("symmetry: midline references invalid vertex");
        continue;
      }
      seen[m]++;
    }
    for (int v = 0; v < nv; ++v) {
      if (seen[v] == 0) fail("symmetry: vertex " + std::to_string(v) + " is uncovered");
      if (seen[v] > 1) fail("symmetry: vertex " + std::to_string(v) + " appears more than once");
    }
  }

  return out;
}

inline void validate_bundle(const AssetBundle& b) {
  auto violations = bundle_violations(b);
  if (!violations.empty()) {
    std::ostringstream oss;
    oss << "bundle validation failed (" << violations.size() << " violation"
        << (violations.size() == 1 ? "" : "s") << "):";
    for (const auto& v : violations) oss << "\n  - " << v;
    throw ValidationError(oss.str());
  }
}

// ---------------------------------------------------------------------------
// Exact equality (serialization round-trip oracle).

inline bool operator==(const BaseMesh& a, const BaseMesh& o) {
  if (a.faces != o.faces || a.part_labels != o.part_labels) return false;
  if (a.vertices.size() != o.vertices.size()) return false;
  for (size_t i = 0; i < a.vertices.size(); ++i) {
    if (a.vertices[i] != o.vertices[i]) return false;
  }
  return true;
}
inline bool operator==(const Bone& a, const Bone& o) {
  return a.name == o.name && a.parent == o.parent && a.head_anchors == o.head_anchors &&
         a.tail_anchors == o.tail_anchors;
}
inline bool operator==(const Skeleton& a, const Skeleton& o) {
  return a.bones == o.bones && a.root_index == o.root_index;
}
inline bool operator==(const SkinningWeights& a, const SkinningWeights& o) {
  return a.max_influences == o.max_influences && a.offsets == o.offsets && a.bones == o.bones &&
         a.weights == o.weights;
}
inline bool operator==(const SchemaParameter& a, const SchemaParameter& o) {
  return a.name == o.name && a.grid == o.grid && a.neutral == o.neutral;
}
inline bool operator==(const PhenotypeSchema& a, const PhenotypeSchema& o) {
  return a.parameters == o.parameters;
}
inline bool operator==(const BlendTarget& a, const BlendTarget& o) {
  if (a.constraints != o.constraints || a.indices != o.indices) return false;
  if (a.offsets.size() != o.offsets.size()) return false;
  for (size_t i = 0; i < a.offsets.size(); ++i) {
    if (a.offsets[i] != o.offsets[i]) return false;
  }
  return true;
}
inline bool operator==(const SymmetryMap& a, const SymmetryMap& o) {
  return a.pairs == o.pairs && a.midline == o.midline;
}
inline bool operator==(const AssetBundle& a, const AssetBundle& o) {
  return a.mesh == o.mesh && a.skeleton == o.skeleton && a.weights == o.weights &&
         a.schema == o.schema && a.targets == o.targets && a.symmetry == o.symmetry;
}

// ---------------------------------------------------------------------------
// Skeleton-subset view: keeps the listed bones (which must form a connected
// subtree containing the root) and reassigns influences of dropped bones to
// their nearest kept ancestor.

inline AssetBundle subset_skeleton(const AssetBundle& bundle, const std::vector<std::string>& keep) {
  const Skeleton& skel = bundle.skeleton;
  std::vector<int> kept_index(skel.bones.size(), -1);
  std::vector<int> kept;
  for (const std::string& name : keep) {
    int b = skel.find(name);
    if (b < 0) throw DomainError("subset_skeleton: unknown bone '" + name + "'");
    if (kept_index[b] != -1) continue;
    kept_index[b] = 0;  // mark; final indices assigned in skeleton order
    kept.push_back(b);
  }
  std::sort(kept.begin(), kept.end());
  for (size_t i = 0; i < kept.size(); ++i) kept_index[kept[i]] = static_cast<int>(i);

  auto nearest_kept_ancestor = [&](int b) {
    int cur = b;
    while (cur != -1 && kept_index[cur] < 0) cur = skel.bones[cur].parent;
    return cur;
  };
  if (nearest_kept_ancestor(skel.root_index) != skel.root_index) {
    throw DomainError("subset_skeleton: subset must contain the root bone");
  }

  AssetBundle out = bundle;
  out.skeleton.bones.clear();
  for (int b : kept) {
    Bone bone = skel.bones[b];
    if (bone.parent != -1) {
      int anc = nearest_kept_ancestor(bone.parent);
      if (anc == -1) throw DomainError("subset_skeleton: subset is disconnected at '" + bone.name + "'");
      bone.parent = kept_index[anc];
    }
    out.skeleton.bones.push_back(std::move(bone));
  }
  out.skeleton.root_index = kept_index[skel.root_index];

  // Remap weights, merging influences that collapse onto the same ancestor.
  SkinningWeights w;
  w.max_influences = bundle.weights.max_influences;
  w.offsets.push_back(0);
  for (int v = 0; v < bundle.vertex_count(); ++v) {
    std::map<int, double> acc;
    for (int k = bundle.weights.begin(v); k < bundle.weights.end(v); ++k) {
      int anc = nearest_kept_ancestor(bundle.weights.bones[k]);
      acc[kept_index[anc]] += bundle.weights.weights[k];
    }
    for (auto [bone, weight] : acc) {
      w.bones.push_back(bone);
      w.weights.push_back(weight);
    }
    w.offsets.push_back(static_cast<std::int32_t>(w.bones.size()));
  }
  out.weights = std::move(w);
  out.mesh.part_labels = compute_part_labels(out.mesh, out.weights, out.skeleton);
  return out;
}

}  // namespace anny
