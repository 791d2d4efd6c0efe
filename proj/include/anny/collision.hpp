#pragma once

// Self-intersection of the posed mesh between different body parts.
// One BVH per part, pairwise part-vs-part traversal; triangle pairs sharing
// a vertex index never count (contact at shared vertices/edges is not a
// collision). Parts whose bones are parent/child can be exempted, since
// natural creasing at joints would otherwise always collide.

#include "anny/asset.hpp"
#include "anny/bvh.hpp"

#include <map>

namespace anny {

struct CollisionReport {
  struct Pair {
    std::int32_t tri_a = 0, tri_b = 0;  // triangulated-face indices (quad f -> tris 2f, 2f+1)
    std::int32_t part_a = 0, part_b = 0;
    bool operator==(const Pair&) const = default;
    bool operator<(const Pair& o) const {
      return tri_a != o.tri_a ? tri_a < o.tri_a : tri_b < o.tri_b;
    }
  };
  std::vector<Pair> intersecting_pairs;
  bool colliding = false;
};

inline bool tris_share_vertex(const Tri& a, const Tri& b) {
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      if (a[i] == b[j]) return true;
    }
  }
  return false;
}

// Cross-part triangle intersections on the posed vertices. Triangle part =
// part label of its source quad.
inline CollisionReport self_collide(const std::vector<Vec3>& posed_vertices,
                                    const AssetBundle& bundle, bool exempt_adjacent = true) {
  const std::vector<Tri> tris = triangulate(bundle.mesh.faces);
  auto part_of = [&bundle](std::int32_t tri) { return bundle.mesh.part_labels[tri / 2]; };

  std::map<std::int32_t, std::vector<std::int32_t>> part_tris;
  for (std::int32_t t = 0; t < static_cast<std::int32_t>(tris.size()); ++t) {
    part_tris[part_of(t)].push_back(t);
  }

  std::vector<std::int32_t> parts;
  std::map<std::int32_t, Bvh> trees;
  for (auto& [part, ids] : part_tris) {
    parts.push_back(part);
    trees.emplace(part, Bvh(posed_vertices, tris, ids));
  }

  CollisionReport report;
  for (size_t i = 0; i < parts.size(); ++i) {
    for (size_t j = i + 1; j < parts.size(); ++j) {
      std::int32_t pa = parts[i], pb = parts[j];
      if (exempt_adjacent && parts_adjacent(bundle.skeleton, pa, pb)) continue;
      Bvh::traverse_pairs(trees.at(pa), trees.at(pb), [&](std::int32_t ta, std::int32_t tb) {
        if (tris_share_vertex(tris[ta], tris[tb])) return;
        const Tri& a = tris[ta];
        const Tri& b = tris[tb];
        if (tri_tri_intersect(posed_vertices[a[0]], posed_vertices[a[1]], posed_vertices[a[2]],
                              posed_vertices[b[0]], posed_vertices[b[1]], posed_vertices[b[2]])) {
          CollisionReport::Pair pair;
          pair.tri_a = std::min(ta, tb);
          pair.tri_b = std::max(ta, tb);
          pair.part_a = part_of(pair.tri_a);
          pair.part_b = part_of(pair.tri_b);
          report.intersecting_pairs.push_back(pair);
        }
      });
    }
  }
  std::sort(report.intersecting_pairs.begin(), report.intersecting_pairs.end());
  report.colliding = !report.intersecting_pairs.empty();
  return report;
}

}  // namespace anny
