#pragma once

// Shared fixtures and independent oracles for the test suites. Oracles here
// are deliberately written as plain brute-force code, independent of the
// library's accelerated paths.

#include "anny/anny.hpp"

#include <filesystem>
#include <random>
#include <sstream>

namespace testutil {

using namespace anny;

inline std::filesystem::path temp_dir(const std::string& tag) {
  auto dir = std::filesystem::temp_directory_path() / ("anny_test_" + tag);
  std::filesystem::create_directories(dir);
  return dir;
}

// A straight 3-bone chain along +Y with square rings of anchor vertices at
// y = 0, 1, 2, 3. Ring i vertices: indices 4i..4i+3. Bone b spans ring b to
// ring b+1; ring vertices are fully bound to the bone below them (ring 0 to
// bone 0) so hand-computed rigid oracles apply.
inline AssetBundle make_chain_bundle() {
  AssetBundle b;
  const double h = 0.05;
  for (int ring = 0; ring < 4; ++ring) {
    double y = ring;
    b.mesh.vertices.push_back(Vec3(+h, y, +h));
    b.mesh.vertices.push_back(Vec3(-h, y, +h));
    b.mesh.vertices.push_back(Vec3(-h, y, -h));
    b.mesh.vertices.push_back(Vec3(+h, y, -h));
  }
  auto ring_idx = [](int ring, int k) { return static_cast<VertexIndex>(4 * ring + (k % 4)); };
  for (int seg = 0; seg < 3; ++seg) {
    for (int k = 0; k < 4; ++k) {
      b.mesh.faces.push_back({ring_idx(seg, k + 1), ring_idx(seg, k), ring_idx(seg + 1, k),
                              ring_idx(seg + 1, k + 1)});
    }
  }
  for (int bone = 0; bone < 3; ++bone) {
    Bone bn;
    bn.name = "bone" + std::to_string(bone);
    bn.parent = bone == 0 ? -1 : bone - 1;
    for (int k = 0; k < 4; ++k) {
      bn.head_anchors.push_back(ring_idx(bone, k));
      bn.tail_anchors.push_back(ring_idx(bone + 1, k));
    }
    b.skeleton.bones.push_back(bn);
  }
  b.skeleton.root_index = 0;
  b.weights.max_influences = 4;
  b.weights.offsets.push_back(0);
  for (int ring = 0; ring < 4; ++ring) {
    for (int k = 0; k < 4; ++k) {
      b.weights.bones.push_back(ring == 0 ? 0 : ring - 1);
      b.weights.weights.push_back(1.0);
      b.weights.offsets.push_back(static_cast<std::int32_t>(b.weights.bones.size()));
    }
  }
  b.mesh.part_labels = compute_part_labels(b.mesh, b.weights, b.skeleton);
  b.schema.parameters = {{"size", {0.0, 0.5, 1.0}, 0.5}};
  BlendTarget grow;
  grow.constraints = {{0, 2}};
  for (int v = 0; v < 16; ++v) {
    grow.indices.push_back(v);
    grow.offsets.push_back(Vec3(0.0, 0.1 * (v / 4), 0.0));  // stretch upward
  }
  b.targets.push_back(BlendTarget{{{0, 0}}, {}, {}});
  b.targets.push_back(BlendTarget{{{0, 1}}, {}, {}});
  b.targets.push_back(grow);
  for (int ring = 0; ring < 4; ++ring) {
    b.symmetry.pairs.push_back({ring_idx(ring, 0), ring_idx(ring, 1)});
    b.symmetry.pairs.push_back({ring_idx(ring, 3), ring_idx(ring, 2)});
  }
  validate_bundle(b);
  return b;
}

// Brute-force cross-part collision oracle: same predicate, exhaustive
// enumeration.
inline std::vector<CollisionReport::Pair> brute_force_collisions(
    const std::vector<Vec3>& verts, const AssetBundle& bundle, bool exempt_adjacent) {
  std::vector<Tri> tris = triangulate(bundle.mesh.faces);
  std::vector<CollisionReport::Pair> out;
  for (std::int32_t a = 0; a < static_cast<std::int32_t>(tris.size()); ++a) {
    for (std::int32_t b = a + 1; b < static_cast<std::int32_t>(tris.size()); ++b) {
      std::int32_t pa = bundle.mesh.part_labels[a / 2];
      std::int32_t pb = bundle.mesh.part_labels[b / 2];
      if (pa == pb) continue;
      if (exempt_adjacent && parts_adjacent(bundle.skeleton, pa, pb)) continue;
      if (tris_share_vertex(tris[a], tris[b])) continue;
      if (tri_tri_intersect(verts[tris[a][0]], verts[tris[a][1]], verts[tris[a][2]],
                            verts[tris[b][0]], verts[tris[b][1]], verts[tris[b][2]])) {
        out.push_back({a, b, pa, pb});
      }
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

// Brute-force closest point over all triangles, ascending index scan.
struct BruteClosest {
  double sq_dist;
  Vec3 point;
  std::int32_t tri;
};

inline BruteClosest brute_force_closest(const Vec3& p, const std::vector<Vec3>& verts,
                                        const std::vector<Tri>& tris) {
  BruteClosest best{std::numeric_limits<double>::infinity(), Vec3::Zero(), -1};
  for (std::int32_t t = 0; t < static_cast<std::int32_t>(tris.size()); ++t) {
    auto r = closest_point_triangle(p, verts[tris[t][0]], verts[tris[t][1]], verts[tris[t][2]]);
    if (r.sq_dist < best.sq_dist) best = {r.sq_dist, r.point, t};
  }
  return best;
}

// Random pose generator shared by collision / jacobian tests.
inline Pose random_pose(const AssetBundle& bundle, std::mt19937_64& rng, double joint_scale = 0.8,
                        double trans_scale = 0.3) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Pose pose = Pose::identity(bundle.bone_count());
  for (auto& r : pose.joint_rotations) r = Vec3(u(rng), u(rng), u(rng)) * joint_scale;
  pose.root_rotation = Vec3(u(rng), u(rng), u(rng)) * joint_scale;
  pose.root_translation = Vec3(u(rng), u(rng), u(rng)) * trans_scale;
  return pose;
}

inline PhenotypeVector random_phenotypes_away_from_nodes(const AssetBundle& bundle,
                                                         std::mt19937_64& rng,
                                                         double margin = 0.02) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  PhenotypeVector pv;
  for (const auto& p : bundle.schema.parameters) {
    double v;
    while (true) {
      v = u(rng);
      bool ok = true;
      for (double g : p.grid) {
        if (std::abs(v - g) < margin) ok = false;
      }
      if (ok) break;
    }
    pv.values[p.name] = v;
  }
  return pv;
}

// Independent minimal ASCII PLY reparse used as the export oracle (kept
// separate from anny::load_mesh_ply on purpose).
struct ReparsedPly {
  size_t vertex_count = 0;
  size_t face_count = 0;
  size_t vertex_property_count = 0;
  std::vector<std::vector<double>> vertex_rows;
};

inline ReparsedPly reparse_ply(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("reparse_ply: cannot open file");
  ReparsedPly out;
  std::string line;
  bool in_vertex_element = false;
  std::getline(f, line);
  if (line != "ply") throw std::runtime_error("reparse_ply: not a ply");
  while (std::getline(f, line) && line != "end_header") {
    std::istringstream ls(line);
    std::string tag, a, b;
    ls >> tag >> a >> b;
    if (tag == "element" && a == "vertex") {
      out.vertex_count = std::stoul(b);
      in_vertex_element = true;
    } else if (tag == "element") {
      if (a == "face") out.face_count = std::stoul(b);
      in_vertex_element = false;
    } else if (tag == "property" && in_vertex_element && a != "list") {
      ++out.vertex_property_count;
    }
  }
  for (size_t i = 0; i < out.vertex_count; ++i) {
    std::getline(f, line);
    std::istringstream ls(line);
    std::vector<double> row;
    double v;
    while (ls >> v) row.push_back(v);
    out.vertex_rows.push_back(row);
  }
  return out;
}

}  // namespace testutil
