#include "testutil.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace anny;

namespace {

// Joint rotation that realizes a desired world rotation at bone `b` when the
// rest of the chain is at identity: Rot(r) = A^T * Q * A (conjugation into
// the bone frame), assuming all ancestors stay at rest.
Vec3 local_rotation_for_world(const AssetBundle& bundle, int bone, const Mat3& world_delta) {
  auto rest = shape(bundle, PhenotypeVector{});
  auto bt = rest_transforms(rest, bundle.skeleton);
  Mat3 A = bt.rest[bone].R;
  return log_rotation(A.transpose() * world_delta * A);
}

}  // namespace

TEST_CASE("bvh structure invariants") {
  SECTION("single triangle gives a single leaf with the triangle's box") {
    std::vector<Vec3> verts = {{0, 0, 0}, {1, 0, 0}, {0, 2, 3}};
    std::vector<Tri> tris = {{0, 1, 2}};
    Bvh bvh(verts, tris);
    REQUIRE(bvh.nodes().size() == 1);
    REQUIRE(bvh.nodes()[0].is_leaf());
    REQUIRE(bvh.nodes()[0].box.lo == Vec3(0, 0, 0));
    REQUIRE(bvh.nodes()[0].box.hi == Vec3(1, 2, 3));
  }
  SECTION("two distant triangles: root box is the union") {
    std::vector<Vec3> verts = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0},
                               {10, 10, 10}, {11, 10, 10}, {10, 11, 10}};
    std::vector<Tri> tris = {{0, 1, 2}, {3, 4, 5}};
    Bvh bvh(verts, tris);
    REQUIRE(bvh.nodes()[0].box.lo == Vec3(0, 0, 0));
    REQUIRE(bvh.nodes()[0].box.hi == Vec3(11, 11, 10));
  }
  SECTION("every toy triangle is inside its leaf and all ancestors") {
    auto bundle = generate_toy_humanoid(0, ToyResolution::Fine);
    auto tris = triangulate(bundle.mesh.faces);
    Bvh bvh(bundle.mesh.vertices, tris);
    // every triangle appears exactly once
    std::vector<std::int32_t> order = bvh.order();
    std::sort(order.begin(), order.end());
    for (size_t i = 0; i < order.size(); ++i) REQUIRE(order[i] == static_cast<std::int32_t>(i));
    // containment along a root-to-leaf walk
    std::function<void(int, std::vector<int>&)> walk = [&](int node, std::vector<int>& ancestry) {
      ancestry.push_back(node);
      const auto& n = bvh.nodes()[node];
      if (n.is_leaf()) {
        for (std::int32_t i = n.begin; i < n.end; ++i) {
          const Aabb& tb = bvh.tri_box(bvh.order()[i]);
          for (int a : ancestry) REQUIRE(bvh.nodes()[a].box.contains(tb));
        }
      } else {
        walk(n.left, ancestry);
        walk(n.right, ancestry);
      }
      ancestry.pop_back();
    };
    std::vector<int> ancestry;
    walk(0, ancestry);
  }
  SECTION("empty input is rejected") {
    std::vector<Vec3> verts;
    std::vector<Tri> tris;
    REQUIRE_THROWS_AS(Bvh(verts, tris), DomainError);
  }
}

TEST_CASE("triangle-triangle predicate") {
  Vec3 a0(0, 0, 0), a1(1, 0, 0), a2(0, 1, 0);
  SECTION("piercing triangles intersect") {
    Vec3 b0(0.2, 0.2, -0.5), b1(0.3, 0.2, 0.5), b2(0.25, 0.4, 0.5);
    REQUIRE(tri_tri_intersect(a0, a1, a2, b0, b1, b2));
    REQUIRE(tri_tri_intersect(b0, b1, b2, a0, a1, a2));
  }
  SECTION("separated triangles do not intersect") {
    Vec3 b0(0, 0, 1), b1(1, 0, 1), b2(0, 1, 1);
    REQUIRE_FALSE(tri_tri_intersect(a0, a1, a2, b0, b1, b2));
  }
  SECTION("coplanar overlapping triangles count as intersecting") {
    Vec3 b0(0.1, 0.1, 0), b1(0.9, 0.1, 0), b2(0.1, 0.9, 0);
    REQUIRE(tri_tri_intersect(a0, a1, a2, b0, b1, b2));
  }
  SECTION("coplanar disjoint triangles do not intersect") {
    Vec3 b0(2, 2, 0), b1(3, 2, 0), b2(2, 3, 0);
    REQUIRE_FALSE(tri_tri_intersect(a0, a1, a2, b0, b1, b2));
  }
  SECTION("symmetry on random pairs") {
    std::mt19937_64 rng(121);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int i = 0; i < 500; ++i) {
      Vec3 p[3], q[3];
      for (int k = 0; k < 3; ++k) {
        p[k] = Vec3(u(rng), u(rng), u(rng));
        q[k] = Vec3(u(rng), u(rng), u(rng)) * 0.7;
      }
      REQUIRE(tri_tri_intersect(p[0], p[1], p[2], q[0], q[1], q[2]) ==
              tri_tri_intersect(q[0], q[1], q[2], p[0], p[1], p[2]));
    }
  }
}

TEST_CASE("shared-vertex pairs are never collisions") {
  Tri a{0, 1, 2}, b{2, 3, 4}, c{5, 6, 7};
  REQUIRE(tris_share_vertex(a, b));
  REQUIRE_FALSE(tris_share_vertex(a, c));
}

TEST_CASE("rest pose has no self-collisions") {
  auto bundle = generate_toy_humanoid(0, ToyResolution::Fine);
  auto r = deform(bundle, PhenotypeVector{}, Pose::identity(bundle.bone_count()));
  auto report = self_collide(r.vertices, bundle);
  REQUIRE_FALSE(report.colliding);
  // also clean without the adjacency exemption (boxes have gaps at joints)
  auto report2 = self_collide(r.vertices, bundle, false);
  REQUIRE_FALSE(report2.colliding);
  REQUIRE(testutil::brute_force_collisions(r.vertices, bundle, true).empty());
}

TEST_CASE("bvh collision equals brute force on random poses") {
  auto bundle = generate_toy_humanoid(0, ToyResolution::Fine);
  std::mt19937_64 rng(131);
  int colliding_poses = 0;
  for (int trial = 0; trial < 8; ++trial) {
    auto pose = testutil::random_pose(bundle, rng, 1.2, 0.1);
    auto r = deform(bundle, PhenotypeVector{}, pose);
    for (bool exempt : {true, false}) {
      auto report = self_collide(r.vertices, bundle, exempt);
      auto brute = testutil::brute_force_collisions(r.vertices, bundle, exempt);
      REQUIRE(report.intersecting_pairs.size() == brute.size());
      for (size_t i = 0; i < brute.size(); ++i) {
        REQUIRE(report.intersecting_pairs[i] == brute[i]);
      }
      if (report.colliding) ++colliding_poses;
    }
  }
  REQUIRE(colliding_poses > 0);  // the random sweep actually exercised hits
}

TEST_CASE("hyper-bent elbow collides forearm with upper arm") {
  auto bundle = generate_toy_humanoid(0, ToyResolution::Fine);
  int upper = bundle.skeleton.find("upperarm.l");
  int fore = bundle.skeleton.find("lowerarm.l");
  Pose pose = Pose::identity(bundle.bone_count());
  // Fold the forearm back over the upper arm: world rotation about +Z at
  // the elbow, slightly less than pi so the boxes overlap lengthwise.
  pose.joint_rotations[fore] = local_rotation_for_world(bundle, fore, rodrigues(Vec3(0, 0, 2.9)));
  auto r = deform(bundle, PhenotypeVector{}, pose);
  auto report = self_collide(r.vertices, bundle, /*exempt_adjacent=*/false);
  REQUIRE(report.colliding);
  bool found = false;
  for (const auto& p : report.intersecting_pairs) {
    if ((p.part_a == upper && p.part_b == fore) || (p.part_a == fore && p.part_b == upper)) {
      found = true;
    }
  }
  REQUIRE(found);
  // oracle agreement on the constructed pose
  auto brute = testutil::brute_force_collisions(r.vertices, bundle, false);
  REQUIRE(report.intersecting_pairs.size() == brute.size());

  // parent/child exemption suppresses exactly these pairs
  auto exempted = self_collide(r.vertices, bundle, true);
  for (const auto& p : exempted.intersecting_pairs) {
    REQUIRE_FALSE(parts_adjacent(bundle.skeleton, p.part_a, p.part_b));
  }
}

TEST_CASE("arm folded across the chest collides with the torso") {
  auto bundle = generate_toy_humanoid(0, ToyResolution::Fine);
  int upper = bundle.skeleton.find("upperarm.l");
  int fore = bundle.skeleton.find("lowerarm.l");
  int spine = bundle.skeleton.find("spine");
  Pose pose = Pose::identity(bundle.bone_count());
  pose.joint_rotations[upper] =
      local_rotation_for_world(bundle, upper, rodrigues(Vec3(0, 0, M_PI - 0.15)));
  auto r = deform(bundle, PhenotypeVector{}, pose);
  auto report = self_collide(r.vertices, bundle, /*exempt_adjacent=*/true);
  REQUIRE(report.colliding);
  bool forearm_torso = false;
  for (const auto& p : report.intersecting_pairs) {
    if ((p.part_a == spine && p.part_b == fore) || (p.part_a == fore && p.part_b == spine)) {
      forearm_torso = true;
    }
  }
  REQUIRE(forearm_torso);
  auto brute = testutil::brute_force_collisions(r.vertices, bundle, true);
  REQUIRE(report.intersecting_pairs.size() == brute.size());
}

TEST_CASE("single-part meshes never collide") {
  auto bundle = generate_toy_humanoid(0, ToyResolution::Fine);
  std::fill(bundle.mesh.part_labels.begin(), bundle.mesh.part_labels.end(), 0);
  std::mt19937_64 rng(141);
  auto pose = testutil::random_pose(bundle, rng, 1.5, 0.0);
  auto r = deform(bundle, PhenotypeVector{}, pose);
  auto report = self_collide(r.vertices, bundle, false);
  REQUIRE_FALSE(report.colliding);
  REQUIRE(report.intersecting_pairs.empty());
}
