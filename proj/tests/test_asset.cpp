#include "testutil.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace anny;

TEST_CASE("toy humanoid is deterministic and seed-sensitive") {
  auto a = generate_toy_humanoid(0, ToyResolution::Fine);
  auto b = generate_toy_humanoid(0, ToyResolution::Fine);
  REQUIRE(a == b);

  auto c = generate_toy_humanoid(1, ToyResolution::Fine);
  REQUIRE(a.mesh.faces == c.mesh.faces);
  REQUIRE(a.skeleton == c.skeleton);
  bool any_differs = false;
  for (size_t i = 0; i < a.mesh.vertices.size(); ++i) {
    if (a.mesh.vertices[i] != c.mesh.vertices[i]) any_differs = true;
  }
  REQUIRE(any_differs);
}

TEST_CASE("toy humanoid meets its structural contract") {
  auto fine = generate_toy_humanoid(0, ToyResolution::Fine);
  REQUIRE(fine.bone_count() >= 10);
  REQUIRE(fine.vertex_count() >= 200);
  REQUIRE(fine.schema.size() == 2);
  REQUIRE(fine.schema.parameters[0].name == "age");
  REQUIRE(fine.schema.parameters[0].grid ==
          std::vector<double>{0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0});
  REQUIRE(fine.schema.parameters[1].grid == std::vector<double>{0.0, 0.5, 1.0});
  // one target per grid node (4 + 3) plus a two-parameter target
  REQUIRE(fine.targets.size() == 8);
  int two_param = 0;
  for (const auto& t : fine.targets) {
    if (t.constraints.size() == 2) ++two_param;
  }
  REQUIRE(two_param == 1);

  auto coarse = generate_toy_humanoid(0, ToyResolution::Coarse);
  REQUIRE(coarse.vertex_count() < fine.vertex_count());
  REQUIRE(coarse.bone_count() == fine.bone_count());
}

TEST_CASE("toy humanoid is exactly mirror symmetric") {
  auto bundle = generate_toy_humanoid(3, ToyResolution::Fine);
  for (auto [l, r] : bundle.symmetry.pairs) {
    REQUIRE(bundle.mesh.vertices[l] == reflect_sagittal(bundle.mesh.vertices[r]));
  }
  // targets preserve symmetry too
  auto sigma = bundle.symmetry.involution(bundle.vertex_count());
  for (const auto& t : bundle.targets) {
    std::map<VertexIndex, Vec3> d;
    for (size_t i = 0; i < t.indices.size(); ++i) d[t.indices[i]] = t.offsets[i];
    for (const auto& [v, off] : d) {
      auto it = d.find(sigma[v]);
      REQUIRE(it != d.end());
      REQUIRE(off == reflect_sagittal(it->second));
    }
  }
}

TEST_CASE("skinning weights sum to one per vertex") {
  for (auto res : {ToyResolution::Fine, ToyResolution::Coarse}) {
    auto bundle = generate_toy_humanoid(5, res);
    for (int v = 0; v < bundle.vertex_count(); ++v) {
      double sum = 0;
      for (int k = bundle.weights.begin(v); k < bundle.weights.end(v); ++k) {
        sum += bundle.weights.weights[k];
      }
      REQUIRE(std::abs(sum - 1.0) <= 1e-9);
    }
  }
}

TEST_CASE("bundle round-trips exactly") {
  auto bundle = generate_toy_humanoid(7, ToyResolution::Fine);
  auto dir = testutil::temp_dir("bundle");
  auto path = dir / "toy.anny";
  save_bundle(bundle, path);
  AssetBundle back = load_bundle(path);
  REQUIRE(back == bundle);
  REQUIRE(back.schema.parameters[0].neutral == 2.0 / 3.0);
  // byte-identical double save
  REQUIRE(serialize_bundle(back) == serialize_bundle(bundle));

  SECTION("zero-target bundle round-trips") {
    AssetBundle no_targets = bundle;
    no_targets.targets.clear();
    save_bundle(no_targets, path);
    REQUIRE(load_bundle(path) == no_targets);
  }
}

TEST_CASE("bundle load failure modes") {
  auto dir = testutil::temp_dir("bundle_err");
  SECTION("empty file is a parse failure") {
    auto path = dir / "empty.anny";
    std::ofstream(path).close();
    REQUIRE_THROWS_AS(load_bundle(path), ParseError);
  }
  SECTION("bad magic is a parse failure") {
    auto path = dir / "bad.anny";
    std::ofstream(path) << "garbage that is long enough to pass the size check";
    REQUIRE_THROWS_AS(load_bundle(path), ParseError);
  }
  SECTION("truncated payload is a parse failure") {
    auto bundle = generate_toy_humanoid(0, ToyResolution::Coarse);
    std::string bytes = serialize_bundle(bundle);
    bytes.resize(bytes.size() / 2);
    REQUIRE_THROWS_AS(deserialize_bundle(bytes), ParseError);
  }
  SECTION("face index out of range names the face") {
    auto bundle = generate_toy_humanoid(0, ToyResolution::Coarse);
    bundle.mesh.faces[5][2] = 100000;
    std::string bytes = serialize_bundle(bundle);
    try {
      deserialize_bundle(bytes);
      FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
      REQUIRE(std::string(e.what()).find("face 5") != std::string::npos);
    }
  }
  SECTION("save to an unwritable destination is an IO failure") {
    auto bundle = generate_toy_humanoid(0, ToyResolution::Coarse);
    REQUIRE_THROWS_AS(save_bundle(bundle, dir), IoError);  // directory, not a file
  }
}

TEST_CASE("validation catches cross-reference and invariant violations") {
  auto bundle = generate_toy_humanoid(0, ToyResolution::Coarse);
  SECTION("weight sum violation") {
    AssetBundle b = bundle;
    b.weights.weights[0] += 1e-6;
    auto v = bundle_violations(b);
    REQUIRE_FALSE(v.empty());
    REQUIRE(v[0].find("weights") != std::string::npos);
  }
  SECTION("duplicate target constraint sets") {
    AssetBundle b = bundle;
    b.targets.push_back(b.targets[0]);
    REQUIRE_THROWS_AS(validate_bundle(b), ValidationError);
  }
  SECTION("two roots") {
    AssetBundle b = bundle;
    b.skeleton.bones[1].parent = -1;
    REQUIRE_THROWS_AS(validate_bundle(b), ValidationError);
  }
  SECTION("uncovered symmetry vertex") {
    AssetBundle b = bundle;
    b.symmetry.pairs.pop_back();
    REQUIRE_THROWS_AS(validate_bundle(b), ValidationError);
  }
  SECTION("degenerate face") {
    AssetBundle b = bundle;
    b.mesh.faces[0][1] = b.mesh.faces[0][0];
    REQUIRE_THROWS_AS(validate_bundle(b), ValidationError);
  }
}

TEST_CASE("obj export formats the unit cube exactly") {
  std::vector<Vec3> verts = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                             {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
  std::vector<Quad> faces = {{0, 3, 2, 1}, {4, 5, 6, 7}, {0, 1, 5, 4},
                             {1, 2, 6, 5}, {2, 3, 7, 6}, {3, 0, 4, 7}};
  std::string obj = obj_string(verts, faces);
  size_t v_lines = 0, f_lines = 0;
  std::istringstream ss(obj);
  std::string line;
  while (std::getline(ss, line)) {
    if (line.rfind("v ", 0) == 0) ++v_lines;
    if (line.rfind("f ", 0) == 0) ++f_lines;
  }
  REQUIRE(v_lines == 8);
  REQUIRE(f_lines == 6);
  REQUIRE(obj.find("v 0 0 0\n") != std::string::npos);
  REQUIRE(obj.find("f 1 4 3 2\n") != std::string::npos);  // 1-based indices
}

TEST_CASE("ply export reparses with an independent reader") {
  auto bundle = generate_toy_humanoid(0, ToyResolution::Fine);
  auto dir = testutil::temp_dir("ply");
  auto path = dir / "toy.ply";
  export_mesh(bundle.mesh.vertices, bundle.mesh.faces, path, MeshFormat::Ply);
  auto reparsed = testutil::reparse_ply(path);
  REQUIRE(reparsed.vertex_count == bundle.mesh.vertices.size());
  REQUIRE(reparsed.face_count == bundle.mesh.faces.size());
  REQUIRE(reparsed.vertex_property_count == 3);
  for (size_t i = 0; i < 10; ++i) {
    REQUIRE(reparsed.vertex_rows[i][0] == bundle.mesh.vertices[i].x());
    REQUIRE(reparsed.vertex_rows[i][1] == bundle.mesh.vertices[i].y());
  }

  SECTION("triangulated mode doubles the face count") {
    export_mesh(bundle.mesh.vertices, bundle.mesh.faces, path, MeshFormat::Ply,
                PlyFaceMode::Triangulated);
    REQUIRE(testutil::reparse_ply(path).face_count == 2 * bundle.mesh.faces.size());
  }
  SECTION("empty vertex list is an error") {
    REQUIRE_THROWS_AS(export_mesh({}, {}, path, MeshFormat::Ply), DomainError);
  }
}

TEST_CASE("mesh loaders round-trip exports") {
  auto bundle = generate_toy_humanoid(0, ToyResolution::Coarse);
  auto dir = testutil::temp_dir("meshio");
  for (auto fmt : {MeshFormat::Obj, MeshFormat::Ply}) {
    auto path = dir / (fmt == MeshFormat::Obj ? "m.obj" : "m.ply");
    export_mesh(bundle.mesh.vertices, bundle.mesh.faces, path, fmt);
    LoadedMesh m = load_mesh(path);
    REQUIRE(m.vertices.size() == bundle.mesh.vertices.size());
    REQUIRE(m.quads.size() == bundle.mesh.faces.size());
    for (size_t i = 0; i < m.vertices.size(); ++i) {
      REQUIRE(m.vertices[i] == bundle.mesh.vertices[i]);  // exact decimal round-trip
    }
  }
}

TEST_CASE("skeleton subset keeps a valid bundle") {
  auto bundle = generate_toy_humanoid(0, ToyResolution::Fine);
  auto sub = subset_skeleton(bundle, {"root", "spine", "head", "upperarm.l", "upperarm.r",
                                      "upperleg.l", "upperleg.r"});
  REQUIRE(sub.bone_count() == 7);
  validate_bundle(sub);
  // forearm influence collapsed onto the upper arm
  int fa = bundle.skeleton.find("lowerarm.l");
  REQUIRE(fa >= 0);
  REQUIRE(sub.skeleton.find("lowerarm.l") == -1);

  SECTION("subset without the root is rejected") {
    REQUIRE_THROWS_AS(subset_skeleton(bundle, {"spine", "head"}), DomainError);
  }
}

TEST_CASE("part labels follow the dominant bone") {
  auto bundle = generate_toy_humanoid(0, ToyResolution::Fine);
  // 11 distinct parts, one per box
  std::set<std::int32_t> labels(bundle.mesh.part_labels.begin(), bundle.mesh.part_labels.end());
  REQUIRE(labels.size() == bundle.skeleton.bones.size());
  REQUIRE(parts_adjacent(bundle.skeleton, 0, 1));
  REQUIRE_FALSE(parts_adjacent(bundle.skeleton, 1, 4));  // spine vs lowerarm.l
}
