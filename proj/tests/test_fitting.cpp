#include "testutil.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace anny;

TEST_CASE("closest point on a triangle") {
  Vec3 v0(0, 0, 0), v1(2, 0, 0), v2(0, 2, 0);
  SECTION("point on the surface has zero distance and reproducing barycentrics") {
    Vec3 p(0.5, 0.5, 0.0);
    auto r = closest_point_triangle(p, v0, v1, v2);
    REQUIRE(r.sq_dist < 1e-28);
    Vec3 reproduced = r.bary[0] * v0 + r.bary[1] * v1 + r.bary[2] * v2;
    REQUIRE((reproduced - p).norm() < 1e-14);
    REQUIRE(r.bary.minCoeff() >= 0.0);
    REQUIRE(std::abs(r.bary.sum() - 1.0) < 1e-12);
  }
  SECTION("point above the centroid is at exactly its height") {
    Vec3 centroid = (v0 + v1 + v2) / 3.0;
    auto r = closest_point_triangle(centroid + Vec3(0, 0, 0.7), v0, v1, v2);
    REQUIRE(std::sqrt(r.sq_dist) == Catch::Approx(0.7).margin(1e-12));
    REQUIRE((r.point - centroid).norm() < 1e-12);
  }
  SECTION("region cases: edge and vertex clamps") {
    auto edge = closest_point_triangle(Vec3(1.0, -1.0, 0), v0, v1, v2);
    REQUIRE((edge.point - Vec3(1.0, 0, 0)).norm() < 1e-12);
    auto vert = closest_point_triangle(Vec3(3.0, -1.0, 0), v0, v1, v2);
    REQUIRE((vert.point - v1).norm() < 1e-12);
  }
}

TEST_CASE("bvh closest point equals brute force exactly") {
  auto bundle = generate_toy_humanoid(0, ToyResolution::Fine);
  auto tris = triangulate(bundle.mesh.faces);
  Bvh bvh(bundle.mesh.vertices, tris);
  std::mt19937_64 rng(161);
  std::uniform_real_distribution<double> u(-1.0, 2.0);
  for (int i = 0; i < 2000; ++i) {
    Vec3 p(u(rng), u(rng), u(rng));
    auto fast = bvh.closest_point(p);
    auto brute = testutil::brute_force_closest(p, bundle.mesh.vertices, tris);
    REQUIRE(fast.sq_dist == brute.sq_dist);  // identical arithmetic, identical result
    REQUIRE(fast.tri == brute.tri);
  }
}

TEST_CASE("point_to_mesh returns valid barycentrics") {
  auto bundle = generate_toy_humanoid(0, ToyResolution::Fine);
  auto tris = triangulate(bundle.mesh.faces);
  Bvh bvh(bundle.mesh.vertices, tris);
  auto r = point_to_mesh(Vec3(0.05, 1.2, 0.3), bvh);
  REQUIRE(r.triangle >= 0);
  REQUIRE(r.bary.minCoeff() >= 0.0);
  REQUIRE(std::abs(r.bary.sum() - 1.0) < 1e-12);
  const Tri& t = tris[r.triangle];
  Vec3 reproduced = r.bary[0] * bundle.mesh.vertices[t[0]] +
                    r.bary[1] * bundle.mesh.vertices[t[1]] + r.bary[2] * bundle.mesh.vertices[t[2]];
  REQUIRE((reproduced - r.closest).norm() < 1e-12);
}

TEST_CASE("surface sampling is deterministic and on-surface") {
  auto bundle = generate_toy_humanoid(0, ToyResolution::Fine);
  auto pts = sample_surface(bundle.mesh.vertices, bundle.mesh.faces, 500, 42);
  auto pts2 = sample_surface(bundle.mesh.vertices, bundle.mesh.faces, 500, 42);
  REQUIRE(pts.size() == 500);
  for (size_t i = 0; i < pts.size(); ++i) REQUIRE(pts[i] == pts2[i]);
  auto tris = triangulate(bundle.mesh.faces);
  Bvh bvh(bundle.mesh.vertices, tris);
  for (const auto& p : pts) {
    REQUIRE(bvh.closest_point(p).sq_dist < 1e-24);
  }
}

TEST_CASE("noiseless self-scan from ground truth is a fixed point") {
  auto bundle = generate_toy_humanoid(0, ToyResolution::Fine);
  PhenotypeVector gt_phen = PhenotypeVector::of({{"age", 0.55}, {"weight", 0.35}});
  Pose gt_pose = Pose::identity(bundle.bone_count());
  gt_pose.joint_rotations[3] = Vec3(0.1, 0.2, -0.1);
  gt_pose.joint_rotations[7] = Vec3(-0.2, 0.0, 0.15);
  auto posed = deform(bundle, gt_phen, gt_pose);
  ScanCloud scan;
  scan.points = sample_surface(posed.vertices, bundle.mesh.faces, 3000, 7);

  FitConfig config;
  config.max_outer_iters = 10;
  config.seed = 3;
  FitResult result = fit_scan(bundle, scan, config, nullptr, {{gt_phen, gt_pose}});
  REQUIRE(result.mean_error < 1e-6);
  // zero parameter drift
  for (const auto& [name, value] : gt_phen.values) {
    REQUIRE(result.phenotypes.values.at(name) == Catch::Approx(value).margin(1e-9));
  }
  for (int b = 0; b < bundle.bone_count(); ++b) {
    REQUIRE((result.pose.joint_rotations[b] - gt_pose.joint_rotations[b]).norm() < 1e-9);
  }
}

TEST_CASE("degenerate scans are rejected") {
  auto bundle = generate_toy_humanoid(0, ToyResolution::Fine);
  ScanCloud scan;
  scan.points = {Vec3(0, 1, 0), Vec3(0, 1.2, 0)};
  scan.regions = {ScanRegion::Excluded, ScanRegion::Excluded};
  REQUIRE_THROWS_AS(fit_scan(bundle, scan, FitConfig{}), DomainError);

  ScanCloud bad;
  bad.points = {Vec3(0, std::numeric_limits<double>::infinity(), 0)};
  REQUIRE_THROWS_AS(fit_scan(bundle, bad, FitConfig{}), ValidationError);
}

TEST_CASE("excluded points do not influence the fit") {
  auto bundle = generate_toy_humanoid(0, ToyResolution::Fine);
  auto posed = deform(bundle, PhenotypeVector::of({{"age", 0.5}}), Pose::identity(bundle.bone_count()));
  auto pts = sample_surface(posed.vertices, bundle.mesh.faces, 800, 9);

  ScanCloud with_junk;
  with_junk.points = pts;
  with_junk.regions.assign(pts.size(), ScanRegion::Body);
  for (int i = 0; i < 100; ++i) {
    with_junk.points.push_back(Vec3(5.0 + i, 5.0, 5.0));  // far-away junk
    with_junk.regions.push_back(ScanRegion::Excluded);
  }
  ScanCloud clean;
  clean.points = pts;

  FitConfig config;
  config.max_outer_iters = 6;
  config.phase1_outer_iters = 3;
  config.inner_steps = 6;
  auto a = fit_scan(bundle, with_junk, config);
  auto b = fit_scan(bundle, clean, config);
  REQUIRE(a.mean_error == b.mean_error);
  for (const auto& [name, value] : a.phenotypes.values) {
    REQUIRE(b.phenotypes.values.at(name) == value);
  }
  // mean_error covers only the non-excluded points
  REQUIRE(a.point_to_mesh_errors.size() == with_junk.points.size());
  double mean = 0;
  int n = 0;
  for (size_t i = 0; i < with_junk.points.size(); ++i) {
    if (!a.excluded[i]) {
      mean += a.point_to_mesh_errors[i];
      ++n;
    }
  }
  REQUIRE(std::abs(a.mean_error - mean / n) < 1e-12);
}

TEST_CASE("noisy self-recovery from neutral initialization") {
  auto bundle = generate_toy_humanoid(0, ToyResolution::Fine);
  std::mt19937_64 rng(171);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  PhenotypeVector gt_phen = PhenotypeVector::of({{"age", 0.58}, {"weight", 0.42}});
  Pose gt_pose = Pose::identity(bundle.bone_count());
  for (auto& r : gt_pose.joint_rotations) {
    r = Vec3(u(rng) - 0.5, u(rng) - 0.5, u(rng) - 0.5) * 0.4;
  }
  gt_pose.root_rotation = Vec3(0.1, -0.15, 0.1);
  gt_pose.root_translation = Vec3(0.1, -0.05, 0.2);
  auto posed = deform(bundle, gt_phen, gt_pose);
  ScanCloud scan;
  scan.points = sample_surface(posed.vertices, bundle.mesh.faces, 4000, 19);
  std::normal_distribution<double> noise(0.0, 0.001);
  for (auto& p : scan.points) p += Vec3(noise(rng), noise(rng), noise(rng));

  FitConfig config;
  config.seed = 4;
  FitResult result = fit_scan(bundle, scan, config);
  INFO("mean error " << result.mean_error);
  REQUIRE(result.mean_error <= 0.0024);
}

TEST_CASE("beta prior pulls phenotypes toward its mean") {
  auto bundle = generate_toy_humanoid(0, ToyResolution::Fine);
  PhenotypeVector gt_phen = PhenotypeVector::of({{"age", 0.6}, {"weight", 0.4}});
  Pose identity = Pose::identity(bundle.bone_count());
  auto posed = deform(bundle, gt_phen, identity);
  ScanCloud scan;
  scan.points = sample_surface(posed.vertices, bundle.mesh.faces, 1200, 23);
  std::mt19937_64 rng(29);
  std::normal_distribution<double> noise(0.0, 0.002);
  for (auto& p : scan.points) p += Vec3(noise(rng), noise(rng), noise(rng));

  std::map<std::string, BetaParams> prior{{"weight", fit_beta_moments(0.9, 0.05)}};
  FitConfig with_prior;
  with_prior.prior_weight = 2e-3;
  with_prior.max_outer_iters = 10;
  with_prior.phase1_outer_iters = 10;  // joints frozen, isolate the pull
  auto pulled = fit_scan(bundle, scan, with_prior, &prior, {{gt_phen, identity}});
  FitConfig no_prior = with_prior;
  no_prior.prior_weight = 0.0;
  auto plain = fit_scan(bundle, scan, no_prior, &prior, {{gt_phen, identity}});
  INFO("with prior " << pulled.phenotypes.values.at("weight") << ", without "
                     << plain.phenotypes.values.at("weight"));
  REQUIRE(pulled.phenotypes.values.at("weight") > plain.phenotypes.values.at("weight") + 1e-3);
}

TEST_CASE("beta prior interpolation between buckets") {
  BetaTable t;
  t.buckets.push_back({24, 0, {{"weight", {2.0, 6.0}}}});
  t.buckets.push_back({48, 0, {{"weight", {6.0, 2.0}}}});
  auto prior = beta_prior_at(t, 3.0, 0, default_age_map());
  REQUIRE(prior.at("weight").alpha == Catch::Approx(4.0).margin(1e-12));
  REQUIRE(prior.at("weight").beta == Catch::Approx(4.0).margin(1e-12));
  REQUIRE_THROWS_AS(beta_prior_at(t, 50.0, 0, default_age_map()), DomainError);
}

TEST_CASE("fit report writes per-point errors and a per-vertex field") {
  auto bundle = generate_toy_humanoid(0, ToyResolution::Coarse);
  auto posed = deform(bundle, PhenotypeVector{}, Pose::identity(bundle.bone_count()));
  ScanCloud scan;
  scan.points = sample_surface(posed.vertices, bundle.mesh.faces, 300, 31);
  scan.regions.assign(scan.points.size(), ScanRegion::Body);
  for (int i = 0; i < 50; ++i) scan.regions[i] = ScanRegion::Excluded;

  FitConfig config;
  config.max_outer_iters = 2;
  config.phase1_outer_iters = 1;
  config.inner_steps = 2;
  auto result = fit_scan(bundle, scan, config, nullptr,
                         {{PhenotypeVector{}, Pose::identity(bundle.bone_count())}});
  auto fitted = deform(bundle, result.phenotypes, result.pose);

  auto dir = testutil::temp_dir("fitreport");
  auto csv_path = dir / "errors.csv";
  auto ply_path = dir / "errors.ply";
  fit_report(result, scan, fitted.vertices, bundle.mesh.faces, csv_path, ply_path);

  // CSV row count equals non-excluded point count
  std::ifstream csv(csv_path);
  std::string line;
  int rows = -1;  // header
  while (std::getline(csv, line)) {
    if (!line.empty()) ++rows;
  }
  REQUIRE(rows == 250);

  // zero-error fit: all error entries are ~0
  for (size_t i = 0; i < scan.points.size(); ++i) {
    if (!result.excluded[i]) REQUIRE(result.point_to_mesh_errors[i] < 1e-9);
  }

  // PLY reparse: one scalar per vertex
  auto reparsed = testutil::reparse_ply(ply_path);
  REQUIRE(reparsed.vertex_count == static_cast<size_t>(bundle.vertex_count()));
  REQUIRE(reparsed.vertex_property_count == 4);  // x y z error
  for (const auto& row : reparsed.vertex_rows) REQUIRE(row.size() == 4);
}
