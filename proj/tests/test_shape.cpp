#include "testutil.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace anny;

namespace {

// Independent dense evaluation of the interpolation formula, used as the
// oracle for shape(): 1-D hat weight by direct formula, multilinear product,
// dense displacement sum.
double oracle_hat(double value, const std::vector<double>& grid, double node) {
  for (size_t i = 0; i + 1 < grid.size(); ++i) {
    double lo = grid[i], hi = grid[i + 1];
    if (value >= lo && value <= hi) {
      double w_hi = (value - lo) / (hi - lo);
      if (node == lo) return 1.0 - w_hi;
      if (node == hi) return w_hi;
    }
  }
  return 0.0;
}

std::vector<Vec3> oracle_shape(const AssetBundle& bundle, const std::map<std::string, double>& vals) {
  std::vector<Vec3> out = bundle.mesh.vertices;
  for (const auto& t : bundle.targets) {
    double w = 1.0;
    for (const auto& c : t.constraints) {
      const auto& p = bundle.schema.parameters[c.param];
      double value = vals.count(p.name) ? vals.at(p.name) : p.neutral;
      w *= oracle_hat(value, p.grid, p.grid[c.node]);
    }
    for (size_t i = 0; i < t.indices.size(); ++i) out[t.indices[i]] += w * t.offsets[i];
  }
  return out;
}

}  // namespace

TEST_CASE("hat weights match the spec examples") {
  std::vector<double> age_grid = {0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0};
  SECTION("midpoint splits evenly between the bracketing prototypes") {
    auto hw = hat_weights(0.5, age_grid);
    REQUIRE(hw.count == 2);
    REQUIRE(hw.entries[0].node_value == 1.0 / 3.0);
    REQUIRE(hw.entries[0].weight == Catch::Approx(0.5).margin(1e-15));
    REQUIRE(hw.entries[1].node_value == 2.0 / 3.0);
    REQUIRE(hw.entries[1].weight == Catch::Approx(0.5).margin(1e-15));
  }
  SECTION("grid node value is exact") {
    auto hw = hat_weights(1.0 / 3.0, age_grid);
    REQUIRE(hw.count == 1);
    REQUIRE(hw.entries[0].node_value == 1.0 / 3.0);
    REQUIRE(hw.entries[0].weight == 1.0);
  }
  SECTION("linear interpolation inside a cell") {
    auto hw = hat_weights(0.25, {0.0, 0.5, 1.0});
    REQUIRE(hw.count == 2);
    REQUIRE(hw.entries[0].node_value == 0.0);
    REQUIRE(hw.entries[0].weight == Catch::Approx(0.5).margin(1e-15));
    REQUIRE(hw.entries[1].node_value == 0.5);
    REQUIRE(hw.entries[1].weight == Catch::Approx(0.5).margin(1e-15));
  }
  SECTION("endpoints") {
    REQUIRE(hat_weights(0.0, age_grid).entries[0].weight == 1.0);
    auto hw = hat_weights(1.0, age_grid);
    REQUIRE(hw.count == 1);
    REQUIRE(hw.entries[0].node_value == 1.0);
  }
  SECTION("out-of-range value is rejected") {
    REQUIRE_THROWS_AS(hat_weights(1.5, age_grid), DomainError);
    REQUIRE_THROWS_AS(hat_weights(-0.1, age_grid), DomainError);
  }
}

TEST_CASE("hat weights form a partition of unity") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto bundle = generate_toy_humanoid(0, ToyResolution::Fine);
  for (const auto& p : bundle.schema.parameters) {
    for (int i = 0; i < 10000; ++i) {
      auto hw = hat_weights(u(rng), p.grid);
      double sum = 0;
      for (int k = 0; k < hw.count; ++k) sum += hw.entries[k].weight;
      REQUIRE(std::abs(sum - 1.0) < 1e-12);
    }
    for (double node : p.grid) {
      auto hw = hat_weights(node, p.grid);
      REQUIRE(hw.count == 1);
      REQUIRE(hw.entries[0].weight == 1.0);
    }
  }
}

TEST_CASE("target weights multiply across constrained parameters") {
  auto bundle = generate_toy_humanoid(0, ToyResolution::Fine);
  const auto& schema = bundle.schema;
  BlendTarget age_child;  // age node 1 = 1/3
  age_child.constraints = {{0, 1}};
  REQUIRE(target_weight(age_child, schema, PhenotypeVector::of({{"age", 0.5}})) ==
          Catch::Approx(0.5).margin(1e-15));

  BlendTarget both;  // age = 1/3, weight = 1/2
  both.constraints = {{0, 1}, {1, 1}};
  REQUIRE(target_weight(both, schema,
                        PhenotypeVector::of({{"age", 1.0 / 3.0}, {"weight", 0.5}})) == 1.0);
  REQUIRE(target_weight(both, schema, PhenotypeVector::of({{"age", 0.5}, {"weight", 0.25}})) ==
          Catch::Approx(0.25).margin(1e-15));
}

TEST_CASE("neutral phenotypes with all-zero target weights reproduce the base mesh") {
  // Minimal bundle whose single target sits away from the neutral node.
  AssetBundle b = testutil::make_chain_bundle();
  // chain bundle: targets at nodes {0, 1(neutral, empty), 2}; at neutral only
  // the empty target carries weight.
  ShapedRest rest = shape(b, PhenotypeVector{});
  for (int v = 0; v < b.vertex_count(); ++v) {
    REQUIRE(rest.vertices[v] == b.mesh.vertices[v]);
  }
}

TEST_CASE("single grid-node assignment adds exactly one displacement field") {
  auto bundle = generate_toy_humanoid(0, ToyResolution::Fine);
  ShapedRest rest = shape(bundle, PhenotypeVector::of({{"age", 0.0}}));
  const BlendTarget* baby = nullptr;
  for (const auto& t : bundle.targets) {
    if (t.constraints == std::vector<BlendConstraint>{{0, 0}}) baby = &t;
  }
  REQUIRE(baby != nullptr);
  std::vector<Vec3> expected = bundle.mesh.vertices;
  for (size_t i = 0; i < baby->indices.size(); ++i) expected[baby->indices[i]] += baby->offsets[i];
  for (int v = 0; v < bundle.vertex_count(); ++v) {
    REQUIRE((rest.vertices[v] - expected[v]).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("shape matches an independent dense interpolation oracle") {
  auto bundle = generate_toy_humanoid(0, ToyResolution::Fine);
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  SECTION("age midpoint case") {
    auto got = shape(bundle, PhenotypeVector::of({{"age", 0.5}}));
    auto want = oracle_shape(bundle, {{"age", 0.5}});
    for (int v = 0; v < bundle.vertex_count(); ++v) {
      REQUIRE((got.vertices[v] - want[v]).cwiseAbs().maxCoeff() < 1e-15);
    }
  }
  SECTION("random phenotype values") {
    for (int i = 0; i < 20; ++i) {
      std::map<std::string, double> vals{{"age", u(rng)}, {"weight", u(rng)}};
      auto got = shape(bundle, PhenotypeVector{std::map<std::string, double>(vals)});
      auto want = oracle_shape(bundle, vals);
      for (int v = 0; v < bundle.vertex_count(); ++v) {
        REQUIRE((got.vertices[v] - want[v]).cwiseAbs().maxCoeff() < 1e-14);
      }
    }
  }
}

TEST_CASE("grid-node exactness at every full node assignment") {
  auto bundle = generate_toy_humanoid(0, ToyResolution::Fine);
  for (double age : bundle.schema.parameters[0].grid) {
    for (double weight : bundle.schema.parameters[1].grid) {
      auto got = shape(bundle, PhenotypeVector::of({{"age", age}, {"weight", weight}}));
      std::vector<Vec3> want = bundle.mesh.vertices;
      for (const auto& t : bundle.targets) {
        bool all_satisfied = true;
        for (const auto& c : t.constraints) {
          double value = c.param == 0 ? age : weight;
          if (bundle.schema.parameters[c.param].grid[c.node] != value) all_satisfied = false;
        }
        if (all_satisfied) {
          for (size_t i = 0; i < t.indices.size(); ++i) want[t.indices[i]] += t.offsets[i];
        }
      }
      for (int v = 0; v < bundle.vertex_count(); ++v) {
        REQUIRE((got.vertices[v] - want[v]).cwiseAbs().maxCoeff() < 1e-12);
      }
    }
  }
}

TEST_CASE("joints sit at anchor means of the shaped mesh") {
  auto bundle = generate_toy_humanoid(0, ToyResolution::Fine);
  auto rest = shape(bundle, PhenotypeVector::of({{"age", 0.2}, {"weight", 0.9}}));
  for (int b = 0; b < bundle.bone_count(); ++b) {
    Vec3 mean = Vec3::Zero();
    for (auto a : bundle.skeleton.bones[b].head_anchors) mean += rest.vertices[a];
    mean /= static_cast<double>(bundle.skeleton.bones[b].head_anchors.size());
    REQUIRE((rest.joint_heads[b] - mean).norm() < 1e-12);
  }
}

TEST_CASE("shape output is Lipschitz continuous in phenotypes") {
  auto bundle = generate_toy_humanoid(0, ToyResolution::Fine);
  // Lipschitz constant: sum of max displacement norms divided by the
  // smallest cell width (hat slopes are 1/width).
  double min_width = 1.0;
  for (const auto& p : bundle.schema.parameters) {
    for (size_t i = 0; i + 1 < p.grid.size(); ++i) {
      min_width = std::min(min_width, p.grid[i + 1] - p.grid[i]);
    }
  }
  double L = 0;
  for (const auto& t : bundle.targets) {
    double mx = 0;
    for (const auto& d : t.offsets) mx = std::max(mx, d.norm());
    L += mx / min_width;
  }
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> u(0.0, 1.0 - 1e-6);
  const double eps = 1e-6;
  for (int i = 0; i < 20; ++i) {
    double age = u(rng), weight = u(rng);
    auto a = shape(bundle, PhenotypeVector::of({{"age", age}, {"weight", weight}}));
    auto b = shape(bundle, PhenotypeVector::of({{"age", age + eps}, {"weight", weight}}));
    double diff = 0;
    for (int v = 0; v < bundle.vertex_count(); ++v) {
      diff = std::max(diff, (a.vertices[v] - b.vertices[v]).norm());
    }
    REQUIRE(diff <= L * eps * (1.0 + 1e-9));
  }
}

TEST_CASE("rest-shape jacobian matches central finite differences") {
  auto bundle = generate_toy_humanoid(0, ToyResolution::Fine);
  std::mt19937_64 rng(51);
  const double h = 1e-5;
  for (int trial = 0; trial < 5; ++trial) {
    PhenotypeVector pv = testutil::random_phenotypes_away_from_nodes(bundle, rng);
    ShapeOptions opts;
    opts.want_jacobian = true;
    ShapedRest rest = shape(bundle, pv, opts);
    REQUIRE_FALSE(rest.shape_jacobian.empty());
    for (const auto& deriv : rest.shape_jacobian) {
      const std::string& name = bundle.schema.parameters[deriv.param].name;
      PhenotypeVector pp = pv, pm = pv;
      pp.values[name] += h;
      pm.values[name] -= h;
      auto sp = shape(bundle, pp), sm = shape(bundle, pm);
      std::vector<Vec3> dense(bundle.vertex_count(), Vec3::Zero());
      for (size_t i = 0; i < deriv.indices.size(); ++i) dense[deriv.indices[i]] = deriv.d[i];
      for (int v = 0; v < bundle.vertex_count(); ++v) {
        Vec3 fd = (sp.vertices[v] - sm.vertices[v]) / (2 * h);
        REQUIRE((dense[v] - fd).cwiseAbs().maxCoeff() < 1e-6);
      }
    }
  }
}

TEST_CASE("symmetric targets keep the shaped mesh mirror symmetric") {
  auto bundle = generate_toy_humanoid(0, ToyResolution::Fine);
  auto sigma = bundle.symmetry.involution(bundle.vertex_count());
  auto rest = shape(bundle, PhenotypeVector::of({{"age", 0.37}, {"weight", 0.81}}));
  for (int v = 0; v < bundle.vertex_count(); ++v) {
    REQUIRE(rest.vertices[v] == reflect_sagittal(rest.vertices[sigma[v]]));
  }
}

TEST_CASE("measure on analytic solids") {
  std::vector<Vec3> cube = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                            {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
  std::vector<Quad> faces = {{0, 3, 2, 1}, {4, 5, 6, 7}, {0, 1, 5, 4},
                             {1, 2, 6, 5}, {2, 3, 7, 6}, {3, 0, 4, 7}};
  auto m = measure(cube, faces);
  REQUIRE(m.height == Catch::Approx(1.0).margin(1e-12));
  REQUIRE(m.volume == Catch::Approx(1.0).margin(1e-12));
  REQUIRE(m.bmi_proxy == Catch::Approx(1000.0).margin(1e-9));

  SECTION("volume scales cubically") {
    std::vector<Vec3> big = cube;
    for (auto& v : big) v *= 2.0;
    REQUIRE(measure(big, faces).volume == Catch::Approx(8.0).margin(1e-12));
  }
  SECTION("toy height equals an independent vertical scan") {
    auto bundle = generate_toy_humanoid(0, ToyResolution::Fine);
    double lo = 1e30, hi = -1e30;
    for (const auto& v : bundle.mesh.vertices) {
      lo = std::min(lo, v.y());
      hi = std::max(hi, v.y());
    }
    REQUIRE(measure(bundle.mesh.vertices, bundle.mesh.faces).height ==
            Catch::Approx(hi - lo).margin(1e-15));
  }
  SECTION("degenerate mesh is rejected") {
    std::vector<Vec3> flat = {{0, 0, 0}, {1, 0, 0}, {1, 0, 1}, {0, 0, 1}};
    std::vector<Quad> f2 = {{0, 1, 2, 3}};
    REQUIRE_THROWS_AS(measure(flat, f2), DomainError);
    REQUIRE_THROWS_AS(measure(std::vector<Vec3>{}, std::vector<Quad>{}), DomainError);
  }
}

TEST_CASE("phenotype restriction pins trailing parameters to neutral") {
  auto bundle = generate_toy_humanoid(0, ToyResolution::Fine);
  ShapeOptions opts;
  opts.active_params = 1;  // only "age" active
  auto restricted = shape(bundle, PhenotypeVector::of({{"age", 0.2}, {"weight", 0.9}}), opts);
  auto reference = shape(bundle, PhenotypeVector::of({{"age", 0.2}}));
  for (int v = 0; v < bundle.vertex_count(); ++v) {
    REQUIRE(restricted.vertices[v] == reference.vertices[v]);
  }
}

TEST_CASE("unknown or out-of-range phenotypes are rejected") {
  auto bundle = generate_toy_humanoid(0, ToyResolution::Fine);
  REQUIRE_THROWS_AS(shape(bundle, PhenotypeVector::of({{"bogus", 0.5}})), DomainError);
  REQUIRE_THROWS_AS(shape(bundle, PhenotypeVector::of({{"age", 1.5}})), DomainError);
}
