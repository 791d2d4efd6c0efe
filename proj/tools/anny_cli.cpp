// anny command-line tool: shaping, posing, collision checks, statistical
// calibration and sampling, scan fitting, retargeting, topology regressors
// and the forward-pass benchmark. Exit codes: 0 success (for `collide`: no
// collision), 1 domain/model error (for `collide`: collision found), 2 flag
// or usage error. All randomized commands are deterministic under --seed.

#include "anny/anny.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <sys/resource.h>

#include <chrono>
#include <functional>
#include <iostream>

namespace {

using namespace anny;
using nlohmann::json;

json load_json(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open '" + path.string() + "' for reading");
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return j;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
  f << text;
  if (!f) throw IoError("write failed for '" + path.string() + "'");
}

// --set name=value (value must already lie in [0,1]; range violations are
// usage errors, caught at parse time).
PhenotypeVector phenotypes_from_sets(const std::vector<std::string>& sets) {
  PhenotypeVector pv;
  for (const std::string& s : sets) {
    size_t eq = s.find('=');
    if (eq == std::string::npos) throw CLI::ValidationError("--set", "expected name=value: " + s);
    std::string name = s.substr(0, eq);
    double value;
    try {
      value = std::stod(s.substr(eq + 1));
    } catch (const std::exception&) {
      throw CLI::ValidationError("--set", "not a number: " + s);
    }
    if (!(value >= 0.0 && value <= 1.0)) {
      throw CLI::ValidationError("--set", name + "=" + format_double(value) + " outside [0,1]");
    }
    pv.values[name] = value;
  }
  return pv;
}

json phenotypes_to_json(const PhenotypeVector& pv) {
  json j = json::object();
  for (const auto& [name, value] : pv.values) j[name] = value;
  return j;
}

PhenotypeVector phenotypes_from_json(const json& j) {
  PhenotypeVector pv;
  for (const auto& [name, value] : j.items()) pv.values[name] = value.get<double>();
  return pv;
}

json pose_to_json(const Pose& pose, const Skeleton& skel) {
  json j;
  j["root"]["rotation"] = {pose.root_rotation.x(), pose.root_rotation.y(), pose.root_rotation.z()};
  j["root"]["translation"] = {pose.root_translation.x(), pose.root_translation.y(),
                              pose.root_translation.z()};
  json joints = json::object();
  for (size_t b = 0; b < skel.bones.size(); ++b) {
    const Vec3& r = pose.joint_rotations[b];
    joints[skel.bones[b].name] = {r.x(), r.y(), r.z()};
  }
  j["joints"] = std::move(joints);
  return j;
}

Pose pose_from_json(const json& j, const Skeleton& skel) {
  Pose pose = Pose::identity(static_cast<int>(skel.bones.size()));
  auto vec3_of = [](const json& a) { return Vec3(a.at(0), a.at(1), a.at(2)); };
  if (j.contains("root")) {
    if (j["root"].contains("rotation")) pose.root_rotation = vec3_of(j["root"]["rotation"]);
    if (j["root"].contains("translation")) pose.root_translation = vec3_of(j["root"]["translation"]);
  }
  if (j.contains("joints")) {
    for (const auto& [name, rot] : j["joints"].items()) {
      int b = skel.find(name);
      if (b < 0) throw DomainError("pose file references unknown bone '" + name + "'");
      pose.joint_rotations[b] = vec3_of(rot);
    }
  }
  return pose;
}

MeshFormat format_of(const std::filesystem::path& path, const std::string& override_fmt) {
  if (override_fmt == "obj") return MeshFormat::Obj;
  if (override_fmt == "ply") return MeshFormat::Ply;
  return mesh_format_from_path(path);
}

ScanCloud load_scan(const std::filesystem::path& scan_path, const std::filesystem::path& tags_path,
                    const std::vector<std::string>& exclude_regions) {
  ScanCloud cloud;
  cloud.points = load_points(scan_path);
  if (!tags_path.empty()) {
    std::ifstream f(tags_path);
    if (!f) throw IoError("cannot open '" + tags_path.string() + "' for reading");
    cloud.regions.assign(cloud.points.size(), ScanRegion::Body);
    std::string line;
    std::getline(f, line);  // header: point_index,tag
    int lineno = 1;
    while (std::getline(f, line)) {
      ++lineno;
      if (line.empty()) continue;
      size_t comma = line.find(',');
      if (comma == std::string::npos) {
        throw ParseError(tags_path.string() + ": malformed row at line " + std::to_string(lineno));
      }
      size_t idx = std::stoul(line.substr(0, comma));
      std::string tag = line.substr(comma + 1);
      if (idx >= cloud.points.size()) {
        throw ValidationError(tags_path.string() + ": point index out of range at line " +
                              std::to_string(lineno));
      }
      if (tag == "body") cloud.regions[idx] = ScanRegion::Body;
      else if (tag == "head") cloud.regions[idx] = ScanRegion::Head;
      else if (tag == "hand") cloud.regions[idx] = ScanRegion::Hand;
      else if (tag == "excluded") cloud.regions[idx] = ScanRegion::Excluded;
      else throw ValidationError(tags_path.string() + ": unknown tag '" + tag + "'");
    }
  }
  if (!exclude_regions.empty()) {
    if (cloud.regions.empty()) cloud.regions.assign(cloud.points.size(), ScanRegion::Body);
    for (const std::string& r : exclude_regions) {
      ScanRegion target;
      if (r == "head") target = ScanRegion::Head;
      else if (r == "hand") target = ScanRegion::Hand;
      else if (r == "body") target = ScanRegion::Body;
      else throw DomainError("unknown region '" + r + "' in --exclude");
      for (auto& reg : cloud.regions) {
        if (reg == target) reg = ScanRegion::Excluded;
      }
    }
  }
  return cloud;
}

long peak_rss_bytes() {
  rusage u{};
  getrusage(RUSAGE_SELF, &u);
  return u.ru_maxrss * 1024L;  // linux reports KiB
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"anny: differentiable parametric humanoid body model"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "cap worker threads (default: ANNY_THREADS or hardware)");

  std::function<int()> action;

  // ---- toy ----
  {
    auto* cmd = app.add_subcommand("toy", "generate the procedural toy humanoid bundle");
    auto seed = std::make_shared<std::uint64_t>(0);
    auto resolution = std::make_shared<std::string>("fine");
    auto out = std::make_shared<std::string>();
    cmd->add_option("--seed", *seed, "generator seed");
    cmd->add_option("--resolution", *resolution, "fine|coarse")
        ->check(CLI::IsMember({"fine", "coarse"}));
    cmd->add_option("--out", *out, "output bundle path")->required();
    cmd->callback([=, &action] {
      action = [=] {
        auto bundle = generate_toy_humanoid(
            *seed, *resolution == "fine" ? ToyResolution::Fine : ToyResolution::Coarse);
        save_bundle(bundle, *out);
        std::cout << "wrote " << *out << " (" << bundle.vertex_count() << " vertices, "
                  << bundle.bone_count() << " bones)\n";
        return 0;
      };
    });
  }

  // ---- shape ----
  {
    auto* cmd = app.add_subcommand("shape", "evaluate the shaped rest mesh");
    auto bundle_path = std::make_shared<std::string>();
    auto sets = std::make_shared<std::vector<std::string>>();
    auto out = std::make_shared<std::string>();
    auto fmt = std::make_shared<std::string>("");
    auto ply_faces = std::make_shared<std::string>("quads");
    auto print_measure = std::make_shared<bool>(false);
    cmd->add_option("--bundle", *bundle_path, "asset bundle")->required();
    cmd->add_option("--set", *sets, "phenotype assignment name=value (repeatable)");
    cmd->add_option("--out", *out, "output mesh (obj|ply by extension)")->required();
    cmd->add_option("--format", *fmt, "override format: obj|ply")
        ->check(CLI::IsMember({"", "obj", "ply"}));
    cmd->add_option("--ply-faces", *ply_faces, "quads|triangulated")
        ->check(CLI::IsMember({"quads", "triangulated"}));
    cmd->add_flag("--print-measure", *print_measure, "print height/volume/bmi of the result");
    cmd->callback([=, &action] {
      PhenotypeVector pv = phenotypes_from_sets(*sets);  // range-checked at parse time
      action = [=] {
        AssetBundle bundle = load_bundle(*bundle_path);
        ShapedRest shaped = shape(bundle, pv);
        export_mesh(shaped.vertices, bundle.mesh.faces, *out, format_of(*out, *fmt),
                    *ply_faces == "quads" ? PlyFaceMode::Quads : PlyFaceMode::Triangulated);
        if (*print_measure) {
          BodyMeasure m = measure(shaped.vertices, bundle.mesh.faces);
          std::cout << "height_m=" << format_double(m.height)
                    << " volume_m3=" << format_double(m.volume)
                    << " bmi_proxy=" << format_double(m.bmi_proxy) << "\n";
        }
        return 0;
      };
    });
  }

  // ---- pose ----
  {
    auto* cmd = app.add_subcommand("pose", "pose the shaped mesh with forward kinematics");
    auto bundle_path = std::make_shared<std::string>();
    auto pose_path = std::make_shared<std::string>();
    auto sets = std::make_shared<std::vector<std::string>>();
    auto out = std::make_shared<std::string>();
    auto fmt = std::make_shared<std::string>("");
    cmd->add_option("--bundle", *bundle_path, "asset bundle")->required();
    cmd->add_option("--pose", *pose_path, "pose JSON (default: identity)");
    cmd->add_option("--set", *sets, "phenotype assignment name=value");
    cmd->add_option("--out", *out, "output mesh")->required();
    cmd->add_option("--format", *fmt, "override format: obj|ply")
        ->check(CLI::IsMember({"", "obj", "ply"}));
    cmd->callback([=, &action] {
      PhenotypeVector pv = phenotypes_from_sets(*sets);
      action = [=] {
        AssetBundle bundle = load_bundle(*bundle_path);
        Pose pose = pose_path->empty()
                        ? Pose::identity(bundle.bone_count())
                        : pose_from_json(load_json(*pose_path), bundle.skeleton);
        DeformResult r = deform(bundle, pv, pose);
        export_mesh(r.vertices, bundle.mesh.faces, *out, format_of(*out, *fmt));
        return 0;
      };
    });
  }

  // ---- collide ----
  {
    auto* cmd = app.add_subcommand("collide", "self-collision check (exit 1 when colliding)");
    auto bundle_path = std::make_shared<std::string>();
    auto pose_path = std::make_shared<std::string>();
    auto sets = std::make_shared<std::vector<std::string>>();
    auto report = std::make_shared<std::string>();
    auto include_adjacent = std::make_shared<bool>(false);
    cmd->add_option("--bundle", *bundle_path, "asset bundle")->required();
    cmd->add_option("--pose", *pose_path, "pose JSON (default: identity)");
    cmd->add_option("--set", *sets, "phenotype assignment name=value");
    cmd->add_option("--report", *report, "write intersecting pairs CSV");
    cmd->add_flag("--include-adjacent", *include_adjacent,
                  "also test parts whose bones are parent/child");
    cmd->callback([=, &action] {
      PhenotypeVector pv = phenotypes_from_sets(*sets);
      action = [=] {
        AssetBundle bundle = load_bundle(*bundle_path);
        Pose pose = pose_path->empty()
                        ? Pose::identity(bundle.bone_count())
                        : pose_from_json(load_json(*pose_path), bundle.skeleton);
        DeformResult r = deform(bundle, pv, pose);
        CollisionReport rep = self_collide(r.vertices, bundle, !*include_adjacent);
        if (!report->empty()) {
          std::string csv = "tri_a,tri_b,part_a,part_b\n";
          for (const auto& p : rep.intersecting_pairs) {
            csv += std::to_string(p.tri_a) + "," + std::to_string(p.tri_b) + "," +
                   std::to_string(p.part_a) + "," + std::to_string(p.part_b) + "\n";
          }
          write_text(*report, csv);
        }
        std::cout << "collisions: " << rep.intersecting_pairs.size() << "\n";
        return rep.colliding ? 1 : 0;
      };
    });
  }

  // ---- sample ----
  {
    auto* cmd = app.add_subcommand("sample", "draw a phenotype vector from a calibrated table");
    auto table_path = std::make_shared<std::string>();
    auto age_years = std::make_shared<double>(0);
    auto gender = std::make_shared<int>(0);
    auto age_map_path = std::make_shared<std::string>();
    auto seed = std::make_shared<std::uint64_t>(0);
    auto out = std::make_shared<std::string>();
    cmd->add_option("--table", *table_path, "beta table JSON")->required();
    cmd->add_option("--age-years", *age_years, "age in years")->required();
    cmd->add_option("--gender", *gender, "0 or 1")->required()->check(CLI::Range(0, 1));
    cmd->add_option("--age-map", *age_map_path, "age map JSON (default: built-in)");
    cmd->add_option("--seed", *seed, "sampling seed");
    cmd->add_option("--out", *out, "output phenotypes JSON (default: stdout)");
    cmd->callback([=, &action] {
      action = [=] {
        BetaTable table = load_beta_table(*table_path);
        AgeMap age_map = age_map_path->empty() ? default_age_map()
                                               : age_map_from_json(load_json(*age_map_path));
        PhenotypeVector pv = sample_body(table, *age_years, *gender, age_map, *seed);
        std::string text = phenotypes_to_json(pv).dump(2) + "\n";
        if (out->empty()) std::cout << text;
        else write_text(*out, text);
        return 0;
      };
    });
  }

  // ---- calibrate ----
  {
    auto* cmd = app.add_subcommand("calibrate", "fit beta distributions to growth targets");
    auto bundle_path = std::make_shared<std::string>();
    auto targets_path = std::make_shared<std::string>();
    auto params_csv = std::make_shared<std::string>();
    auto age_map_path = std::make_shared<std::string>();
    auto mc_samples = std::make_shared<int>(2048);
    auto max_iters = std::make_shared<int>(150);
    auto seed = std::make_shared<std::uint64_t>(0);
    auto density = std::make_shared<double>(kDefaultBodyDensity);
    auto out = std::make_shared<std::string>();
    auto report = std::make_shared<std::string>();
    auto no_enforce = std::make_shared<bool>(false);
    cmd->add_option("--bundle", *bundle_path, "asset bundle")->required();
    cmd->add_option("--targets", *targets_path, "growth targets CSV")->required();
    cmd->add_option("--params", *params_csv, "comma-separated phenotype names")->required();
    cmd->add_option("--age-map", *age_map_path, "age map JSON (default: built-in)");
    cmd->add_option("--mc-samples", *mc_samples, "Monte-Carlo samples per evaluation")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--max-iters", *max_iters, "Nelder-Mead iteration cap")->check(CLI::PositiveNumber);
    cmd->add_option("--seed", *seed, "Monte-Carlo seed");
    cmd->add_option("--density", *density, "body density for the BMI proxy (kg/m^3)");
    cmd->add_option("--out", *out, "output beta table JSON")->required();
    cmd->add_option("--report", *report, "per-bucket report CSV");
    cmd->add_flag("--no-enforce-tolerance", *no_enforce, "report residuals instead of failing");
    cmd->callback([=, &action] {
      action = [=] {
        AssetBundle bundle = load_bundle(*bundle_path);
        GrowthTargets targets = load_growth_targets(*targets_path);
        AgeMap age_map = age_map_path->empty() ? default_age_map()
                                               : age_map_from_json(load_json(*age_map_path));
        std::vector<std::string> params;
        {
          std::istringstream ss(*params_csv);
          std::string item;
          while (std::getline(ss, item, ',')) {
            if (!item.empty()) params.push_back(item);
          }
        }
        CalibrationOptions opts;
        opts.mc_samples = *mc_samples;
        opts.max_iterations = *max_iters;
        opts.seed = *seed;
        opts.density = *density;
        opts.enforce_tolerance = !*no_enforce;
        CalibrationResult result = calibrate(bundle, targets, age_map, params, opts);
        save_beta_table(result.table, *out);
        if (!report->empty()) {
          std::string csv =
              "age_months,gender,height_mean_target,height_mean,height_sd_target,height_sd,"
              "bmi_mean_target,bmi_mean,bmi_sd_target,bmi_sd,objective,iterations\n";
          for (const auto& r : result.reports) {
            csv += std::to_string(r.age_months) + "," + std::to_string(r.gender) + "," +
                   format_double(r.target.height_mean) + "," + format_double(r.achieved.height_mean) +
                   "," + format_double(r.target.height_sd) + "," + format_double(r.achieved.height_sd) +
                   "," + format_double(r.target.bmi_mean) + "," + format_double(r.achieved.bmi_mean) +
                   "," + format_double(r.target.bmi_sd) + "," + format_double(r.achieved.bmi_sd) + "," +
                   format_double(r.objective) + "," + std::to_string(r.iterations) + "\n";
          }
          write_text(*report, csv);
        }
        std::cout << "calibrated " << result.table.buckets.size() << " buckets -> " << *out << "\n";
        return 0;
      };
    });
  }

  // ---- fit ----
  {
    auto* cmd = app.add_subcommand("fit", "register the model to a scan point cloud");
    auto bundle_path = std::make_shared<std::string>();
    auto scan_path = std::make_shared<std::string>();
    auto tags_path = std::make_shared<std::string>();
    auto exclude_csv = std::make_shared<std::string>();
    auto init_path = std::make_shared<std::string>();
    auto prior_path = std::make_shared<std::string>();
    auto prior_age = std::make_shared<double>(25.0);
    auto prior_gender = std::make_shared<int>(0);
    auto out = std::make_shared<std::string>();
    auto report_csv = std::make_shared<std::string>();
    auto report_ply = std::make_shared<std::string>();
    auto mesh_out = std::make_shared<std::string>();
    auto cfg = std::make_shared<FitConfig>();
    auto bounds = std::make_shared<std::string>("sigmoid-reparam");
    cmd->add_option("--bundle", *bundle_path, "asset bundle")->required();
    cmd->add_option("--scan", *scan_path, "scan points (obj|ply)")->required();
    cmd->add_option("--tags", *tags_path, "sidecar CSV point_index,tag");
    cmd->add_option("--exclude", *exclude_csv, "regions to exclude, e.g. head,hand");
    cmd->add_option("--init", *init_path, "initial parameters JSON (phenotypes + pose)");
    cmd->add_option("--prior", *prior_path, "beta table JSON used as phenotype prior");
    cmd->add_option("--prior-age-years", *prior_age, "prior bucket age");
    cmd->add_option("--prior-gender", *prior_gender, "prior bucket gender")->check(CLI::Range(0, 1));
    cmd->add_option("--max-outer", cfg->max_outer_iters, "outer iterations")->check(CLI::PositiveNumber);
    cmd->add_option("--phase1-outer", cfg->phase1_outer_iters, "joints-frozen outer iterations");
    cmd->add_option("--inner-steps", cfg->inner_steps, "gradient steps per outer iteration")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--step-size", cfg->step_size, "initial step size");
    cmd->add_option("--huber-delta", cfg->huber_delta, "robust loss threshold (m)");
    cmd->add_option("--prior-weight", cfg->prior_weight, "weight of the phenotype prior");
    cmd->add_option("--converge-tol", cfg->converge_tol, "mean-error improvement tolerance (m)");
    cmd->add_option("--seed", cfg->seed, "seed");
    cmd->add_option("--bounds", *bounds, "clamp|sigmoid-reparam")
        ->check(CLI::IsMember({"clamp", "sigmoid-reparam"}));
    cmd->add_option("--out", *out, "fitted parameters JSON")->required();
    cmd->add_option("--report-csv", *report_csv, "per-point error CSV");
    cmd->add_option("--report-ply", *report_ply, "fitted mesh PLY with per-vertex error");
    cmd->add_option("--mesh-out", *mesh_out, "fitted mesh (obj|ply)");
    cmd->callback([=, &action] {
      action = [=] {
        AssetBundle bundle = load_bundle(*bundle_path);
        std::vector<std::string> excludes;
        {
          std::istringstream ss(*exclude_csv);
          std::string item;
          while (std::getline(ss, item, ',')) {
            if (!item.empty()) excludes.push_back(item);
          }
        }
        ScanCloud cloud = load_scan(*scan_path, *tags_path, excludes);
        FitConfig config = *cfg;
        config.bounds = *bounds == "clamp" ? FitConfig::Bounds::Clamp
                                           : FitConfig::Bounds::SigmoidReparam;
        std::optional<std::pair<PhenotypeVector, Pose>> init;
        if (!init_path->empty()) {
          json j = load_json(*init_path);
          init = {phenotypes_from_json(j.at("phenotypes")),
                  pose_from_json(j.at("pose"), bundle.skeleton)};
        }
        std::map<std::string, BetaParams> prior;
        if (!prior_path->empty()) {
          BetaTable table = load_beta_table(*prior_path);
          prior = beta_prior_at(table, *prior_age, *prior_gender, default_age_map());
        }
        FitResult result =
            fit_scan(bundle, cloud, config, prior.empty() ? nullptr : &prior, init);
        json j;
        j["phenotypes"] = phenotypes_to_json(result.phenotypes);
        j["pose"] = pose_to_json(result.pose, bundle.skeleton);
        j["mean_error_m"] = result.mean_error;
        j["iterations"] = result.iterations_used;
        j["diverged"] = result.diverged;
        write_text(*out, j.dump(2) + "\n");
        DeformResult fitted = deform(bundle, result.phenotypes, result.pose);
        if (!report_csv->empty() || !report_ply->empty()) {
          std::filesystem::path csvp = report_csv->empty() ? *out + ".report.csv" : *report_csv;
          std::filesystem::path plyp = report_ply->empty() ? *out + ".report.ply" : *report_ply;
          fit_report(result, cloud, fitted.vertices, bundle.mesh.faces, csvp, plyp);
        }
        if (!mesh_out->empty()) {
          export_mesh(fitted.vertices, bundle.mesh.faces, *mesh_out, format_of(*mesh_out, ""));
        }
        std::cout << "mean_error_m=" << format_double(result.mean_error)
                  << " iterations=" << result.iterations_used << "\n";
        return 0;
      };
    });
  }

  // ---- retarget ----
  {
    auto* cmd = app.add_subcommand("retarget", "convert source bone orientations to a pose");
    auto bundle_path = std::make_shared<std::string>();
    auto orient_path = std::make_shared<std::string>();
    auto map_path = std::make_shared<std::string>();
    auto sets = std::make_shared<std::vector<std::string>>();
    auto out = std::make_shared<std::string>();
    cmd->add_option("--bundle", *bundle_path, "asset bundle")->required();
    cmd->add_option("--orientations", *orient_path,
                    "JSON {bone: [rx,ry,rz]} of world rotations (axis-angle)")
        ->required();
    cmd->add_option("--map", *map_path, "JSON {source bone: target bone}")->required();
    cmd->add_option("--set", *sets, "phenotype assignment name=value");
    cmd->add_option("--out", *out, "output pose JSON")->required();
    cmd->callback([=, &action] {
      PhenotypeVector pv = phenotypes_from_sets(*sets);
      action = [=] {
        AssetBundle bundle = load_bundle(*bundle_path);
        json jo = load_json(*orient_path);
        std::map<std::string, Mat3> orient;
        for (const auto& [name, r] : jo.items()) {
          orient[name] = rodrigues(Vec3(r.at(0), r.at(1), r.at(2)));
        }
        json jm = load_json(*map_path);
        std::map<std::string, std::string> mapping;
        for (const auto& [src, tgt] : jm.items()) mapping[src] = tgt.get<std::string>();
        Pose pose = retarget(orient, mapping, bundle, pv);
        write_text(*out, pose_to_json(pose, bundle.skeleton).dump(2) + "\n");
        return 0;
      };
    });
  }

  // ---- regressor ----
  {
    auto* cmd = app.add_subcommand("regressor", "cross-topology vertex regressors");
    cmd->require_subcommand(1);

    auto* init_cmd = cmd->add_subcommand("init", "barycentric initialization from rest meshes");
    {
      auto src = std::make_shared<std::string>();
      auto tgt = std::make_shared<std::string>();
      auto src_id = std::make_shared<std::string>("source");
      auto tgt_id = std::make_shared<std::string>("target");
      auto out = std::make_shared<std::string>();
      init_cmd->add_option("--source-bundle", *src, "source asset bundle")->required();
      init_cmd->add_option("--target-bundle", *tgt, "target asset bundle")->required();
      init_cmd->add_option("--source-id", *src_id, "source topology identifier");
      init_cmd->add_option("--target-id", *tgt_id, "target topology identifier");
      init_cmd->add_option("--out", *out, "output regressor JSON")->required();
      init_cmd->callback([=, &action] {
        action = [=] {
          AssetBundle sb = load_bundle(*src);
          AssetBundle tb = load_bundle(*tgt);
          SparseRegressor r = init_barycentric(sb.mesh.vertices, sb.mesh.faces, tb.mesh.vertices,
                                               *src_id, *tgt_id);
          save_regressor(r, *out);
          std::cout << "wrote " << *out << "\n";
          return 0;
        };
      });
    }

    auto* fit_cmd = cmd->add_subcommand("fit", "refine a regressor against target meshes");
    {
      auto src = std::make_shared<std::string>();
      auto tgt = std::make_shared<std::string>();
      auto reg_path = std::make_shared<std::string>();
      auto meshes_csv = std::make_shared<std::string>();
      auto rounds = std::make_shared<int>(2);
      auto seed = std::make_shared<std::uint64_t>(0);
      auto out = std::make_shared<std::string>();
      fit_cmd->add_option("--source-bundle", *src, "source asset bundle")->required();
      fit_cmd->add_option("--target-bundle", *tgt, "target bundle (symmetry + topology)")->required();
      fit_cmd->add_option("--regressor", *reg_path, "initial regressor (default: barycentric init)");
      fit_cmd->add_option("--targets", *meshes_csv, "comma-separated target mesh files")->required();
      fit_cmd->add_option("--rounds", *rounds, "alternation rounds")->check(CLI::PositiveNumber);
      fit_cmd->add_option("--seed", *seed, "seed for the per-mesh fits");
      fit_cmd->add_option("--out", *out, "output regressor JSON")->required();
      fit_cmd->callback([=, &action] {
        action = [=] {
          AssetBundle sb = load_bundle(*src);
          AssetBundle tb = load_bundle(*tgt);
          SparseRegressor r0 =
              reg_path->empty()
                  ? init_barycentric(sb.mesh.vertices, sb.mesh.faces, tb.mesh.vertices)
                  : load_regressor(*reg_path);
          std::vector<std::vector<Vec3>> targets;
          std::istringstream ss(*meshes_csv);
          std::string item;
          while (std::getline(ss, item, ',')) {
            if (!item.empty()) targets.push_back(load_points(item));
          }
          RefineOptions opts;
          opts.rounds = *rounds;
          opts.fit.seed = *seed;
          RefineResult res = refine(r0, sb, targets, sb.symmetry, tb.symmetry, opts);
          save_regressor(res.regressor, *out);
          std::cout << "residual_rms_m=";
          for (size_t i = 0; i < res.residual_history.size(); ++i) {
            std::cout << (i ? "," : "") << format_double(res.residual_history[i]);
          }
          std::cout << "\n";
          return 0;
        };
      });
    }

    auto* apply_cmd = cmd->add_subcommand("apply", "map a source mesh through a regressor");
    {
      auto reg_path = std::make_shared<std::string>();
      auto mesh_path = std::make_shared<std::string>();
      auto tgt_bundle = std::make_shared<std::string>();
      auto out = std::make_shared<std::string>();
      apply_cmd->add_option("--regressor", *reg_path, "regressor JSON")->required();
      apply_cmd->add_option("--mesh", *mesh_path, "source-topology mesh (obj|ply)")->required();
      apply_cmd->add_option("--target-bundle", *tgt_bundle,
                            "target bundle providing faces for the output mesh");
      apply_cmd->add_option("--out", *out, "output mesh")->required();
      apply_cmd->callback([=, &action] {
        action = [=] {
          SparseRegressor r = load_regressor(*reg_path);
          std::vector<Vec3> src = load_points(*mesh_path);
          std::vector<Vec3> mapped = anny::apply(r, src);
          std::vector<Quad> faces;
          if (!tgt_bundle->empty()) {
            AssetBundle tb = load_bundle(*tgt_bundle);
            if (tb.vertex_count() != r.target_count) {
              throw DomainError("target bundle vertex count does not match regressor");
            }
            faces = tb.mesh.faces;
          }
          export_mesh(mapped, faces, *out, format_of(*out, ""));
          return 0;
        };
      });
    }

    auto* cycle_cmd = cmd->add_subcommand("cycle", "mean cyclic error of a regressor pair");
    {
      auto fwd = std::make_shared<std::string>();
      auto bwd = std::make_shared<std::string>();
      auto meshes_csv = std::make_shared<std::string>();
      auto out = std::make_shared<std::string>();
      cycle_cmd->add_option("--forward", *fwd, "A->B regressor JSON")->required();
      cycle_cmd->add_option("--backward", *bwd, "B->A regressor JSON")->required();
      cycle_cmd->add_option("--meshes", *meshes_csv, "comma-separated A-topology meshes")->required();
      cycle_cmd->add_option("--out", *out, "optional JSON output");
      cycle_cmd->callback([=, &action] {
        action = [=] {
          SparseRegressor f = load_regressor(*fwd);
          SparseRegressor b = load_regressor(*bwd);
          std::vector<std::vector<Vec3>> meshes;
          std::istringstream ss(*meshes_csv);
          std::string item;
          while (std::getline(ss, item, ',')) {
            if (!item.empty()) meshes.push_back(load_points(item));
          }
          double err = cyclic_error(f, b, meshes);
          std::cout << "cyclic_error_m=" << format_double(err) << "\n";
          if (!out->empty()) {
            json j;
            j["cyclic_error_m"] = err;
            write_text(*out, j.dump(2) + "\n");
          }
          return 0;
        };
      });
    }
  }

  // ---- bench ----
  {
    auto* cmd = app.add_subcommand("bench", "batched forward-pass benchmark");
    auto bundle_path = std::make_shared<std::string>();
    auto batches_csv = std::make_shared<std::string>("1,64,1024,8192");
    auto phen_csv = std::make_shared<std::string>("");
    auto repeats = std::make_shared<int>(3);
    auto seed = std::make_shared<std::uint64_t>(0);
    auto csv_path = std::make_shared<std::string>();
    cmd->add_option("--bundle", *bundle_path, "asset bundle")->required();
    cmd->add_option("--batches", *batches_csv, "comma-separated batch sizes");
    cmd->add_option("--phenotypes", *phen_csv,
                    "comma-separated phenotype counts (default: full schema)");
    cmd->add_option("--repeats", *repeats, "timed repeats per cell (median reported)")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--seed", *seed, "input-generation seed");
    cmd->add_option("--csv", *csv_path, "write report CSV");
    cmd->callback([=, &action] {
      action = [=] {
        AssetBundle bundle = load_bundle(*bundle_path);
        std::vector<int> batches, phen_counts;
        {
          std::istringstream ss(*batches_csv);
          std::string item;
          while (std::getline(ss, item, ',')) {
            if (!item.empty()) batches.push_back(std::stoi(item));
          }
          for (size_t i = 1; i < batches.size(); ++i) {
            if (batches[i] <= batches[i - 1]) throw DomainError("batch sizes must be increasing");
          }
          if (phen_csv->empty()) {
            phen_counts.push_back(bundle.schema.size());
          } else {
            std::istringstream ps(*phen_csv);
            while (std::getline(ps, item, ',')) {
              if (!item.empty()) phen_counts.push_back(std::stoi(item));
            }
          }
        }
        std::string csv =
            "batch_size,wall_time_ms,per_body_ms,peak_memory_bytes,phenotype_count,checksum\n";
        std::cout << "batch_size  phenotypes  wall_ms        per_body_ms    peak_mem_mb  checksum\n";
        for (int k : phen_counts) {
          int keff = std::min(k, bundle.schema.size());
          for (int batch : batches) {
            std::string wall_s = "nan", per_s = "nan", checksum_s = "nan";
            long mem = 0;
            try {
              std::mt19937_64 rng(mix_seed(*seed, 77 * batch + keff));
              std::uniform_real_distribution<double> u(0.0, 1.0);
              std::vector<PhenotypeVector> phens(batch);
              std::vector<Pose> poses(batch, Pose::identity(bundle.bone_count()));
              for (int i = 0; i < batch; ++i) {
                for (int p = 0; p < keff; ++p) {
                  phens[i].values[bundle.schema.parameters[p].name] = u(rng);
                }
                for (auto& r : poses[i].joint_rotations) {
                  r = Vec3(u(rng) - 0.5, u(rng) - 0.5, u(rng) - 0.5) * 0.6;
                }
                poses[i].root_rotation = Vec3(u(rng) - 0.5, u(rng) - 0.5, u(rng) - 0.5) * 0.6;
                poses[i].root_translation = Vec3(u(rng) - 0.5, u(rng) - 0.5, u(rng) - 0.5) * 0.5;
              }
              DeformOptions opts;
              opts.active_params = keff;
              deform_batch(bundle, phens, poses, opts);  // warm-up
              std::vector<double> times;
              double checksum = 0;
              for (int rep = 0; rep < *repeats; ++rep) {
                auto t0 = std::chrono::steady_clock::now();
                BatchDeformResult r = deform_batch(bundle, phens, poses, opts);
                auto t1 = std::chrono::steady_clock::now();
                times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
                if (rep == 0) {
                  checksum = 0;
                  for (double v : r.vertices) checksum += v;
                }
              }
              std::sort(times.begin(), times.end());
              double wall = times[times.size() / 2];
              mem = peak_rss_bytes();
              wall_s = format_double(wall);
              per_s = format_double(wall / batch);
              checksum_s = format_double(checksum);
            } catch (const std::bad_alloc&) {
              std::cerr << "bench: out of memory at batch " << batch << ", phenotypes " << keff
                        << "\n";
            }
            csv += std::to_string(batch) + "," + wall_s + "," + per_s + "," + std::to_string(mem) +
                   "," + std::to_string(keff) + "," + checksum_s + "\n";
            char line[256];
            std::snprintf(line, sizeof(line), "%-11d %-11d %-14s %-14s %-12.1f %s\n", batch, keff,
                          wall_s.c_str(), per_s.c_str(), mem / 1048576.0, checksum_s.c_str());
            std::cout << line;
          }
        }
        if (!csv_path->empty()) write_text(*csv_path, csv);
        return 0;
      };
    });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    anny::set_thread_count(threads > 0 ? threads
                                       : anny::thread_count());
    return action ? action() : 2;
  } catch (const anny::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
