#pragma once

// Scan registration: alternates closest-point correspondence from scan
// points to the posed mesh with backtracking gradient descent on a
// Huber-robustified squared distance over phenotype and pose parameters,
// using the pose engine's analytic Jacobians. Two phases: root + phenotypes
// with joints frozen, then all joints released.

#include "anny/bvh.hpp"
#include "anny/mesh_io.hpp"
#include "anny/pose.hpp"
#include "anny/stats.hpp"

#include <optional>
#include <random>

namespace anny {

enum class ScanRegion : std::uint8_t { Body = 0, Head = 1, Hand = 2, Excluded = 3 };

struct ScanCloud {
  std::vector<Vec3> points;
  std::vector<ScanRegion> regions;  // empty means all Body

  bool excluded(size_t i) const { return !regions.empty() && regions[i] == ScanRegion::Excluded; }

  void validate() const {
    if (!regions.empty() && regions.size() != points.size()) {
      throw ValidationError("scan: region tag count != point count");
    }
    for (const Vec3& p : points) {
      if (!p.allFinite()) throw ValidationError("scan: non-finite point coordinates");
    }
  }
};

struct FitConfig {
  int max_outer_iters = 40;
  int inner_steps = 12;
  double step_size = 0.05;     // initial step scale, adapted by backtracking
  double huber_delta = 0.005;  // meters
  double prior_weight = 0.0;
  enum class Bounds { Clamp, SigmoidReparam } bounds = Bounds::SigmoidReparam;
  std::uint64_t seed = 0;
  int phase1_outer_iters = 10;  // joints frozen
  double converge_tol = 1e-5;   // meters of mean-error improvement
  int divergence_guard = 5;

  void validate() const {
    if (max_outer_iters <= 0 || inner_steps <= 0) {
      throw DomainError("fit config: iteration counts must be positive");
    }
    if (!(huber_delta > 0)) throw DomainError("fit config: huber_delta must be positive");
  }
};

struct FitResult {
  PhenotypeVector phenotypes;
  Pose pose;
  std::vector<double> point_to_mesh_errors;  // per scan point, meters
  std::vector<char> excluded;                // parallel to errors
  double mean_error = std::numeric_limits<double>::infinity();
  int iterations_used = 0;
  bool diverged = false;
};

struct PointToMesh {
  double distance = 0;
  Vec3 closest = Vec3::Zero();
  std::int32_t triangle = -1;
  Vec3 bary = Vec3::Zero();
};

inline PointToMesh point_to_mesh(const Vec3& point, const Bvh& bvh) {
  auto hit = bvh.closest_point(point);
  return {std::sqrt(hit.sq_dist), hit.point, hit.tri, hit.bary};
}

// Area-weighted uniform surface sampling (deterministic per seed).
inline std::vector<Vec3> sample_surface(const std::vector<Vec3>& vertices,
                                        const std::vector<Quad>& faces, int count,
                                        std::uint64_t seed) {
  std::vector<Tri> tris = triangulate(faces);
  std::vector<double> cdf(tris.size());
  double total = 0;
  for (size_t t = 0; t < tris.size(); ++t) {
    const Tri& tri = tris[t];
    total += 0.5 * (vertices[tri[1]] - vertices[tri[0]]).cross(vertices[tri[2]] - vertices[tri[0]]).norm();
    cdf[t] = total;
  }
  if (total <= 0) throw DomainError("sample_surface: degenerate mesh");
  std::mt19937_64 rng(mix_seed(seed, 0x736d706cULL));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Vec3> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    double r = u(rng) * total;
    size_t t = std::lower_bound(cdf.begin(), cdf.end(), r) - cdf.begin();
    if (t >= tris.size()) t = tris.size() - 1;
    double su = std::sqrt(u(rng));
    double sv = u(rng);
    double b0 = 1.0 - su, b1 = su * (1.0 - sv), b2 = su * sv;
    const Tri& tri = tris[t];
    out.push_back(b0 * vertices[tri[0]] + b1 * vertices[tri[1]] + b2 * vertices[tri[2]]);
  }
  return out;
}

// Interpolates the bracketing age buckets of a BetaTable into a per-phenotype
// prior for fit_scan.
inline std::map<std::string, BetaParams> beta_prior_at(const BetaTable& table, double age_years,
                                                       int gender, const AgeMap& age_map) {
  (void)age_map;
  std::vector<const BetaTable::Bucket*> buckets;
  for (const auto& b : table.buckets) {
    if (b.gender == gender) buckets.push_back(&b);
  }
  if (buckets.empty()) throw DomainError("beta_prior_at: no buckets for gender " + std::to_string(gender));
  double age_months = age_years * 12.0;
  if (age_months < buckets.front()->age_months || age_months > buckets.back()->age_months) {
    throw DomainError("beta_prior_at: age outside table range");
  }
  size_t hi = 0;
  while (hi < buckets.size() && buckets[hi]->age_months < age_months) ++hi;
  size_t lo = hi == 0 ? 0 : hi - 1;
  if (hi == buckets.size()) hi = lo;
  double t = buckets[hi]->age_months == buckets[lo]->age_months
                 ? 0.0
                 : (age_months - buckets[lo]->age_months) /
                       static_cast<double>(buckets[hi]->age_months - buckets[lo]->age_months);
  std::map<std::string, BetaParams> out;
  for (const auto& [name, p_lo] : buckets[lo]->params) {
    const BetaParams& p_hi = buckets[hi]->params.at(name);
    out[name] = {p_lo.alpha + t * (p_hi.alpha - p_lo.alpha), p_lo.beta + t * (p_hi.beta - p_lo.beta)};
  }
  return out;
}

namespace fit_detail {

inline double sigmoid(double y) { return 1.0 / (1.0 + std::exp(-y)); }
inline double logit(double p) { return std::log(p / (1.0 - p)); }

// Optimization vector layout: [phenotypes(P), root_rot(3), root_trans(3),
// joint_rots(3B)]. Phenotypes are stored reparameterized (sigmoid) or raw
// (clamp), depending on FitConfig::Bounds.
struct ParamLayout {
  int P = 0, B = 0;
  int size() const { return P + 6 + 3 * B; }
};

inline std::vector<double> pack(const ParamLayout& lay, const std::vector<double>& phen,
                                const Pose& pose, FitConfig::Bounds bounds) {
  std::vector<double> x(lay.size());
  for (int i = 0; i < lay.P; ++i) {
    double p = std::clamp(phen[i], 1e-4, 1.0 - 1e-4);
    x[i] = bounds == FitConfig::Bounds::SigmoidReparam ? logit(p) : p;
  }
  for (int k = 0; k < 3; ++k) x[lay.P + k] = pose.root_rotation[k];
  for (int k = 0; k < 3; ++k) x[lay.P + 3 + k] = pose.root_translation[k];
  for (int b = 0; b < lay.B; ++b) {
    for (int k = 0; k < 3; ++k) x[lay.P + 6 + 3 * b + k] = pose.joint_rotations[b][k];
  }
  return x;
}

inline void unpack(const ParamLayout& lay, const std::vector<double>& x, FitConfig::Bounds bounds,
                   std::vector<double>& phen, Pose& pose) {
  phen.resize(lay.P);
  for (int i = 0; i < lay.P; ++i) {
    phen[i] = bounds == FitConfig::Bounds::SigmoidReparam ? sigmoid(x[i])
                                                          : std::clamp(x[i], 0.0, 1.0);
  }
  pose.joint_rotations.resize(lay.B);
  for (int k = 0; k < 3; ++k) pose.root_rotation[k] = x[lay.P + k];
  for (int k = 0; k < 3; ++k) pose.root_translation[k] = x[lay.P + 3 + k];
  for (int b = 0; b < lay.B; ++b) {
    for (int k = 0; k < 3; ++k) pose.joint_rotations[b][k] = x[lay.P + 6 + 3 * b + k];
  }
}

struct Correspondence {
  std::int32_t point = 0;
  std::int32_t triangle = 0;
  Vec3 bary = Vec3::Zero();
};

// Centroid + principal-axes alignment; among the four proper sign choices
// picks the one with the lowest mean squared distance to the scan.
inline void align_root(const std::vector<Vec3>& model_points, const std::vector<Vec3>& scan_points,
                       Pose& pose) {
  auto centroid = [](const std::vector<Vec3>& pts) {
    Vec3 c = Vec3::Zero();
    for (const Vec3& p : pts) c += p;
    return Vec3(c / static_cast<double>(pts.size()));
  };
  auto axes = [](const std::vector<Vec3>& pts, const Vec3& c) {
    Mat3 cov = Mat3::Zero();
    for (const Vec3& p : pts) cov += (p - c) * (p - c).transpose();
    Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
    Mat3 v = eig.eigenvectors();  // ascending eigenvalues
    if (v.determinant() < 0) v.col(0) = -v.col(0);
    return v;
  };
  Vec3 cm = centroid(model_points), cs = centroid(scan_points);
  Mat3 vm = axes(model_points, cm), vs = axes(scan_points, cs);

  double best_cost = std::numeric_limits<double>::infinity();
  Mat3 best_R = Mat3::Identity();
  for (int s0 : {1, -1}) {
    for (int s1 : {1, -1}) {
      int s2 = s0 * s1;  // keep det = +1
      Mat3 flip = Vec3(static_cast<double>(s0), static_cast<double>(s1), static_cast<double>(s2))
                      .asDiagonal();
      Mat3 R = vs * flip * vm.transpose();
      Vec3 t = cs - R * cm;
      double cost = 0;
      for (size_t i = 0; i < model_points.size(); i += 7) {  // subsample for speed
        Vec3 moved = R * model_points[i] + t;
        double dmin = std::numeric_limits<double>::infinity();
        for (size_t j = 0; j < scan_points.size(); j += 23) {
          dmin = std::min(dmin, (scan_points[j] - moved).squaredNorm());
        }
        cost += dmin;
      }
      if (cost < best_cost) {
        best_cost = cost;
        best_R = R;
      }
    }
  }
  pose.root_rotation = log_rotation(best_R);
  pose.root_translation = cs - best_R * cm;
}

}  // namespace fit_detail

inline FitResult fit_scan(const AssetBundle& bundle, const ScanCloud& scan, const FitConfig& config,
                          const std::map<std::string, BetaParams>* prior = nullptr,
                          const std::optional<std::pair<PhenotypeVector, Pose>>& init = std::nullopt) {
  using namespace fit_detail;
  config.validate();
  scan.validate();

  std::vector<std::int32_t> valid;
  for (size_t i = 0; i < scan.points.size(); ++i) {
    if (!scan.excluded(i)) valid.push_back(static_cast<std::int32_t>(i));
  }
  if (valid.empty()) throw DomainError("fit_scan: degenerate scan, all points excluded");

  const int P = bundle.schema.size();
  const int B = bundle.bone_count();
  ParamLayout lay{P, B};

  // Prior terms resolved to schema indices once.
  std::vector<std::pair<int, BetaParams>> prior_terms;
  if (prior && config.prior_weight > 0) {
    for (const auto& [name, bp] : *prior) {
      int idx = bundle.schema.find(name);
      if (idx < 0) throw DomainError("fit_scan: prior parameter '" + name + "' not in schema");
      prior_terms.emplace_back(idx, bp);
    }
  }

  // Initialization.
  std::vector<double> phen(P);
  Pose pose = Pose::identity(B);
  if (init) {
    phen = resolve_phenotypes(bundle.schema, init->first);
    pose = init->second;
    validate_pose(pose, B);
  } else {
    for (int i = 0; i < P; ++i) phen[i] = bundle.schema.parameters[i].neutral;
    DeformResult neutral = deform(bundle, PhenotypeVector{}, pose);
    std::vector<Vec3> valid_points;
    valid_points.reserve(valid.size());
    for (std::int32_t i : valid) valid_points.push_back(scan.points[i]);
    align_root(neutral.vertices, valid_points, pose);
  }
  std::vector<double> x = pack(lay, phen, pose, config.bounds);

  const std::vector<Tri> tris = triangulate(bundle.mesh.faces);

  auto deform_at = [&](const std::vector<double>& xv, bool jac) {
    std::vector<double> ph;
    Pose ps = Pose::identity(B);
    unpack(lay, xv, config.bounds, ph, ps);
    PhenotypeVector pv;
    for (int i = 0; i < P; ++i) pv.values[bundle.schema.parameters[i].name] = ph[i];
    DeformOptions opts;
    opts.want_jacobians = jac;
    return deform(bundle, pv, ps, opts);
  };

  // Robust objective with fixed correspondences. Huber rho(r) = r^2/2 for
  // r <= delta, delta(r - delta/2) beyond.
  auto objective = [&](const DeformResult& dr, const std::vector<Correspondence>& corr,
                       const std::vector<double>& xv, std::vector<double>* grad) {
    double E = 0;
    if (grad) grad->assign(lay.size(), 0.0);
    const double delta = config.huber_delta;
    const double inv_n = 1.0 / static_cast<double>(corr.size());
    // Fixed-size chunked partial sums keep the reduction order deterministic.
    const std::int64_t n = static_cast<std::int64_t>(corr.size());
    const std::int64_t chunk = 2048;
    const std::int64_t nchunks = (n + chunk - 1) / chunk;
    std::vector<double> partialE(nchunks, 0.0);
    std::vector<std::vector<double>> partialG;
    if (grad) partialG.assign(nchunks, std::vector<double>(lay.size(), 0.0));
    parallel_for(nchunks, [&](std::int64_t clo, std::int64_t chi) {
      for (std::int64_t ci = clo; ci < chi; ++ci) {
        double* g = grad ? partialG[ci].data() : nullptr;
        for (std::int64_t k = ci * chunk; k < std::min(n, (ci + 1) * chunk); ++k) {
          const Correspondence& c = corr[k];
          const Tri& tri = tris[c.triangle];
          Vec3 s = c.bary[0] * dr.vertices[tri[0]] + c.bary[1] * dr.vertices[tri[1]] +
                   c.bary[2] * dr.vertices[tri[2]];
          Vec3 r = s - scan.points[c.point];
          double dist = r.norm();
          double w;  // d rho / d dist / dist  (so grad term = w * r^T J)
          if (dist <= delta) {
            partialE[ci] += 0.5 * dist * dist;
            w = 1.0;
          } else {
            partialE[ci] += delta * (dist - 0.5 * delta);
            w = delta / dist;
          }
          if (g) {
            for (int corner = 0; corner < 3; ++corner) {
              double bw = c.bary[corner];
              if (bw == 0) continue;
              int row = 3 * tri[corner];
              for (int cc = 0; cc < 3; ++cc) {
                double coef = w * bw * r[cc];
                // pose columns
                for (int col = 0; col < 6 + 3 * B; ++col) {
                  g[P + col] += coef * dr.pose_jacobian(row + cc, col);
                }
                // shape columns
                for (size_t j = 0; j < dr.shape_param_indices.size(); ++j) {
                  g[dr.shape_param_indices[j]] +=
                      coef * dr.shape_jacobian(row + cc, static_cast<int>(j));
                }
              }
            }
          }
        }
      }
    });
    for (std::int64_t ci = 0; ci < nchunks; ++ci) E += partialE[ci];
    E *= inv_n;
    if (grad) {
      for (std::int64_t ci = 0; ci < nchunks; ++ci) {
        for (int j = 0; j < lay.size(); ++j) (*grad)[j] += partialG[ci][j];
      }
      for (double& gj : *grad) gj *= inv_n;
    }

    // Bound reparameterization and prior act on the phenotype block.
    std::vector<double> ph;
    Pose ps = Pose::identity(B);
    unpack(lay, xv, config.bounds, ph, ps);
    for (const auto& [idx, bp] : prior_terms) {
      double p = std::clamp(ph[idx], 1e-9, 1.0 - 1e-9);
      E += config.prior_weight * (-(bp.alpha - 1.0) * std::log(p) - (bp.beta - 1.0) * std::log(1.0 - p));
      if (grad) {
        (*grad)[idx] += config.prior_weight * (-(bp.alpha - 1.0) / p + (bp.beta - 1.0) / (1.0 - p));
      }
    }
    if (grad && config.bounds == FitConfig::Bounds::SigmoidReparam) {
      for (int i = 0; i < P; ++i) (*grad)[i] *= ph[i] * (1.0 - ph[i]);  // dp/dy
    }
    return E;
  };

  FitResult best;
  best.excluded.assign(scan.points.size(), 0);
  for (size_t i = 0; i < scan.points.size(); ++i) best.excluded[i] = scan.excluded(i) ? 1 : 0;

  double prev_mean = std::numeric_limits<double>::infinity();
  int worse_streak = 0;
  std::vector<double> rms(lay.size(), 0.0);

  int outer = 0;
  for (; outer < config.max_outer_iters; ++outer) {
    bool joints_frozen = outer < config.phase1_outer_iters;

    DeformResult posed = deform_at(x, false);
    Bvh bvh(posed.vertices, tris);

    // Correspondences + current mean error.
    std::vector<Correspondence> corr(valid.size());
    std::vector<double> errors(scan.points.size(), 0.0);
    parallel_for(static_cast<std::int64_t>(valid.size()), [&](std::int64_t lo, std::int64_t hi) {
      for (std::int64_t k = lo; k < hi; ++k) {
        std::int32_t i = valid[k];
        auto hit = bvh.closest_point(scan.points[i]);
        corr[k] = {i, hit.tri, hit.bary};
        errors[i] = std::sqrt(hit.sq_dist);
      }
    });
    double mean_error = 0;
    for (std::int32_t i : valid) mean_error += errors[i];
    mean_error /= static_cast<double>(valid.size());

    if (mean_error < best.mean_error) {
      best.mean_error = mean_error;
      best.point_to_mesh_errors = errors;
      unpack(lay, x, config.bounds, phen, pose);
      best.pose = pose;
      best.phenotypes.values.clear();
      for (int i = 0; i < P; ++i) best.phenotypes.values[bundle.schema.parameters[i].name] = phen[i];
      worse_streak = 0;
    } else {
      if (++worse_streak >= config.divergence_guard) {
        best.diverged = true;
        break;
      }
    }
    if (std::abs(prev_mean - mean_error) < config.converge_tol && outer > 0 && !joints_frozen) {
      ++outer;
      break;
    }
    prev_mean = mean_error;

    // Inner descent on the fixed correspondences.
    double eta = config.step_size;
    DeformResult dr = deform_at(x, true);
    double E = objective(dr, corr, x, nullptr);
    std::vector<double> grad;
    for (int step = 0; step < config.inner_steps; ++step) {
      objective(dr, corr, x, &grad);
      if (joints_frozen) {
        for (int b = 0; b < 3 * B; ++b) grad[P + 6 + b] = 0.0;
      }
      // Per-parameter adaptive scaling (RMS accumulator).
      double gnorm2 = 0;
      for (int j = 0; j < lay.size(); ++j) {
        rms[j] = 0.9 * rms[j] + 0.1 * grad[j] * grad[j];
        gnorm2 += grad[j] * grad[j];
      }
      if (gnorm2 < 1e-24) break;
      std::vector<double> dir(lay.size());
      for (int j = 0; j < lay.size(); ++j) dir[j] = grad[j] / (std::sqrt(rms[j]) + 1e-9);

      bool accepted = false;
      for (int bt = 0; bt < 24; ++bt) {
        std::vector<double> xt = x;
        for (int j = 0; j < lay.size(); ++j) xt[j] -= eta * dir[j];
        DeformResult drt = deform_at(xt, true);
        double Et = objective(drt, corr, xt, nullptr);
        if (Et < E) {
          x = std::move(xt);
          dr = std::move(drt);
          E = Et;
          eta = std::min(eta * 1.5, 4.0 * config.step_size);
          accepted = true;
          break;
        }
        eta *= 0.5;
      }
      if (!accepted) break;
    }
  }
  best.iterations_used = outer;
  return best;
}

// Per-point error CSV plus a PLY of the fitted mesh carrying a per-vertex
// scalar (distance from each vertex to its nearest non-excluded scan point).
inline void fit_report(const FitResult& result, const ScanCloud& scan,
                       const std::vector<Vec3>& fitted_vertices, const std::vector<Quad>& faces,
                       const std::filesystem::path& csv_path,
                       const std::filesystem::path& ply_path) {
  std::string csv = "point_index,x,y,z,error_m\n";
  for (size_t i = 0; i < scan.points.size(); ++i) {
    if (result.excluded[i]) continue;
    csv += std::to_string(i) + "," + format_double(scan.points[i].x()) + "," +
           format_double(scan.points[i].y()) + "," + format_double(scan.points[i].z()) + "," +
           format_double(result.point_to_mesh_errors[i]) + "\n";
  }
  detail::write_file(csv_path, csv);

  std::vector<double> vertex_error(fitted_vertices.size(), 0.0);
  parallel_for(static_cast<std::int64_t>(fitted_vertices.size()),
               [&](std::int64_t lo, std::int64_t hi) {
                 for (std::int64_t v = lo; v < hi; ++v) {
                   double dmin = std::numeric_limits<double>::infinity();
                   for (size_t i = 0; i < scan.points.size(); ++i) {
                     if (result.excluded[i]) continue;
                     dmin = std::min(dmin, (scan.points[i] - fitted_vertices[v]).norm());
                   }
                   vertex_error[v] = dmin;
                 }
               });
  detail::write_file(ply_path,
                     ply_string(fitted_vertices, faces, PlyFaceMode::Quads, &vertex_error));
}

}  // namespace anny
