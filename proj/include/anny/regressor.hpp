#pragma once

// Sparse linear vertex regressors between two mesh topologies. Rows are
// affine combinations (coefficients sum to 1), initialized from barycentric
// projections onto the source surface and refined by least squares under a
// left/right symmetry constraint.

#include "anny/bvh.hpp"
#include "anny/fitting.hpp"

#include "json.hpp"

namespace anny {

struct SparseRegressor {
  struct Row {
    std::vector<VertexIndex> src;  // sorted ascending
    std::vector<double> coeff;     // parallel, sums to 1
  };
  std::string source_topology = "source";
  std::string target_topology = "target";
  int source_count = 0;
  int target_count = 0;
  int max_coeffs = 8;
  std::vector<Row> rows;  // one per target vertex
};

inline void validate_regressor(const SparseRegressor& r) {
  if (static_cast<int>(r.rows.size()) != r.target_count) {
    throw ValidationError("regressor: row count != target vertex count");
  }
  for (size_t i = 0; i < r.rows.size(); ++i) {
    const auto& row = r.rows[i];
    if (row.src.size() != row.coeff.size() || row.src.empty()) {
      throw ValidationError("regressor: row " + std::to_string(i) + " is malformed");
    }
    if (static_cast<int>(row.src.size()) > r.max_coeffs) {
      throw ValidationError("regressor: row " + std::to_string(i) + " exceeds max coefficients");
    }
    double sum = 0;
    for (size_t k = 0; k < row.src.size(); ++k) {
      if (row.src[k] < 0 || row.src[k] >= r.source_count) {
        throw ValidationError("regressor: row " + std::to_string(i) + " references invalid source vertex");
      }
      if (k > 0 && row.src[k] <= row.src[k - 1]) {
        throw ValidationError("regressor: row " + std::to_string(i) + " indices not sorted");
      }
      sum += row.coeff[k];
    }
    if (std::abs(sum - 1.0) > 1e-9) {
      throw ValidationError("regressor: row " + std::to_string(i) + " coefficients sum to " +
                            format_double(sum));
    }
  }
}

// Barycentric projection of each target vertex onto the triangulated source
// mesh (3 coefficients; exact-zero corners dropped).
inline SparseRegressor init_barycentric(const std::vector<Vec3>& source_vertices,
                                        const std::vector<Quad>& source_faces,
                                        const std::vector<Vec3>& target_vertices,
                                        const std::string& source_topology = "source",
                                        const std::string& target_topology = "target") {
  std::vector<Tri> tris = triangulate(source_faces);
  Bvh bvh(source_vertices, tris);
  SparseRegressor r;
  r.source_topology = source_topology;
  r.target_topology = target_topology;
  r.source_count = static_cast<int>(source_vertices.size());
  r.target_count = static_cast<int>(target_vertices.size());
  r.rows.resize(target_vertices.size());
  parallel_for(static_cast<std::int64_t>(target_vertices.size()),
               [&](std::int64_t lo, std::int64_t hi) {
                 for (std::int64_t i = lo; i < hi; ++i) {
                   auto hit = bvh.closest_point(target_vertices[i]);
                   const Tri& tri = tris[hit.tri];
                   // Exact corner hits collapse to a single unit coefficient
                   // so identical topologies map by the identity, exactly.
                   int exact_corner = -1;
                   for (int c = 0; c < 3; ++c) {
                     if (source_vertices[tri[c]] == target_vertices[i]) exact_corner = c;
                   }
                   if (exact_corner >= 0) {
                     r.rows[i].src.push_back(tri[exact_corner]);
                     r.rows[i].coeff.push_back(1.0);
                     continue;
                   }
                   std::map<VertexIndex, double> acc;  // merges repeated corners
                   for (int c = 0; c < 3; ++c) {
                     if (hit.bary[c] != 0.0) acc[tri[c]] += hit.bary[c];
                   }
                   for (auto [j, w] : acc) {
                     r.rows[i].src.push_back(j);
                     r.rows[i].coeff.push_back(w);
                   }
                 }
               });
  return r;
}

inline std::vector<Vec3> apply(const SparseRegressor& r, const std::vector<Vec3>& source_vertices) {
  if (static_cast<int>(source_vertices.size()) != r.source_count) {
    throw DomainError("regressor apply: expected " + std::to_string(r.source_count) +
                      " source vertices, got " + std::to_string(source_vertices.size()));
  }
  std::vector<Vec3> out(r.rows.size());
  for (size_t i = 0; i < r.rows.size(); ++i) {
    Vec3 acc = Vec3::Zero();
    for (size_t k = 0; k < r.rows[i].src.size(); ++k) {
      acc += r.rows[i].coeff[k] * source_vertices[r.rows[i].src[k]];
    }
    out[i] = acc;
  }
  return out;
}

// mirror(R)[i][j] = R[sigma_t(i)][sigma_s(j)] -- conjugation by both
// symmetry involutions.
inline SparseRegressor mirror(const SparseRegressor& r, const std::vector<VertexIndex>& sigma_source,
                              const std::vector<VertexIndex>& sigma_target) {
  SparseRegressor out = r;
  for (int i = 0; i < r.target_count; ++i) {
    const auto& src_row = r.rows[sigma_target[i]];
    std::map<VertexIndex, double> acc;
    for (size_t k = 0; k < src_row.src.size(); ++k) {
      acc[sigma_source[src_row.src[k]]] += src_row.coeff[k];
    }
    out.rows[i].src.clear();
    out.rows[i].coeff.clear();
    for (auto [j, w] : acc) {
      out.rows[i].src.push_back(j);
      out.rows[i].coeff.push_back(w);
    }
  }
  return out;
}

// Exact projection onto mirror-invariant regressors: (R + mirror(R)) / 2.
inline SparseRegressor symmetrize(const SparseRegressor& r,
                                  const std::vector<VertexIndex>& sigma_source,
                                  const std::vector<VertexIndex>& sigma_target) {
  SparseRegressor m = mirror(r, sigma_source, sigma_target);
  SparseRegressor out = r;
  for (int i = 0; i < r.target_count; ++i) {
    std::map<VertexIndex, double> acc;
    for (size_t k = 0; k < r.rows[i].src.size(); ++k) acc[r.rows[i].src[k]] = 0.0;
    for (size_t k = 0; k < m.rows[i].src.size(); ++k) acc[m.rows[i].src[k]] = 0.0;
    for (auto& [j, w] : acc) {
      double a = 0, b = 0;
      for (size_t k = 0; k < r.rows[i].src.size(); ++k) {
        if (r.rows[i].src[k] == j) a = r.rows[i].coeff[k];
      }
      for (size_t k = 0; k < m.rows[i].src.size(); ++k) {
        if (m.rows[i].src[k] == j) b = m.rows[i].coeff[k];
      }
      w = 0.5 * a + 0.5 * b;
    }
    out.rows[i].src.clear();
    out.rows[i].coeff.clear();
    for (auto [j, w] : acc) {
      out.rows[i].src.push_back(j);
      out.rows[i].coeff.push_back(w);
    }
  }
  return out;
}

inline double cyclic_error(const SparseRegressor& forward, const SparseRegressor& backward,
                           const std::vector<std::vector<Vec3>>& meshes) {
  if (forward.source_count != backward.target_count ||
      forward.target_count != backward.source_count) {
    throw DomainError("cyclic_error: regressors are not composable");
  }
  double sum = 0;
  std::int64_t count = 0;
  for (const auto& verts : meshes) {
    std::vector<Vec3> round = anny::apply(backward, anny::apply(forward, verts));
    for (size_t v = 0; v < verts.size(); ++v) {
      sum += (round[v] - verts[v]).norm();
      ++count;
    }
  }
  if (count == 0) throw DomainError("cyclic_error: no meshes given");
  return sum / static_cast<double>(count);
}

// ---------------------------------------------------------------------------
// Refinement.

struct RefineOptions {
  int rounds = 2;
  FitConfig fit;  // used to register the source model to each target mesh
  // Optional warm starts for the per-target fits (ground truth in tests).
  std::vector<std::pair<PhenotypeVector, Pose>> inits;
};

struct RefineResult {
  SparseRegressor regressor;
  std::vector<double> residual_history;  // RMS meters per accepted round, non-increasing
  std::vector<std::pair<PhenotypeVector, Pose>> fitted;  // per target mesh
};

namespace regressor_detail {

inline double rms_residual(const SparseRegressor& r,
                           const std::vector<std::vector<Vec3>>& sources,
                           const std::vector<std::vector<Vec3>>& targets) {
  double sum = 0;
  std::int64_t n = 0;
  for (size_t k = 0; k < sources.size(); ++k) {
    std::vector<Vec3> mapped = anny::apply(r, sources[k]);
    for (size_t i = 0; i < mapped.size(); ++i) {
      sum += (mapped[i] - targets[k][i]).squaredNorm();
      ++n;
    }
  }
  return std::sqrt(sum / static_cast<double>(n));
}

// Constrained least squares on the fixed symmetric pattern: rows i and
// sigma_t(i) share (mirrored) coefficients; midline rows tie their own
// mirror-orbit entries. Solved per row orbit via the KKT system.
inline void solve_rows(SparseRegressor& R, const std::vector<std::vector<Vec3>>& sources,
                       const std::vector<std::vector<Vec3>>& targets,
                       const std::vector<VertexIndex>& sigma_source,
                       const std::vector<VertexIndex>& sigma_target) {
  const int M = R.target_count;
  const size_t K = sources.size();
  std::vector<char> done(M, 0);
  for (int i = 0; i < M; ++i) {
    if (done[i]) continue;
    int i2 = sigma_target[i];
    const std::vector<VertexIndex>& J = R.rows[i].src;
    const int n = static_cast<int>(J.size());

    if (i2 != i) {
      // Unknowns: coefficients of row i; row i2 gets them through sigma_s.
      Eigen::MatrixXd A(6 * K, n);
      Eigen::VectorXd b(6 * K);
      for (size_t k = 0; k < K; ++k) {
        for (int c = 0; c < 3; ++c) {
          for (int j = 0; j < n; ++j) {
            A(6 * k + c, j) = sources[k][J[j]][c];
            A(6 * k + 3 + c, j) = sources[k][sigma_source[J[j]]][c];
          }
          b(6 * k + c) = targets[k][i][c];
          b(6 * k + 3 + c) = targets[k][i2][c];
        }
      }
      Eigen::MatrixXd kkt(n + 1, n + 1);
      kkt.setZero();
      kkt.topLeftCorner(n, n) = 2.0 * A.transpose() * A;
      kkt.topRightCorner(n, 1).setOnes();
      kkt.bottomLeftCorner(1, n).setOnes();
      Eigen::VectorXd rhs(n + 1);
      rhs.head(n) = 2.0 * A.transpose() * b;
      rhs(n) = 1.0;
      Eigen::VectorXd sol = kkt.completeOrthogonalDecomposition().solve(rhs);

      std::map<VertexIndex, double> row2;
      for (int j = 0; j < n; ++j) {
        R.rows[i].coeff[j] = sol(j);
        row2[sigma_source[J[j]]] += sol(j);
      }
      auto& r2 = R.rows[i2];
      r2.src.clear();
      r2.coeff.clear();
      for (auto [j, w] : row2) {
        r2.src.push_back(j);
        r2.coeff.push_back(w);
      }
      done[i] = done[i2] = 1;
    } else {
      // Midline target row: tie mirror orbits within the support.
      std::vector<std::pair<VertexIndex, VertexIndex>> orbits;  // (rep, partner or -1)
      std::vector<char> used(n, 0);
      for (int j = 0; j < n; ++j) {
        if (used[j]) continue;
        VertexIndex pj = sigma_source[J[j]];
        int partner = -1;
        for (int j2 = j + 1; j2 < n; ++j2) {
          if (J[j2] == pj) partner = j2;
        }
        if (partner >= 0) used[partner] = 1;
        used[j] = 1;
        orbits.emplace_back(j, partner);
      }
      const int no = static_cast<int>(orbits.size());
      Eigen::MatrixXd A(3 * K, no);
      Eigen::VectorXd b(3 * K);
      Eigen::VectorXd w(no);
      for (int o = 0; o < no; ++o) w(o) = orbits[o].second >= 0 ? 2.0 : 1.0;
      for (size_t k = 0; k < K; ++k) {
        for (int c = 0; c < 3; ++c) {
          for (int o = 0; o < no; ++o) {
            double v = sources[k][J[orbits[o].first]][c];
            if (orbits[o].second >= 0) v += sources[k][J[orbits[o].second]][c];
            A(3 * k + c, o) = v;
          }
          b(3 * k + c) = targets[k][i][c];
        }
      }
      Eigen::MatrixXd kkt(no + 1, no + 1);
      kkt.setZero();
      kkt.topLeftCorner(no, no) = 2.0 * A.transpose() * A;
      kkt.topRightCorner(no, 1) = w;
      kkt.bottomLeftCorner(1, no) = w.transpose();
      Eigen::VectorXd rhs(no + 1);
      rhs.head(no) = 2.0 * A.transpose() * b;
      rhs(no) = 1.0;
      Eigen::VectorXd sol = kkt.completeOrthogonalDecomposition().solve(rhs);
      for (int o = 0; o < no; ++o) {
        R.rows[i].coeff[orbits[o].first] = sol(o);
        if (orbits[o].second >= 0) R.rows[i].coeff[orbits[o].second] = sol(o);
      }
      done[i] = 1;
    }
  }
}

}  // namespace regressor_detail

// Alternates (a) registering the source model to each target mesh and
// (b) a symmetric affine least-squares update of R on its fixed pattern.
// Returns the best regressor seen, with a non-increasing residual history.
inline RefineResult refine(const SparseRegressor& init, const AssetBundle& source_bundle,
                           const std::vector<std::vector<Vec3>>& target_meshes,
                           const SymmetryMap& source_symmetry, const SymmetryMap& target_symmetry,
                           const RefineOptions& opts = {}) {
  if (target_meshes.empty()) throw DomainError("refine: need at least one target mesh");
  for (const auto& t : target_meshes) {
    if (static_cast<int>(t.size()) != init.target_count) {
      throw DomainError("refine: target mesh vertex count mismatch");
    }
  }
  if (!opts.inits.empty() && opts.inits.size() != target_meshes.size()) {
    throw DomainError("refine: inits count must match target mesh count");
  }

  std::vector<VertexIndex> sigma_s = source_symmetry.involution(init.source_count);
  std::vector<VertexIndex> sigma_t = target_symmetry.involution(init.target_count);
  for (VertexIndex v : sigma_s) {
    if (v < 0) throw DomainError("refine: source symmetry map does not cover all vertices");
  }
  for (VertexIndex v : sigma_t) {
    if (v < 0) throw DomainError("refine: target symmetry map does not cover all vertices");
  }

  // Make the pattern mirror-closed once; it stays fixed afterwards.
  SparseRegressor R = symmetrize(init, sigma_s, sigma_t);
  for (const auto& row : R.rows) {
    if (static_cast<int>(row.src.size()) > R.max_coeffs) {
      throw DomainError("refine: symmetrized pattern exceeds max coefficients per row");
    }
  }

  RefineResult result;
  result.regressor = R;
  result.fitted.resize(target_meshes.size());
  double best = std::numeric_limits<double>::infinity();

  std::vector<std::pair<PhenotypeVector, Pose>> warm = opts.inits;
  for (int round = 0; round < opts.rounds; ++round) {
    // (a) register the source model to every target mesh.
    std::vector<std::vector<Vec3>> sources(target_meshes.size());
    for (size_t k = 0; k < target_meshes.size(); ++k) {
      ScanCloud cloud;
      cloud.points = target_meshes[k];
      std::optional<std::pair<PhenotypeVector, Pose>> fit_init;
      if (!warm.empty()) fit_init = warm[k];
      FitResult fr = fit_scan(source_bundle, cloud, opts.fit, nullptr, fit_init);
      result.fitted[k] = {fr.phenotypes, fr.pose};
      sources[k] = deform(source_bundle, fr.phenotypes, fr.pose).vertices;
    }
    warm = result.fitted;  // warm-start the next round

    // (b) symmetric least squares on the fixed pattern.
    regressor_detail::solve_rows(R, sources, target_meshes, sigma_s, sigma_t);
    double res = regressor_detail::rms_residual(R, sources, target_meshes);
    if (res < best) {
      best = res;
      result.regressor = R;
      result.residual_history.push_back(res);
    } else {
      result.residual_history.push_back(best);
    }
  }
  validate_regressor(result.regressor);
  return result;
}

// ---------------------------------------------------------------------------
// Serialization: versioned sparse triplets plus topology identifiers.

inline nlohmann::json regressor_to_json(const SparseRegressor& r) {
  nlohmann::json j;
  j["version"] = 1;
  j["source_topology"] = r.source_topology;
  j["target_topology"] = r.target_topology;
  j["source_count"] = r.source_count;
  j["target_count"] = r.target_count;
  j["max_coeffs"] = r.max_coeffs;
  auto triplets = nlohmann::json::array();
  for (int i = 0; i < r.target_count; ++i) {
    for (size_t k = 0; k < r.rows[i].src.size(); ++k) {
      triplets.push_back({i, r.rows[i].src[k], r.rows[i].coeff[k]});
    }
  }
  j["triplets"] = std::move(triplets);
  return j;
}

inline SparseRegressor regressor_from_json(const nlohmann::json& j) {
  SparseRegressor r;
  if (j.at("version").get<int>() != 1) throw ParseError("regressor: unsupported version");
  r.source_topology = j.at("source_topology").get<std::string>();
  r.target_topology = j.at("target_topology").get<std::string>();
  r.source_count = j.at("source_count").get<int>();
  r.target_count = j.at("target_count").get<int>();
  r.max_coeffs = j.at("max_coeffs").get<int>();
  r.rows.resize(r.target_count);
  for (const auto& t : j.at("triplets")) {
    int i = t.at(0).get<int>();
    if (i < 0 || i >= r.target_count) throw ParseError("regressor: triplet row out of range");
    r.rows[i].src.push_back(t.at(1).get<int>());
    r.rows[i].coeff.push_back(t.at(2).get<double>());
  }
  validate_regressor(r);
  return r;
}

inline void save_regressor(const SparseRegressor& r, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
  f << regressor_to_json(r).dump(2) << "\n";
}

inline SparseRegressor load_regressor(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open '" + path.string() + "' for reading");
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("regressor: ") + e.what());
  }
  return regressor_from_json(j);
}

}  // namespace anny
