#pragma once

// Anthropometric statistics: phenotype priors as Beta distributions
// conditioned on age bucket and gender, calibrated by Monte-Carlo
// pushforward so that mesh height and BMI match growth-reference tables.

#include "anny/shape.hpp"

#include <boost/math/special_functions/beta.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "json.hpp"

namespace anny {

struct BetaParams {
  double alpha = 1, beta = 1;
};

// Moment matching: the returned Beta has exactly the requested mean/sd.
inline BetaParams fit_beta_moments(double mean, double sd) {
  if (!(mean > 0.0 && mean < 1.0)) {
    throw DomainError("fit_beta_moments: mean " + format_double(mean) + " outside (0,1)");
  }
  if (!(sd > 0.0)) throw DomainError("fit_beta_moments: sd must be positive");
  double bound = mean * (1.0 - mean);
  if (!(sd * sd < bound)) {
    throw DomainError("fit_beta_moments: infeasible pair, sd^2 = " + format_double(sd * sd) +
                      " >= mean(1-mean) = " + format_double(bound));
  }
  double nu = bound / (sd * sd) - 1.0;
  return {mean * nu, (1.0 - mean) * nu};
}

inline double beta_mean(const BetaParams& p) { return p.alpha / (p.alpha + p.beta); }
inline double beta_sd(const BetaParams& p) {
  double s = p.alpha + p.beta;
  return std::sqrt(p.alpha * p.beta / (s * s * (s + 1.0)));
}
inline double beta_quantile(const BetaParams& p, double u) {
  if (u <= 0.0) return 0.0;
  if (u >= 1.0) return 1.0;
  return boost::math::ibeta_inv(p.alpha, p.beta, u);
}

// ---------------------------------------------------------------------------
// Growth-reference targets (CSV, documented header).

struct GrowthRow {
  int age_months = 0;
  int gender = 0;  // {0,1}
  double height_mean = 0, height_sd = 0;  // meters
  double bmi_mean = 0, bmi_sd = 0;        // kg/m^2
};

struct GrowthTargets {
  std::vector<GrowthRow> rows;
};

inline constexpr const char* kGrowthCsvHeader =
    "age_months,gender,height_mean_m,height_sd_m,bmi_mean,bmi_sd";

inline GrowthTargets parse_growth_targets(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("growth targets: empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kGrowthCsvHeader) {
    throw ParseError(std::string("growth targets: bad header, expected '") + kGrowthCsvHeader + "'");
  }
  GrowthTargets out;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream ls(line);
    GrowthRow row;
    char c;
    if (!(ls >> row.age_months >> c >> row.gender >> c >> row.height_mean >> c >>
          row.height_sd >> c >> row.bmi_mean >> c >> row.bmi_sd)) {
      throw ParseError("growth targets: malformed row at line " + std::to_string(lineno));
    }
    if (row.gender != 0 && row.gender != 1) {
      throw ValidationError("growth targets: line " + std::to_string(lineno) +
                            ": gender must be 0 or 1");
    }
    if (row.height_sd <= 0 || row.bmi_sd <= 0) {
      throw ValidationError("growth targets: line " + std::to_string(lineno) +
                            ": standard deviations must be positive");
    }
    out.rows.push_back(row);
  }
  // Ages strictly increasing per gender.
  std::map<int, int> last_age;
  int lineno2 = 1;
  for (const GrowthRow& r : out.rows) {
    ++lineno2;
    auto it = last_age.find(r.gender);
    if (it != last_age.end() && r.age_months <= it->second) {
      throw ValidationError("growth targets: line " + std::to_string(lineno2) +
                            ": ages not strictly increasing for gender " + std::to_string(r.gender));
    }
    last_age[r.gender] = r.age_months;
  }
  return out;
}

inline GrowthTargets load_growth_targets(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open '" + path.string() + "' for reading");
  return parse_growth_targets(f);
}

inline void save_growth_targets(const GrowthTargets& t, const std::filesystem::path& path) {
  std::string out = std::string(kGrowthCsvHeader) + "\n";
  for (const GrowthRow& r : t.rows) {
    out += std::to_string(r.age_months) + "," + std::to_string(r.gender) + "," +
           format_double(r.height_mean) + "," + format_double(r.height_sd) + "," +
           format_double(r.bmi_mean) + "," + format_double(r.bmi_sd) + "\n";
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
  f << out;
}

// ---------------------------------------------------------------------------
// Bijective piecewise-linear map between years and the age parameter.

struct AgeMap {
  std::vector<std::pair<double, double>> knots;  // (years, parameter), both strictly increasing

  void validate() const {
    if (knots.size() < 2) throw ValidationError("age map: needs at least 2 knots");
    for (size_t i = 0; i + 1 < knots.size(); ++i) {
      if (!(knots[i].first < knots[i + 1].first) || !(knots[i].second < knots[i + 1].second)) {
        throw ValidationError("age map: knots must be strictly increasing in both coordinates");
      }
    }
  }

  double to_param(double years) const {
    if (years < knots.front().first || years > knots.back().first) {
      throw DomainError("age map: " + format_double(years) + " years outside [" +
                        format_double(knots.front().first) + ", " +
                        format_double(knots.back().first) + "]");
    }
    for (size_t i = 0; i + 1 < knots.size(); ++i) {
      if (years <= knots[i + 1].first) {
        double t = (years - knots[i].first) / (knots[i + 1].first - knots[i].first);
        return knots[i].second + t * (knots[i + 1].second - knots[i].second);
      }
    }
    return knots.back().second;
  }

  double to_years(double param) const {
    if (param < knots.front().second || param > knots.back().second) {
      throw DomainError("age map: parameter " + format_double(param) + " outside range");
    }
    for (size_t i = 0; i + 1 < knots.size(); ++i) {
      if (param <= knots[i + 1].second) {
        double t = (param - knots[i].second) / (knots[i + 1].second - knots[i].second);
        return knots[i].first + t * (knots[i + 1].first - knots[i].first);
      }
    }
    return knots.back().first;
  }
};

// Test fixture, not a claim about any particular asset's mapping.
inline AgeMap default_age_map() {
  return {{{0.0, 0.0}, {1.0, 1.0 / 6.0}, {6.0, 1.0 / 3.0}, {16.0, 2.0 / 3.0}, {70.0, 1.0}}};
}

inline AgeMap age_map_from_json(const nlohmann::json& j) {
  AgeMap m;
  for (const auto& k : j.at("knots")) {
    m.knots.emplace_back(k.at(0).get<double>(), k.at(1).get<double>());
  }
  m.validate();
  return m;
}

inline nlohmann::json age_map_to_json(const AgeMap& m) {
  nlohmann::json j;
  j["version"] = 1;
  j["knots"] = nlohmann::json::array();
  for (auto [y, p] : m.knots) j["knots"].push_back({y, p});
  return j;
}

// ---------------------------------------------------------------------------
// BetaTable: per (age bucket, gender, parameter) Beta distribution.

struct BetaTable {
  struct Bucket {
    int age_months = 0;
    int gender = 0;
    std::map<std::string, BetaParams> params;
  };
  std::string age_parameter = "age";
  std::vector<Bucket> buckets;  // sorted by (gender, age_months)

  void sort_buckets() {
    std::sort(buckets.begin(), buckets.end(), [](const Bucket& a, const Bucket& b) {
      return a.gender != b.gender ? a.gender < b.gender : a.age_months < b.age_months;
    });
  }
};

inline nlohmann::json beta_table_to_json(const BetaTable& t) {
  nlohmann::json j;
  j["version"] = 1;
  j["age_parameter"] = t.age_parameter;
  j["buckets"] = nlohmann::json::array();
  for (const auto& b : t.buckets) {
    nlohmann::json jb;
    jb["age_months"] = b.age_months;
    jb["gender"] = b.gender;
    jb["params"] = nlohmann::json::object();
    for (const auto& [name, p] : b.params) {
      jb["params"][name] = {{"alpha", p.alpha}, {"beta", p.beta}};
    }
    j["buckets"].push_back(jb);
  }
  return j;
}

inline BetaTable beta_table_from_json(const nlohmann::json& j) {
  BetaTable t;
  if (j.at("version").get<int>() != 1) throw ParseError("beta table: unsupported version");
  t.age_parameter = j.at("age_parameter").get<std::string>();
  for (const auto& jb : j.at("buckets")) {
    BetaTable::Bucket b;
    b.age_months = jb.at("age_months").get<int>();
    b.gender = jb.at("gender").get<int>();
    for (const auto& [name, p] : jb.at("params").items()) {
      BetaParams bp{p.at("alpha").get<double>(), p.at("beta").get<double>()};
      if (!(bp.alpha > 0) || !(bp.beta > 0)) {
        throw ValidationError("beta table: parameter '" + name + "' has non-positive alpha/beta");
      }
      b.params[name] = bp;
    }
    t.buckets.push_back(std::move(b));
  }
  t.sort_buckets();
  return t;
}

inline void save_beta_table(const BetaTable& t, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
  f << beta_table_to_json(t).dump(2) << "\n";
}

inline BetaTable load_beta_table(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open '" + path.string() + "' for reading");
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("beta table: ") + e.what());
  }
  return beta_table_from_json(j);
}

// ---------------------------------------------------------------------------
// Monte-Carlo pushforward of a per-parameter Beta assignment through
// shape+measure at a fixed age parameter value.

struct PushforwardStats {
  double height_mean = 0, height_sd = 0;
  double bmi_mean = 0, bmi_sd = 0;
};

namespace stats_detail {

// Common random numbers: one uniform matrix reused across optimizer steps.
inline std::vector<double> uniform_matrix(int samples, int dims, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> out(static_cast<size_t>(samples) * dims);
  for (double& v : out) v = u(rng);
  return out;
}

inline PushforwardStats moments(const std::vector<double>& h, const std::vector<double>& b) {
  auto mean_of = [](const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  auto sd_of = [](const std::vector<double>& v, double m) {
    double s = 0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
  };
  PushforwardStats out;
  out.height_mean = mean_of(h);
  out.bmi_mean = mean_of(b);
  out.height_sd = sd_of(h, out.height_mean);
  out.bmi_sd = sd_of(b, out.bmi_mean);
  return out;
}

}  // namespace stats_detail

// `uniforms` holds samples x params.size() values in [0,1); parameter order
// is the map's (lexicographic) order.
inline PushforwardStats pushforward(const AssetBundle& bundle,
                                    const std::map<std::string, BetaParams>& params,
                                    const std::string& age_parameter, double age_value,
                                    const std::vector<double>& uniforms, int samples,
                                    double density = kDefaultBodyDensity) {
  int dims = static_cast<int>(params.size());
  std::vector<double> heights(samples), bmis(samples);
  std::vector<std::string> names;
  std::vector<BetaParams> betas;
  for (const auto& [n, p] : params) {
    names.push_back(n);
    betas.push_back(p);
  }
  parallel_for(samples, [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t k = lo; k < hi; ++k) {
      PhenotypeVector pv;
      pv.values[age_parameter] = age_value;
      for (int i = 0; i < dims; ++i) {
        pv.values[names[i]] = beta_quantile(betas[i], uniforms[k * dims + i]);
      }
      ShapedRest rest = shape(bundle, pv);
      BodyMeasure m = measure(rest.vertices, bundle.mesh.faces, density);
      heights[k] = m.height;
      bmis[k] = m.bmi_proxy;
    }
  });
  return stats_detail::moments(heights, bmis);
}

// ---------------------------------------------------------------------------
// Derivative-free Nelder-Mead, used by calibrate. Deterministic; records the
// best objective value after each iteration (non-increasing by construction).

struct NelderMeadResult {
  Eigen::VectorXd x;
  double value = 0;
  int iterations = 0;
  std::vector<double> best_history;
};

inline NelderMeadResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                                    const Eigen::VectorXd& x0, const Eigen::VectorXd& step,
                                    int max_iters, double ftol = 1e-10) {
  const int n = static_cast<int>(x0.size());
  std::vector<Eigen::VectorXd> xs(n + 1, x0);
  std::vector<double> fs(n + 1);
  for (int i = 0; i < n; ++i) xs[i + 1][i] += step[i];
  for (int i = 0; i <= n; ++i) fs[i] = f(xs[i]);

  auto order = [&] {
    std::vector<int> idx(n + 1);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&fs](int a, int b) { return fs[a] < fs[b]; });
    std::vector<Eigen::VectorXd> xs2(n + 1);
    std::vector<double> fs2(n + 1);
    for (int i = 0; i <= n; ++i) {
      xs2[i] = xs[idx[i]];
      fs2[i] = fs[idx[i]];
    }
    xs.swap(xs2);
    fs.swap(fs2);
  };

  NelderMeadResult result;
  int it = 0;
  for (; it < max_iters; ++it) {
    order();
    result.best_history.push_back(fs[0]);
    if (std::abs(fs[n] - fs[0]) < ftol) break;
    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < n; ++i) centroid += xs[i];
    centroid /= n;

    Eigen::VectorXd xr = centroid + (centroid - xs[n]);
    double fr = f(xr);
    if (fr < fs[0]) {
      Eigen::VectorXd xe = centroid + 2.0 * (xr - centroid);
      double fe = f(xe);
      if (fe < fr) {
        xs[n] = xe;
        fs[n] = fe;
      } else {
        xs[n] = xr;
        fs[n] = fr;
      }
    } else if (fr < fs[n - 1]) {
      xs[n] = xr;
      fs[n] = fr;
    } else {
      Eigen::VectorXd xc = centroid + 0.5 * (xs[n] - centroid);
      double fc = f(xc);
      if (fc < fs[n]) {
        xs[n] = xc;
        fs[n] = fc;
      } else {
        for (int i = 1; i <= n; ++i) {
          xs[i] = xs[0] + 0.5 * (xs[i] - xs[0]);
          fs[i] = f(xs[i]);
        }
      }
    }
  }
  order();
  result.x = xs[0];
  result.value = fs[0];
  result.iterations = it;
  return result;
}

// ---------------------------------------------------------------------------
// Calibration.

struct CalibrationOptions {
  int mc_samples = 2048;
  int max_iterations = 150;
  std::uint64_t seed = 0;
  double density = kDefaultBodyDensity;
  // Acceptance tolerances: means within 2% of target means, SDs within 10%
  // of target SDs.
  double mean_rtol = 0.02;
  double sd_rtol = 0.10;
  bool enforce_tolerance = true;
};

struct BucketReport {
  int age_months = 0;
  int gender = 0;
  PushforwardStats achieved;
  GrowthRow target;
  double objective = 0;
  int iterations = 0;
  std::vector<double> best_history;
};

struct CalibrationResult {
  BetaTable table;
  std::vector<BucketReport> reports;
};

inline CalibrationResult calibrate(const AssetBundle& bundle, const GrowthTargets& targets,
                                   const AgeMap& age_map, const std::vector<std::string>& params,
                                   const CalibrationOptions& opts = {},
                                   const std::string& age_parameter = "age") {
  if (params.empty()) throw DomainError("calibrate: empty parameter list");
  if (bundle.schema.find(age_parameter) < 0) {
    throw DomainError("calibrate: age parameter '" + age_parameter + "' not in schema");
  }
  for (const std::string& p : params) {
    if (bundle.schema.find(p) < 0) throw DomainError("calibrate: parameter '" + p + "' not in schema");
    if (p == age_parameter) throw DomainError("calibrate: age parameter cannot be calibrated");
  }
  age_map.validate();

  const int np = static_cast<int>(params.size());
  CalibrationResult result;
  result.table.age_parameter = age_parameter;

  for (size_t row_idx = 0; row_idx < targets.rows.size(); ++row_idx) {
    const GrowthRow& row = targets.rows[row_idx];
    double age_value = age_map.to_param(row.age_months / 12.0);
    auto uniforms = stats_detail::uniform_matrix(
        opts.mc_samples, np, mix_seed(opts.seed, 1000 + row.gender * 4096 + row.age_months));

    // Decision variables: (mean, sd) per parameter; moment matching inside.
    auto unpack = [&](const Eigen::VectorXd& x, std::map<std::string, BetaParams>& out) {
      for (int i = 0; i < np; ++i) {
        double mean = x[2 * i], sd = x[2 * i + 1];
        if (!(mean > 1e-4 && mean < 1.0 - 1e-4)) return false;
        if (!(sd > 1e-4)) return false;
        if (!(sd * sd < mean * (1.0 - mean) * (1.0 - 1e-9))) return false;
        out[params[i]] = fit_beta_moments(mean, sd);
      }
      return true;
    };
    auto objective = [&](const Eigen::VectorXd& x) {
      std::map<std::string, BetaParams> betas;
      if (!unpack(x, betas)) return 1e12 + x.cwiseAbs().sum();  // infeasible
      PushforwardStats s =
          pushforward(bundle, betas, age_parameter, age_value, uniforms, opts.mc_samples,
                      opts.density);
      double r1 = (s.height_mean - row.height_mean) / row.height_sd;
      double r2 = (s.height_sd - row.height_sd) / row.height_sd;
      double r3 = (s.bmi_mean - row.bmi_mean) / row.bmi_sd;
      double r4 = (s.bmi_sd - row.bmi_sd) / row.bmi_sd;
      return r1 * r1 + r2 * r2 + r3 * r3 + r4 * r4;
    };

    Eigen::VectorXd x0(2 * np), step(2 * np);
    for (int i = 0; i < np; ++i) {
      x0[2 * i] = 0.5;
      x0[2 * i + 1] = 0.15;
      step[2 * i] = 0.15;
      step[2 * i + 1] = 0.08;
    }
    NelderMeadResult nm = nelder_mead(objective, x0, step, opts.max_iterations);

    std::map<std::string, BetaParams> betas;
    if (!unpack(nm.x, betas)) {
      throw DomainError("calibrate: optimizer left the feasible region for bucket " +
                        std::to_string(row.age_months) + "m/g" + std::to_string(row.gender));
    }
    BucketReport report;
    report.age_months = row.age_months;
    report.gender = row.gender;
    report.target = row;
    report.objective = nm.value;
    report.iterations = nm.iterations;
    report.best_history = std::move(nm.best_history);
    report.achieved = pushforward(bundle, betas, age_parameter, age_value, uniforms,
                                  opts.mc_samples, opts.density);

    if (opts.enforce_tolerance) {
      auto ok_mean = [&](double got, double want) {
        return std::abs(got - want) <= opts.mean_rtol * std::abs(want);
      };
      auto ok_sd = [&](double got, double want) {
        return std::abs(got - want) <= opts.sd_rtol * std::abs(want);
      };
      if (!ok_mean(report.achieved.height_mean, row.height_mean) ||
          !ok_sd(report.achieved.height_sd, row.height_sd) ||
          !ok_mean(report.achieved.bmi_mean, row.bmi_mean) ||
          !ok_sd(report.achieved.bmi_sd, row.bmi_sd)) {
        std::ostringstream oss;
        oss << "calibrate: bucket " << row.age_months << "m/g" << row.gender
            << " did not converge within tolerance; residuals:"
            << " height_mean " << format_double(report.achieved.height_mean) << " vs "
            << format_double(row.height_mean) << ", height_sd "
            << format_double(report.achieved.height_sd) << " vs " << format_double(row.height_sd)
            << ", bmi_mean " << format_double(report.achieved.bmi_mean) << " vs "
            << format_double(row.bmi_mean) << ", bmi_sd " << format_double(report.achieved.bmi_sd)
            << " vs " << format_double(row.bmi_sd);
        throw DomainError(oss.str());
      }
    }

    BetaTable::Bucket bucket;
    bucket.age_months = row.age_months;
    bucket.gender = row.gender;
    bucket.params = std::move(betas);
    result.table.buckets.push_back(std::move(bucket));
    result.reports.push_back(std::move(report));
  }
  result.table.sort_buckets();
  return result;
}

// ---------------------------------------------------------------------------
// Sampling a plausible body from the calibrated table.

inline PhenotypeVector sample_body(const BetaTable& table, double age_years, int gender,
                                   const AgeMap& age_map, std::uint64_t seed) {
  std::vector<const BetaTable::Bucket*> buckets;
  for (const auto& b : table.buckets) {
    if (b.gender == gender) buckets.push_back(&b);
  }
  if (buckets.empty()) throw DomainError("sample_body: no buckets for gender " + std::to_string(gender));
  double age_months = age_years * 12.0;
  if (age_months < buckets.front()->age_months || age_months > buckets.back()->age_months) {
    throw DomainError("sample_body: age " + format_double(age_years) + "y outside table range [" +
                      format_double(buckets.front()->age_months / 12.0) + ", " +
                      format_double(buckets.back()->age_months / 12.0) + "]y");
  }
  // Bracketing buckets; alpha/beta interpolated linearly in age.
  size_t hi = 0;
  while (hi < buckets.size() && buckets[hi]->age_months < age_months) ++hi;
  size_t lo = hi == 0 ? 0 : hi - 1;
  if (hi == buckets.size()) hi = lo;
  double t = buckets[hi]->age_months == buckets[lo]->age_months
                 ? 0.0
                 : (age_months - buckets[lo]->age_months) /
                       static_cast<double>(buckets[hi]->age_months - buckets[lo]->age_months);

  PhenotypeVector pv;
  pv.values[table.age_parameter] = age_map.to_param(age_years);
  std::mt19937_64 rng(mix_seed(seed, 0x5a6d70ULL));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (const auto& [name, p_lo] : buckets[lo]->params) {
    auto it = buckets[hi]->params.find(name);
    if (it == buckets[hi]->params.end()) {
      throw ValidationError("sample_body: parameter '" + name + "' missing from a bracketing bucket");
    }
    BetaParams p{p_lo.alpha + t * (it->second.alpha - p_lo.alpha),
                 p_lo.beta + t * (it->second.beta - p_lo.beta)};
    pv.values[name] = beta_quantile(p, u(rng));
  }
  return pv;
}

}  // namespace anny
