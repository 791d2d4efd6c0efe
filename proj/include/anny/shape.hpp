#pragma once

// Shape engine: phenotype values in [0,1] drive a piecewise-multilinear
// interpolation of blendshape targets on top of the base mesh, and skeleton
// joints are re-anchored on the morphed vertices. Pure functions of
// immutable inputs; safe to evaluate in parallel across bodies.

#include "anny/asset.hpp"

#include <cmath>
#include <map>

namespace anny {

struct PhenotypeVector {
  std::map<std::string, double> values;  // absent parameters take schema neutrals

  static PhenotypeVector of(std::initializer_list<std::pair<const std::string, double>> v) {
    PhenotypeVector pv;
    pv.values = v;
    return pv;
  }
};

// Dense per-schema-parameter values with neutral defaults. Validates names
// and the [0,1] range.
inline std::vector<double> resolve_phenotypes(const PhenotypeSchema& schema,
                                              const PhenotypeVector& pv) {
  std::vector<double> out(schema.parameters.size());
  for (size_t i = 0; i < schema.parameters.size(); ++i) out[i] = schema.parameters[i].neutral;
  for (const auto& [name, value] : pv.values) {
    int idx = schema.find(name);
    if (idx < 0) throw DomainError("phenotype '" + name + "' not in schema");
    if (!(value >= 0.0 && value <= 1.0)) {
      throw DomainError("phenotype '" + name + "' = " + format_double(value) + " outside [0,1]");
    }
    out[idx] = value;
  }
  return out;
}

// 1-D hat basis on a grid cell. Right-continuous at nodes: a value exactly
// on a node lands in the cell to its right (the last cell at value = 1), so
// weights and the in-cell derivative are always well defined.
struct HatCell {
  int lo = 0, hi = 1;          // bracketing node indices
  double w_lo = 0, w_hi = 0;   // weights, sum to 1
  double dw = 0;               // dw_hi/dvalue = -dw_lo/dvalue = 1/cell width
};

inline HatCell hat_cell(double value, const std::vector<double>& grid) {
  if (!(value >= 0.0 && value <= 1.0)) {
    throw DomainError("hat_cell: value " + format_double(value) + " outside [0,1]");
  }
  int n = static_cast<int>(grid.size());
  int lo = n - 2;
  for (int i = 0; i + 1 < n; ++i) {
    if (value < grid[i + 1]) {
      lo = i;
      break;
    }
  }
  HatCell c;
  c.lo = lo;
  c.hi = lo + 1;
  double width = grid[c.hi] - grid[c.lo];
  if (value == grid[c.lo]) {
    c.w_lo = 1.0;  // exact at node: unit weight, no roundoff
    c.w_hi = 0.0;
  } else if (value == grid[c.hi]) {
    c.w_lo = 0.0;
    c.w_hi = 1.0;
  } else {
    c.w_hi = (value - grid[c.lo]) / width;
    c.w_lo = (grid[c.hi] - value) / width;
  }
  c.dw = 1.0 / width;
  return c;
}

// Public hat-weight view: the (node value, weight) pairs with nonzero
// weight; a single entry of weight 1 when the value sits on a node.
struct HatWeights {
  struct Entry {
    int node;
    double node_value;
    double weight;
  };
  Entry entries[2];
  int count = 0;
};

inline HatWeights hat_weights(double value, const std::vector<double>& grid) {
  HatCell c = hat_cell(value, grid);
  HatWeights hw;
  if (c.w_lo != 0.0) hw.entries[hw.count++] = {c.lo, grid[c.lo], c.w_lo};
  if (c.w_hi != 0.0) hw.entries[hw.count++] = {c.hi, grid[c.hi], c.w_hi};
  return hw;
}

// Multilinear target weight: product of 1-D hat weights at each constrained
// node; unconstrained parameters contribute factor 1.
inline double target_weight(const BlendTarget& target, const PhenotypeSchema& schema,
                            const std::vector<double>& values) {
  double w = 1.0;
  for (const BlendConstraint& c : target.constraints) {
    HatCell cell = hat_cell(values[c.param], schema.parameters[c.param].grid);
    double wn = c.node == cell.lo ? cell.w_lo : (c.node == cell.hi ? cell.w_hi : 0.0);
    if (wn == 0.0) return 0.0;
    w *= wn;
  }
  return w;
}

inline double target_weight(const BlendTarget& target, const PhenotypeSchema& schema,
                            const PhenotypeVector& pv) {
  return target_weight(target, schema, resolve_phenotypes(schema, pv));
}

struct ShapeOptions {
  bool want_jacobian = false;
  // Evaluate only the first `active_params` schema parameters; the rest are
  // pinned to their neutral values. -1 means all.
  int active_params = -1;
};

// Sparse derivative of the rest-pose vertices with respect to one phenotype.
struct ShapeParamDeriv {
  int param = 0;
  std::vector<VertexIndex> indices;
  std::vector<Vec3> d;  // meters per unit parameter
};

struct ShapedRest {
  std::vector<Vec3> vertices;
  std::vector<Vec3> joint_heads;
  std::vector<Vec3> joint_tails;
  std::vector<ShapeParamDeriv> shape_jacobian;  // empty unless requested
};

inline Vec3 anchor_mean(const std::vector<Vec3>& verts, const std::vector<VertexIndex>& anchors) {
  Vec3 sum = Vec3::Zero();
  for (VertexIndex a : anchors) sum += verts[a];
  return sum / static_cast<double>(anchors.size());
}

inline ShapedRest shape(const AssetBundle& bundle, const PhenotypeVector& phenotypes,
                        const ShapeOptions& opts = {}) {
  const PhenotypeSchema& schema = bundle.schema;
  std::vector<double> values = resolve_phenotypes(schema, phenotypes);
  int active = opts.active_params < 0 ? schema.size() : std::min(opts.active_params, schema.size());
  for (int p = active; p < schema.size(); ++p) values[p] = schema.parameters[p].neutral;

  ShapedRest out;
  out.vertices = bundle.mesh.vertices;

  // Cache per-target constraint weights; reused for the jacobian products.
  std::vector<double> cw;
  for (const BlendTarget& t : bundle.targets) {
    cw.assign(t.constraints.size(), 0.0);
    double w = 1.0;
    for (size_t ci = 0; ci < t.constraints.size(); ++ci) {
      const BlendConstraint& c = t.constraints[ci];
      HatCell cell = hat_cell(values[c.param], schema.parameters[c.param].grid);
      cw[ci] = c.node == cell.lo ? cell.w_lo : (c.node == cell.hi ? cell.w_hi : 0.0);
      w *= cw[ci];
    }
    if (w != 0.0) {
      for (size_t i = 0; i < t.indices.size(); ++i) {
        out.vertices[t.indices[i]] += w * t.offsets[i];
      }
    }
  }

  out.joint_heads.resize(bundle.bone_count());
  out.joint_tails.resize(bundle.bone_count());
  for (int b = 0; b < bundle.bone_count(); ++b) {
    out.joint_heads[b] = anchor_mean(out.vertices, bundle.skeleton.bones[b].head_anchors);
    out.joint_tails[b] = anchor_mean(out.vertices, bundle.skeleton.bones[b].tail_anchors);
  }

  if (opts.want_jacobian) {
    // d vertices / d value_p = sum over targets constrained on p of
    // (dhat at the constrained node) * (product of the other hat weights)
    // * displacements. Piecewise constant inside each grid cell.
    std::vector<Vec3> scratch(bundle.mesh.vertices.size(), Vec3::Zero());
    std::vector<VertexIndex> touched;
    for (int p = 0; p < active; ++p) {
      touched.clear();
      for (const BlendTarget& t : bundle.targets) {
        double dw_dp = 0.0;
        bool constrained = false;
        double prod = 1.0;
        double dfactor = 0.0;
        for (const BlendConstraint& c : t.constraints) {
          HatCell cell = hat_cell(values[c.param], schema.parameters[c.param].grid);
          double wn = c.node == cell.lo ? cell.w_lo : (c.node == cell.hi ? cell.w_hi : 0.0);
          if (c.param == p) {
            constrained = true;
            dfactor = c.node == cell.lo ? -cell.dw : (c.node == cell.hi ? cell.dw : 0.0);
          } else {
            prod *= wn;
          }
        }
        if (!constrained || prod == 0.0 || dfactor == 0.0) continue;
        dw_dp = dfactor * prod;
        for (size_t i = 0; i < t.indices.size(); ++i) {
          VertexIndex v = t.indices[i];
          touched.push_back(v);
          scratch[v] += dw_dp * t.offsets[i];
        }
      }
      ShapeParamDeriv deriv;
      deriv.param = p;
      std::sort(touched.begin(), touched.end());
      touched.erase(std::unique(touched.begin(), touched.end()), touched.end());
      for (VertexIndex v : touched) {
        if (!scratch[v].isZero(0.0)) {
          deriv.indices.push_back(v);
          deriv.d.push_back(scratch[v]);
        }
        scratch[v] = Vec3::Zero();
      }
      if (!deriv.indices.empty()) out.shape_jacobian.push_back(std::move(deriv));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Rest-pose measurements used by the statistical calibration.

// Density used to turn mesh volume into a mass proxy for BMI. The model has
// no true mass; 1000 kg/m^3 (water) is the documented default.
inline constexpr double kDefaultBodyDensity = 1000.0;

struct BodyMeasure {
  double height = 0;     // meters, extent along +Y
  double volume = 0;     // cubic meters, signed tetrahedron sum
  double bmi_proxy = 0;  // kg/m^2, volume * density / height^2
};

inline BodyMeasure measure(const std::vector<Vec3>& vertices, const std::vector<Quad>& faces,
                           double density = kDefaultBodyDensity) {
  if (vertices.empty()) throw DomainError("measure: empty mesh");
  double lo = vertices[0][kUpAxis], hi = lo;
  for (const Vec3& v : vertices) {
    lo = std::min(lo, v[kUpAxis]);
    hi = std::max(hi, v[kUpAxis]);
  }
  BodyMeasure m;
  m.height = hi - lo;
  if (m.height <= 0.0) throw DomainError("measure: mesh has zero vertical extent");
  double vol6 = 0.0;
  for (const Tri& t : triangulate(faces)) {
    vol6 += vertices[t[0]].dot(vertices[t[1]].cross(vertices[t[2]]));
  }
  m.volume = vol6 / 6.0;
  m.bmi_proxy = m.volume * density / (m.height * m.height);
  return m;
}

inline BodyMeasure measure(const ShapedRest& shaped, const std::vector<Quad>& faces,
                           double density = kDefaultBodyDensity) {
  return measure(shaped.vertices, faces, density);
}

}  // namespace anny
