#pragma once

// Pose engine: forward kinematics over the bone tree, linear blend skinning
// of the shaped rest mesh, exact analytic Jacobians with respect to pose and
// phenotype parameters, and skeleton-to-skeleton retargeting.
//
// Rest frame convention: a bone's frame has its origin at the bone head,
// local +Y along head->tail, and roll fixed by the world +Z reference
// (x = normalize(y cross z_world)); bones parallel to +Z fall back to the
// world +X reference. A bone along +Y with this convention has an identity
// rest rotation.

#include "anny/rotation.hpp"
#include "anny/shape.hpp"

#include <map>
#include <string>

namespace anny {

struct Pose {
  Vec3 root_rotation = Vec3::Zero();     // axis-angle, radians
  Vec3 root_translation = Vec3::Zero();  // meters
  std::vector<Vec3> joint_rotations;     // per bone, relative to rest

  static Pose identity(int bone_count) {
    Pose p;
    p.joint_rotations.assign(bone_count, Vec3::Zero());
    return p;
  }
};

inline void validate_pose(const Pose& pose, int bone_count) {
  if (static_cast<int>(pose.joint_rotations.size()) != bone_count) {
    throw DomainError("pose has " + std::to_string(pose.joint_rotations.size()) +
                      " joint rotations, skeleton has " + std::to_string(bone_count) + " bones");
  }
  auto finite = [](const Vec3& v) { return v.allFinite(); };
  if (!finite(pose.root_rotation) || !finite(pose.root_translation)) {
    throw DomainError("pose root transform is not finite");
  }
  for (const Vec3& r : pose.joint_rotations) {
    if (!finite(r)) throw DomainError("pose joint rotation is not finite");
  }
}

namespace pose_detail {

inline constexpr double kParallelEps = 1e-8;

struct FrameScratch {
  Vec3 y, x0, x, z, ref;
  double nb = 0, nx0 = 0;
};

inline FrameScratch bone_frame(const Vec3& head, const Vec3& tail, const std::string& name) {
  FrameScratch f;
  Vec3 b = tail - head;
  f.nb = b.norm();
  if (f.nb < 1e-12) throw DomainError("zero-length bone '" + name + "'");
  f.y = b / f.nb;
  f.ref = Vec3::UnitZ();
  f.x0 = f.y.cross(f.ref);
  f.nx0 = f.x0.norm();
  if (f.nx0 < kParallelEps) {
    f.ref = Vec3::UnitX();
    f.x0 = f.y.cross(f.ref);
    f.nx0 = f.x0.norm();
  }
  f.x = f.x0 / f.nx0;
  f.z = f.x.cross(f.y);
  return f;
}

inline Mat3 frame_rotation(const FrameScratch& f) {
  Mat3 R;
  R.col(0) = f.x;
  R.col(1) = f.y;
  R.col(2) = f.z;
  return R;
}

// Directional derivative of the frame rotation for head/tail velocities.
// Valid away from the roll-reference switchover (branch held fixed).
inline Mat3 frame_rotation_d(const FrameScratch& f, const Vec3& dhead, const Vec3& dtail) {
  Vec3 db = dtail - dhead;
  Vec3 dy = (db - f.y * f.y.dot(db)) / f.nb;
  Vec3 dx0 = dy.cross(f.ref);
  Vec3 dx = (dx0 - f.x * f.x.dot(dx0)) / f.nx0;
  Vec3 dz = dx.cross(f.y) + f.x.cross(dy);
  Mat3 dR;
  dR.col(0) = dx;
  dR.col(1) = dy;
  dR.col(2) = dz;
  return dR;
}

// Bones ordered parents-before-children.
inline std::vector<int> topo_order(const Skeleton& skel) {
  int n = static_cast<int>(skel.bones.size());
  std::vector<int> order;
  order.reserve(n);
  std::vector<char> placed(n, 0);
  while (static_cast<int>(order.size()) < n) {
    bool progress = false;
    for (int b = 0; b < n; ++b) {
      if (placed[b]) continue;
      int par = skel.bones[b].parent;
      if (par == -1 || placed[par]) {
        order.push_back(b);
        placed[b] = 1;
        progress = true;
      }
    }
    if (!progress) throw ValidationError("skeleton parent map has a cycle");
  }
  return order;
}

}  // namespace pose_detail

struct BoneTransforms {
  std::vector<Affine> rest;   // A_b, world rest frames
  std::vector<Affine> world;  // W_b, posed world frames (= rest until FK runs)
  std::vector<Affine> local;  // L_b = rest_local_b o Rot(r_b), cached by FK
  std::vector<int> order;     // topological processing order
  Pose pose;                  // pose used by the last FK run
};

inline BoneTransforms rest_transforms(const ShapedRest& shaped, const Skeleton& skeleton) {
  BoneTransforms bt;
  int n = static_cast<int>(skeleton.bones.size());
  bt.rest.resize(n);
  for (int b = 0; b < n; ++b) {
    auto f = pose_detail::bone_frame(shaped.joint_heads[b], shaped.joint_tails[b],
                                     skeleton.bones[b].name);
    bt.rest[b] = {pose_detail::frame_rotation(f), shaped.joint_heads[b]};
  }
  bt.world = bt.rest;
  bt.order = pose_detail::topo_order(skeleton);
  bt.pose = Pose::identity(n);
  return bt;
}

// world(b) = world(parent) o rest_local(b) o Rot(r_b); the root is further
// composed with the root rigid transform.
inline void forward_kinematics(BoneTransforms& bt, const Skeleton& skeleton, const Pose& pose) {
  int n = static_cast<int>(skeleton.bones.size());
  validate_pose(pose, n);
  bt.local.resize(n);
  Affine root_rigid{rodrigues(pose.root_rotation), pose.root_translation};
  for (int b : bt.order) {
    int par = skeleton.bones[b].parent;
    Affine rest_local = par == -1 ? bt.rest[b] : bt.rest[par].inverse_rigid().compose(bt.rest[b]);
    Affine rot{rodrigues(pose.joint_rotations[b]), Vec3::Zero()};
    bt.local[b] = rest_local.compose(rot);
    bt.world[b] = par == -1 ? root_rigid.compose(bt.local[b]) : bt.world[par].compose(bt.local[b]);
  }
  bt.pose = pose;
}

struct DeformOptions {
  bool want_jacobians = false;
  int active_params = -1;  // phenotype restriction, see ShapeOptions
};

struct DeformResult {
  std::vector<Vec3> vertices;
  // Row 3i+c is vertex i, coordinate c. Pose columns are
  // [root_rotation xyz, root_translation xyz, bone0 rotation xyz, ...].
  Eigen::MatrixXd pose_jacobian;
  // Shape columns follow shape_param_indices (schema parameter indices).
  Eigen::MatrixXd shape_jacobian;
  std::vector<int> shape_param_indices;
};

namespace pose_detail {

// Applies the per-bone transform derivative set dG to every vertex,
// optionally adding the transported rest-vertex derivative dV.
inline void accumulate_vertex_column(const ShapedRest& shaped, const SkinningWeights& weights,
                                     const std::vector<Affine>& G, const std::vector<Affine>& dG,
                                     const std::vector<Vec3>* dV, Eigen::MatrixXd& J, int col) {
  int nv = static_cast<int>(shaped.vertices.size());
  for (int v = 0; v < nv; ++v) {
    Vec3 acc = Vec3::Zero();
    for (int k = weights.begin(v); k < weights.end(v); ++k) {
      int b = weights.bones[k];
      double w = weights.weights[k];
      Vec3 term = dG[b].R * shaped.vertices[v] + dG[b].t;
      if (dV) term += G[b].R * (*dV)[v];
      acc += w * term;
    }
    J.block<3, 1>(3 * v, col) = acc;
  }
}

}  // namespace pose_detail

// Linear blend skinning v' = sum_b w_vb (W_b o A_b^-1)(v), plus analytic
// Jacobians when requested. The skeleton is needed for jacobian chain terms
// (anchor means and parent links).
inline DeformResult skin(const ShapedRest& shaped, const Skeleton& skeleton,
                         const BoneTransforms& bt, const SkinningWeights& weights,
                         const DeformOptions& opts = {}) {
  using pose_detail::accumulate_vertex_column;
  int nb = static_cast<int>(skeleton.bones.size());
  int nv = static_cast<int>(shaped.vertices.size());
  if (weights.vertex_count() != nv) throw DomainError("skin: weight/vertex count mismatch");

  std::vector<Affine> G(nb), rest_inv(nb);
  for (int b = 0; b < nb; ++b) {
    rest_inv[b] = bt.rest[b].inverse_rigid();
    G[b] = bt.world[b].compose(rest_inv[b]);
  }

  DeformResult out;
  out.vertices.resize(nv);
  for (int v = 0; v < nv; ++v) {
    Vec3 acc = Vec3::Zero();
    for (int k = weights.begin(v); k < weights.end(v); ++k) {
      acc += weights.weights[k] * G[weights.bones[k]].apply(shaped.vertices[v]);
    }
    out.vertices[v] = acc;
  }
  if (!opts.want_jacobians) return out;

  const Pose& pose = bt.pose;
  Affine root_rigid{rodrigues(pose.root_rotation), pose.root_translation};

  // ---- pose jacobian ----
  int cols = 6 + 3 * nb;
  out.pose_jacobian.setZero(3 * nv, cols);
  std::vector<Affine> dW(nb), dG(nb);

  // Root rotation: dT = {dR0_k, 0} premultiplies the whole chain.
  {
    Mat3 dR0[3];
    rodrigues_with_jacobian(pose.root_rotation, dR0);
    for (int k = 0; k < 3; ++k) {
      for (int b = 0; b < nb; ++b) dW[b] = zero_affine();
      for (int b : bt.order) {
        int par = skeleton.bones[b].parent;
        dW[b] = par == -1 ? compose_d_left(Affine{dR0[k], Vec3::Zero()}, bt.local[b])
                          : compose_d_left(dW[par], bt.local[b]);
      }
      for (int b = 0; b < nb; ++b) dG[b] = compose_d_left(dW[b], rest_inv[b]);
      accumulate_vertex_column(shaped, weights, G, dG, nullptr, out.pose_jacobian, k);
    }
  }
  // Root translation: every vertex moves by e_k (weights sum to 1).
  for (int k = 0; k < 3; ++k) {
    for (int v = 0; v < nv; ++v) out.pose_jacobian(3 * v + k, 3 + k) = 1.0;
  }
  // Joint rotations.
  {
    std::vector<char> in_subtree(nb);
    for (int c = 0; c < nb; ++c) {
      Mat3 dRc[3];
      rodrigues_with_jacobian(pose.joint_rotations[c], dRc);
      int cpar = skeleton.bones[c].parent;
      Affine rest_local_c = cpar == -1 ? bt.rest[c] : rest_inv[cpar].compose(bt.rest[c]);
      Affine pre = cpar == -1 ? root_rigid : bt.world[cpar];
      for (int b : bt.order) {
        int par = skeleton.bones[b].parent;
        in_subtree[b] = b == c || (par != -1 && in_subtree[par]);
      }
      for (int k = 0; k < 3; ++k) {
        for (int b = 0; b < nb; ++b) dW[b] = zero_affine();
        for (int b : bt.order) {
          if (!in_subtree[b]) continue;
          if (b == c) {
            Affine dL = compose_d_right(rest_local_c, Affine{dRc[k], Vec3::Zero()});
            dW[b] = compose_d_right(pre, dL);  // pre is constant here
          } else {
            dW[b] = compose_d_left(dW[skeleton.bones[b].parent], bt.local[b]);
          }
        }
        for (int b = 0; b < nb; ++b) {
          dG[b] = in_subtree[b] ? compose_d_left(dW[b], rest_inv[b]) : zero_affine();
        }
        accumulate_vertex_column(shaped, weights, G, dG, nullptr, out.pose_jacobian,
                                 6 + 3 * c + k);
      }
    }
  }

  // ---- shape jacobian ----
  // Chains through (a) the rest-vertex derivative, (b) joint anchors moving
  // the rest frames, (c) FK recomposition with the new frames.
  out.shape_param_indices.clear();
  std::vector<const ShapeParamDeriv*> derivs;
  for (const auto& d : shaped.shape_jacobian) {
    derivs.push_back(&d);
    out.shape_param_indices.push_back(d.param);
  }
  out.shape_jacobian.setZero(3 * nv, static_cast<int>(derivs.size()));
  if (!derivs.empty()) {
    std::vector<Vec3> dV(nv);
    std::vector<Affine> dA(nb), dAinv(nb), dL(nb);
    for (size_t j = 0; j < derivs.size(); ++j) {
      std::fill(dV.begin(), dV.end(), Vec3::Zero());
      for (size_t i = 0; i < derivs[j]->indices.size(); ++i) {
        dV[derivs[j]->indices[i]] = derivs[j]->d[i];
      }
      auto danchor = [&dV](const std::vector<VertexIndex>& anchors) -> Vec3 {
        Vec3 s = Vec3::Zero();
        for (VertexIndex a : anchors) s += dV[a];
        return s / static_cast<double>(anchors.size());
      };
      for (int b = 0; b < nb; ++b) {
        Vec3 dh = danchor(skeleton.bones[b].head_anchors);
        Vec3 dt = danchor(skeleton.bones[b].tail_anchors);
        auto f = pose_detail::bone_frame(shaped.joint_heads[b], shaped.joint_tails[b],
                                         skeleton.bones[b].name);
        dA[b] = {pose_detail::frame_rotation_d(f, dh, dt), dh};
        dAinv[b] = inverse_rigid_d(bt.rest[b], dA[b]);
      }
      for (int b : bt.order) {
        int par = skeleton.bones[b].parent;
        Affine rot{rodrigues(pose.joint_rotations[b]), Vec3::Zero()};
        if (par == -1) {
          dL[b] = compose_d_left(dA[b], rot);
          dW[b] = compose_d_right(root_rigid, dL[b]);
        } else {
          Affine a = compose_d_left(dAinv[par], bt.rest[b].compose(rot));
          Affine bterm = compose_d_right(rest_inv[par], compose_d_left(dA[b], rot));
          dL[b] = affine_sum(a, bterm);
          dW[b] = affine_sum(compose_d_left(dW[par], bt.local[b]),
                             compose_d_right(bt.world[par], dL[b]));
        }
        dG[b] = affine_sum(compose_d_left(dW[b], rest_inv[b]),
                           compose_d_right(bt.world[b], dAinv[b]));
      }
      accumulate_vertex_column(shaped, weights, G, dG, &dV, out.shape_jacobian,
                               static_cast<int>(j));
    }
  }
  return out;
}

// Full pipeline: shape -> rest frames -> FK -> skinning.
inline DeformResult deform(const AssetBundle& bundle, const PhenotypeVector& phenotypes,
                           const Pose& pose, const DeformOptions& opts = {}) {
  ShapeOptions sopts;
  sopts.want_jacobian = opts.want_jacobians;
  sopts.active_params = opts.active_params;
  ShapedRest shaped = shape(bundle, phenotypes, sopts);
  BoneTransforms bt = rest_transforms(shaped, bundle.skeleton);
  forward_kinematics(bt, bundle.skeleton, pose);
  return skin(shaped, bundle.skeleton, bt, bundle.weights, opts);
}

// Batched forward pass, structure-of-arrays over bodies: vertices of body i
// start at 3 * vertex_count * i. Data-parallel across bodies.
struct BatchDeformResult {
  int body_count = 0;
  int vertex_count = 0;
  std::vector<double> vertices;
};

inline BatchDeformResult deform_batch(const AssetBundle& bundle,
                                      const std::vector<PhenotypeVector>& phenotypes,
                                      const std::vector<Pose>& poses,
                                      const DeformOptions& opts = {}) {
  if (phenotypes.size() != poses.size()) {
    throw DomainError("deform_batch: phenotype/pose count mismatch");
  }
  BatchDeformResult out;
  out.body_count = static_cast<int>(phenotypes.size());
  out.vertex_count = bundle.vertex_count();
  out.vertices.resize(static_cast<size_t>(out.body_count) * out.vertex_count * 3);
  parallel_for(out.body_count, [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t i = lo; i < hi; ++i) {
      DeformOptions o = opts;
      o.want_jacobians = false;
      DeformResult r = deform(bundle, phenotypes[i], poses[i], o);
      double* dst = out.vertices.data() + static_cast<size_t>(i) * out.vertex_count * 3;
      for (int v = 0; v < out.vertex_count; ++v) {
        dst[3 * v + 0] = r.vertices[v].x();
        dst[3 * v + 1] = r.vertices[v].y();
        dst[3 * v + 2] = r.vertices[v].z();
      }
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Retargeting: reproduce source world bone orientations on this skeleton.
// The mapping must cover a connected subtree containing the root; unmapped
// bones keep zero rotation. Translations come from the target rest pose.

inline Pose retarget(const std::map<std::string, Mat3>& source_world_rotations,
                     const std::map<std::string, std::string>& source_to_target,
                     const AssetBundle& bundle, const PhenotypeVector& phenotypes) {
  const Skeleton& skel = bundle.skeleton;
  ShapedRest shaped = shape(bundle, phenotypes);
  BoneTransforms bt = rest_transforms(shaped, skel);

  std::vector<int> mapped(skel.bones.size(), 0);
  std::vector<Mat3> desired(skel.bones.size());
  for (const auto& [src, tgt] : source_to_target) {
    auto it = source_world_rotations.find(src);
    if (it == source_world_rotations.end()) {
      throw DomainError("retarget: no source orientation for '" + src + "'");
    }
    int b = skel.find(tgt);
    if (b < 0) throw DomainError("retarget: unknown target bone '" + tgt + "'");
    if (mapped[b]) throw DomainError("retarget: target bone '" + tgt + "' mapped twice");
    mapped[b] = 1;
    desired[b] = it->second;
  }
  if (!mapped[skel.root_index]) throw DomainError("retarget: mapping must include the root bone");
  for (size_t b = 0; b < skel.bones.size(); ++b) {
    if (!mapped[b]) continue;
    int par = skel.bones[b].parent;
    if (par != -1 && !mapped[par]) {
      throw DomainError("retarget: mapping is disconnected at bone '" + skel.bones[b].name + "'");
    }
  }

  Pose pose = Pose::identity(static_cast<int>(skel.bones.size()));
  // Root delta goes into the rigid transform; the root joint stays at zero.
  pose.root_rotation = log_rotation(desired[skel.root_index] * bt.rest[skel.root_index].R.transpose());
  Mat3 root_world = rodrigues(pose.root_rotation) * bt.rest[skel.root_index].R;
  std::vector<Mat3> achieved(skel.bones.size());
  achieved[skel.root_index] = root_world;
  for (int b : pose_detail::topo_order(skel)) {
    if (!mapped[b] || b == skel.root_index) continue;
    int par = skel.bones[b].parent;
    Mat3 rest_local = bt.rest[par].R.transpose() * bt.rest[b].R;
    Mat3 rot = rest_local.transpose() * achieved[par].transpose() * desired[b];
    pose.joint_rotations[b] = log_rotation(rot);
    achieved[b] = achieved[par] * rest_local * rodrigues(pose.joint_rotations[b]);
  }
  return pose;
}

}  // namespace anny
