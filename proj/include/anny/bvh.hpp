#pragma once

// Axis-aligned bounding volume hierarchy over triangles: median split on
// the longest node-box axis, deterministic for a fixed input. Serves both
// closest-point queries (fitting) and pair traversal (self-collision).

#include "anny/geometry.hpp"

#include <algorithm>
#include <functional>
#include <numeric>
#include <vector>

namespace anny {

struct Aabb {
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = Vec3::Constant(-std::numeric_limits<double>::infinity());

  void expand(const Vec3& p) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  void expand(const Aabb& o) {
    lo = lo.cwiseMin(o.lo);
    hi = hi.cwiseMax(o.hi);
  }
  bool contains(const Aabb& o) const {
    return (lo.array() <= o.lo.array()).all() && (hi.array() >= o.hi.array()).all();
  }
  bool overlaps(const Aabb& o) const {
    return (lo.array() <= o.hi.array()).all() && (o.lo.array() <= hi.array()).all();
  }
  double sq_dist(const Vec3& p) const {
    Vec3 d = (lo - p).cwiseMax(p - hi).cwiseMax(0.0);
    return d.squaredNorm();
  }
  int longest_axis() const {
    Vec3 ext = hi - lo;
    int a = 0;
    if (ext.y() > ext.x()) a = 1;
    if (ext.z() > ext[a]) a = 2;
    return a;
  }
};

class Bvh {
 public:
  struct Node {
    Aabb box;
    std::int32_t left = -1, right = -1;  // internal children
    std::int32_t begin = 0, end = 0;     // leaf triangle range in order()
    bool is_leaf() const { return left < 0; }
  };

  static constexpr int kLeafSize = 4;

  Bvh() = default;

  // `tri_ids` selects a subset of `tris` (defaults to all). Vertex data is
  // referenced, not copied; keep it alive while querying.
  Bvh(const std::vector<Vec3>& vertices, const std::vector<Tri>& tris,
      std::vector<std::int32_t> tri_ids = {})
      : vertices_(&vertices), tris_(&tris), order_(std::move(tri_ids)) {
    if (order_.empty()) {
      order_.resize(tris.size());
      std::iota(order_.begin(), order_.end(), 0);
    }
    if (order_.empty()) throw DomainError("bvh: empty triangle list");
    boxes_.resize(tris.size());
    centroids_.resize(tris.size());
    for (std::int32_t t : order_) {
      Aabb b;
      for (int c = 0; c < 3; ++c) b.expand(vertices[(*tris_)[t][c]]);
      boxes_[t] = b;
      centroids_[t] = (b.lo + b.hi) * 0.5;
    }
    nodes_.reserve(order_.size() * 2);
    build(0, static_cast<std::int32_t>(order_.size()));
  }

  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<std::int32_t>& order() const { return order_; }
  const Aabb& tri_box(std::int32_t tri) const { return boxes_[tri]; }

  struct ClosestHit {
    double sq_dist = std::numeric_limits<double>::infinity();
    Vec3 point = Vec3::Zero();
    Vec3 bary = Vec3::Zero();
    std::int32_t tri = -1;
  };

  // Exact nearest point over all triangles; distance ties resolved toward
  // the lowest triangle index, matching a brute-force ascending scan.
  ClosestHit closest_point(const Vec3& p) const {
    ClosestHit best;
    std::int32_t stack[64];
    int top = 0;
    stack[top++] = 0;
    while (top > 0) {
      const Node& node = nodes_[stack[--top]];
      if (node.box.sq_dist(p) > best.sq_dist) continue;
      if (node.is_leaf()) {
        for (std::int32_t i = node.begin; i < node.end; ++i) {
          std::int32_t t = order_[i];
          const Tri& tri = (*tris_)[t];
          auto r = closest_point_triangle(p, (*vertices_)[tri[0]], (*vertices_)[tri[1]],
                                          (*vertices_)[tri[2]]);
          if (r.sq_dist < best.sq_dist || (r.sq_dist == best.sq_dist && t < best.tri)) {
            best.sq_dist = r.sq_dist;
            best.point = r.point;
            best.bary = r.bary;
            best.tri = t;
          }
        }
      } else {
        // Visit the nearer child first so pruning bites sooner.
        double dl = nodes_[node.left].box.sq_dist(p);
        double dr = nodes_[node.right].box.sq_dist(p);
        if (dl <= dr) {
          stack[top++] = node.right;
          stack[top++] = node.left;
        } else {
          stack[top++] = node.left;
          stack[top++] = node.right;
        }
      }
    }
    return best;
  }

  // Calls fn(tri_a, tri_b) for every pair whose leaf boxes overlap.
  static void traverse_pairs(const Bvh& a, const Bvh& b,
                             const std::function<void(std::int32_t, std::int32_t)>& fn) {
    struct Item {
      std::int32_t na, nb;
    };
    std::vector<Item> stack{{0, 0}};
    while (!stack.empty()) {
      auto [ia, ib] = stack.back();
      stack.pop_back();
      const Node& na = a.nodes_[ia];
      const Node& nb = b.nodes_[ib];
      if (!na.box.overlaps(nb.box)) continue;
      if (na.is_leaf() && nb.is_leaf()) {
        for (std::int32_t i = na.begin; i < na.end; ++i) {
          for (std::int32_t j = nb.begin; j < nb.end; ++j) {
            std::int32_t ta = a.order_[i], tb = b.order_[j];
            if (a.boxes_[ta].overlaps(b.boxes_[tb])) fn(ta, tb);
          }
        }
      } else if (nb.is_leaf() || (!na.is_leaf() && volume(na.box) >= volume(nb.box))) {
        stack.push_back({na.left, ib});
        stack.push_back({na.right, ib});
      } else {
        stack.push_back({ia, nb.left});
        stack.push_back({ia, nb.right});
      }
    }
  }

 private:
  static double volume(const Aabb& b) {
    Vec3 e = (b.hi - b.lo).cwiseMax(0.0);
    return e.x() * e.y() * e.z();
  }

  std::int32_t build(std::int32_t begin, std::int32_t end) {
    std::int32_t idx = static_cast<std::int32_t>(nodes_.size());
    nodes_.push_back({});
    Aabb box;
    for (std::int32_t i = begin; i < end; ++i) box.expand(boxes_[order_[i]]);
    nodes_[idx].box = box;
    if (end - begin <= kLeafSize) {
      // Ascending triangle ids inside a leaf keep tie-breaking aligned with
      // the brute-force scan order.
      std::sort(order_.begin() + begin, order_.begin() + end);
      nodes_[idx].begin = begin;
      nodes_[idx].end = end;
      return idx;
    }
    int axis = box.longest_axis();
    std::sort(order_.begin() + begin, order_.begin() + end,
              [this, axis](std::int32_t x, std::int32_t y) {
                double cx = centroids_[x][axis], cy = centroids_[y][axis];
                return cx != cy ? cx < cy : x < y;
              });
    std::int32_t mid = begin + (end - begin) / 2;
    std::int32_t l = build(begin, mid);
    std::int32_t r = build(mid, end);
    nodes_[idx].left = l;
    nodes_[idx].right = r;
    return idx;
  }

  const std::vector<Vec3>* vertices_ = nullptr;
  const std::vector<Tri>* tris_ = nullptr;
  std::vector<std::int32_t> order_;
  std::vector<Aabb> boxes_;
  std::vector<Vec3> centroids_;
  std::vector<Node> nodes_;
};

}  // namespace anny
