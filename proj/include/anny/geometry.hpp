#pragma once

// Triangle predicates: exact closest point (Eberly region walk) and
// Moller-style triangle-triangle intersection with an epsilon on the
// plane-distance classification. Coplanar overlapping triangles count as
// intersecting.

#include "anny/core.hpp"

#include <cmath>

namespace anny {

struct ClosestOnTriangle {
  double sq_dist = 0;
  Vec3 point = Vec3::Zero();
  Vec3 bary = Vec3::Zero();  // weights of (v0, v1, v2), non-negative, sum 1
};

inline ClosestOnTriangle closest_point_triangle(const Vec3& p, const Vec3& v0, const Vec3& v1,
                                                const Vec3& v2) {
  Vec3 diff = v0 - p;
  Vec3 e0 = v1 - v0, e1 = v2 - v0;
  double a00 = e0.dot(e0), a01 = e0.dot(e1), a11 = e1.dot(e1);
  double b0 = diff.dot(e0), b1 = diff.dot(e1), c = diff.dot(diff);
  double det = std::abs(a00 * a11 - a01 * a01);
  double s = a01 * b1 - a11 * b0;
  double t = a01 * b0 - a00 * b1;
  double d2;

  if (s + t <= det) {
    if (s < 0) {
      if (t < 0) {  // region 4
        if (b0 < 0) {
          t = 0;
          if (-b0 >= a00) {
            s = 1;
            d2 = a00 + 2 * b0 + c;
          } else {
            s = -b0 / a00;
            d2 = b0 * s + c;
          }
        } else {
          s = 0;
          if (b1 >= 0) {
            t = 0;
            d2 = c;
          } else if (-b1 >= a11) {
            t = 1;
            d2 = a11 + 2 * b1 + c;
          } else {
            t = -b1 / a11;
            d2 = b1 * t + c;
          }
        }
      } else {  // region 3
        s = 0;
        if (b1 >= 0) {
          t = 0;
          d2 = c;
        } else if (-b1 >= a11) {
          t = 1;
          d2 = a11 + 2 * b1 + c;
        } else {
          t = -b1 / a11;
          d2 = b1 * t + c;
        }
      }
    } else if (t < 0) {  // region 5
      t = 0;
      if (b0 >= 0) {
        s = 0;
        d2 = c;
      } else if (-b0 >= a00) {
        s = 1;
        d2 = a00 + 2 * b0 + c;
      } else {
        s = -b0 / a00;
        d2 = b0 * s + c;
      }
    } else {  // region 0, interior
      double inv = 1.0 / det;
      s *= inv;
      t *= inv;
      d2 = s * (a00 * s + a01 * t + 2 * b0) + t * (a01 * s + a11 * t + 2 * b1) + c;
    }
  } else {
    double tmp0, tmp1, numer, denom;
    if (s < 0) {  // region 2
      tmp0 = a01 + b0;
      tmp1 = a11 + b1;
      if (tmp1 > tmp0) {
        numer = tmp1 - tmp0;
        denom = a00 - 2 * a01 + a11;
        if (numer >= denom) {
          s = 1;
          t = 0;
          d2 = a00 + 2 * b0 + c;
        } else {
          s = numer / denom;
          t = 1 - s;
          d2 = s * (a00 * s + a01 * t + 2 * b0) + t * (a01 * s + a11 * t + 2 * b1) + c;
        }
      } else {
        s = 0;
        if (tmp1 <= 0) {
          t = 1;
          d2 = a11 + 2 * b1 + c;
        } else if (b1 >= 0) {
          t = 0;
          d2 = c;
        } else {
          t = -b1 / a11;
          d2 = b1 * t + c;
        }
      }
    } else if (t < 0) {  // region 6
      tmp0 = a01 + b1;
      tmp1 = a00 + b0;
      if (tmp1 > tmp0) {
        numer = tmp1 - tmp0;
        denom = a00 - 2 * a01 + a11;
        if (numer >= denom) {
          t = 1;
          s = 0;
          d2 = a11 + 2 * b1 + c;
        } else {
          t = numer / denom;
          s = 1 - t;
          d2 = s * (a00 * s + a01 * t + 2 * b0) + t * (a01 * s + a11 * t + 2 * b1) + c;
        }
      } else {
        t = 0;
        if (tmp1 <= 0) {
          s = 1;
          d2 = a00 + 2 * b0 + c;
        } else if (b0 >= 0) {
          s = 0;
          d2 = c;
        } else {
          s = -b0 / a00;
          d2 = b0 * s + c;
        }
      }
    } else {  // region 1
      numer = a11 + b1 - a01 - b0;
      if (numer <= 0) {
        s = 0;
        t = 1;
        d2 = a11 + 2 * b1 + c;
      } else {
        denom = a00 - 2 * a01 + a11;
        if (numer >= denom) {
          s = 1;
          t = 0;
          d2 = a00 + 2 * b0 + c;
        } else {
          s = numer / denom;
          t = 1 - s;
          d2 = s * (a00 * s + a01 * t + 2 * b0) + t * (a01 * s + a11 * t + 2 * b1) + c;
        }
      }
    }
  }

  (void)d2;  // region classification only; the algebraic form cancels badly
  ClosestOnTriangle r;
  r.point = v0 + s * e0 + t * e1;
  r.sq_dist = (p - r.point).squaredNorm();
  r.bary = Vec3(1.0 - s - t, s, t);
  return r;
}

// ---------------------------------------------------------------------------
// Triangle-triangle intersection.

namespace tri_detail {

inline constexpr double kCoplanarEps = 1e-10;

inline int dominant_axis(const Vec3& n) {
  Vec3 a = n.cwiseAbs();
  if (a.x() >= a.y() && a.x() >= a.z()) return 0;
  return a.y() >= a.z() ? 1 : 2;
}

inline double orient2d(const Eigen::Vector2d& a, const Eigen::Vector2d& b,
                       const Eigen::Vector2d& c) {
  return (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
}

inline bool segments_intersect_2d(const Eigen::Vector2d& a, const Eigen::Vector2d& b,
                                  const Eigen::Vector2d& c, const Eigen::Vector2d& d) {
  double d1 = orient2d(c, d, a);
  double d2 = orient2d(c, d, b);
  double d3 = orient2d(a, b, c);
  double d4 = orient2d(a, b, d);
  if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0))) {
    return true;
  }
  auto on_segment = [](const Eigen::Vector2d& p, const Eigen::Vector2d& q,
                       const Eigen::Vector2d& r) {
    return std::min(p.x(), r.x()) <= q.x() && q.x() <= std::max(p.x(), r.x()) &&
           std::min(p.y(), r.y()) <= q.y() && q.y() <= std::max(p.y(), r.y());
  };
  if (d1 == 0 && on_segment(c, a, d)) return true;
  if (d2 == 0 && on_segment(c, b, d)) return true;
  if (d3 == 0 && on_segment(a, c, b)) return true;
  if (d4 == 0 && on_segment(a, d, b)) return true;
  return false;
}

inline bool point_in_triangle_2d(const Eigen::Vector2d& p, const Eigen::Vector2d& a,
                                 const Eigen::Vector2d& b, const Eigen::Vector2d& c) {
  double d1 = orient2d(a, b, p);
  double d2 = orient2d(b, c, p);
  double d3 = orient2d(c, a, p);
  bool has_neg = d1 < 0 || d2 < 0 || d3 < 0;
  bool has_pos = d1 > 0 || d2 > 0 || d3 > 0;
  return !(has_neg && has_pos);
}

inline bool coplanar_tri_tri(const Vec3& n, const Vec3 p[3], const Vec3 q[3]) {
  int drop = dominant_axis(n);
  int u = (drop + 1) % 3, v = (drop + 2) % 3;
  Eigen::Vector2d a[3], b[3];
  for (int i = 0; i < 3; ++i) {
    a[i] = {p[i][u], p[i][v]};
    b[i] = {q[i][u], q[i][v]};
  }
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      if (segments_intersect_2d(a[i], a[(i + 1) % 3], b[j], b[(j + 1) % 3])) return true;
    }
  }
  if (point_in_triangle_2d(a[0], b[0], b[1], b[2])) return true;
  if (point_in_triangle_2d(b[0], a[0], a[1], a[2])) return true;
  return false;
}

// Triangle/plane cut: projections (onto the intersection line) of on-plane
// vertices and crossing-edge points. Empty when strictly one-sided.
inline int cut_interval(const double proj[3], const double dist[3], double out[2]) {
  double pts[3];
  int n = 0;
  for (int i = 0; i < 3; ++i) {
    if (dist[i] == 0.0) pts[n++] = proj[i];
  }
  for (int i = 0; i < 3; ++i) {
    int j = (i + 1) % 3;
    if (dist[i] * dist[j] < 0.0) {
      pts[n++] = proj[i] + (proj[j] - proj[i]) * dist[i] / (dist[i] - dist[j]);
    }
  }
  if (n == 0) return 0;
  out[0] = pts[0];
  out[1] = pts[0];
  for (int i = 1; i < n; ++i) {
    out[0] = std::min(out[0], pts[i]);
    out[1] = std::max(out[1], pts[i]);
  }
  return n;
}

}  // namespace tri_detail

inline bool tri_tri_intersect(const Vec3& p0, const Vec3& p1, const Vec3& p2, const Vec3& q0,
                              const Vec3& q1, const Vec3& q2) {
  using namespace tri_detail;
  const Vec3 p[3] = {p0, p1, p2};
  const Vec3 q[3] = {q0, q1, q2};

  Vec3 nq = (q1 - q0).cross(q2 - q0);
  double dq = -nq.dot(q0);
  double dp_on_q[3];
  for (int i = 0; i < 3; ++i) {
    double d = nq.dot(p[i]) + dq;
    dp_on_q[i] = std::abs(d) < kCoplanarEps ? 0.0 : d;
  }
  if ((dp_on_q[0] > 0 && dp_on_q[1] > 0 && dp_on_q[2] > 0) ||
      (dp_on_q[0] < 0 && dp_on_q[1] < 0 && dp_on_q[2] < 0)) {
    return false;
  }

  Vec3 np = (p1 - p0).cross(p2 - p0);
  double dp = -np.dot(p0);
  double dq_on_p[3];
  for (int i = 0; i < 3; ++i) {
    double d = np.dot(q[i]) + dp;
    dq_on_p[i] = std::abs(d) < kCoplanarEps ? 0.0 : d;
  }
  if ((dq_on_p[0] > 0 && dq_on_p[1] > 0 && dq_on_p[2] > 0) ||
      (dq_on_p[0] < 0 && dq_on_p[1] < 0 && dq_on_p[2] < 0)) {
    return false;
  }

  if (dp_on_q[0] == 0 && dp_on_q[1] == 0 && dp_on_q[2] == 0) {
    return coplanar_tri_tri(nq, p, q);
  }

  // Project on the dominant axis of the intersection line direction.
  Vec3 dir = np.cross(nq);
  int axis = dominant_axis(dir);
  double proj_p[3] = {p0[axis], p1[axis], p2[axis]};
  double proj_q[3] = {q0[axis], q1[axis], q2[axis]};
  double ip[2], iq[2];
  if (cut_interval(proj_p, dp_on_q, ip) == 0) return false;
  if (cut_interval(proj_q, dq_on_p, iq) == 0) return false;
  return std::max(ip[0], iq[0]) <= std::min(ip[1], iq[1]);
}

}  // namespace anny
