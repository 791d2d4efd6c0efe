#pragma once

// Axis-angle (rotation vector) exponential/log maps and the analytic
// derivative of the rotation matrix with respect to the vector components.

#include "anny/core.hpp"

#include <cmath>

namespace anny {

inline Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return m;
}

// Series switchover for the Rodrigues coefficient functions. Below this
// angle the Taylor expansions agree with the closed forms to < 1e-12.
inline constexpr double kRotationTaylorThreshold = 1e-4;

namespace detail {

// a = sin(t)/t, b = (1-cos(t))/t^2, and the /t-scaled derivatives
// c1 = a'(t)/t = (t cos t - sin t)/t^3, c2 = b'(t)/t = (t sin t - 2(1-cos t))/t^4.
struct RodriguesCoeffs {
  double a, b, c1, c2;
};

inline RodriguesCoeffs rodrigues_coeffs(double theta) {
  RodriguesCoeffs c;
  double t2 = theta * theta;
  if (theta < kRotationTaylorThreshold) {
    c.a = 1.0 - t2 / 6.0 + t2 * t2 / 120.0;
    c.b = 0.5 - t2 / 24.0 + t2 * t2 / 720.0;
    c.c1 = -1.0 / 3.0 + t2 / 30.0 - t2 * t2 / 840.0;
    c.c2 = -1.0 / 12.0 + t2 / 180.0 - t2 * t2 / 6720.0;
  } else {
    double s = std::sin(theta), co = std::cos(theta);
    double t3 = t2 * theta, t4 = t2 * t2;
    c.a = s / theta;
    c.b = (1.0 - co) / t2;
    c.c1 = (theta * co - s) / t3;
    c.c2 = (theta * s - 2.0 * (1.0 - co)) / t4;
  }
  return c;
}

}  // namespace detail

// R = I + a K + b K^2 with K = skew(r).
inline Mat3 rodrigues(const Vec3& r) {
  double theta = r.norm();
  auto c = detail::rodrigues_coeffs(theta);
  Mat3 K = skew(r);
  return Mat3::Identity() + c.a * K + c.b * (K * K);
}

// Also fills dR[k] = dR/dr_k. Smooth through r = 0 (dR[k] -> skew(e_k)).
inline Mat3 rodrigues_with_jacobian(const Vec3& r, Mat3 dR[3]) {
  double theta = r.norm();
  auto c = detail::rodrigues_coeffs(theta);
  Mat3 K = skew(r);
  Mat3 K2 = K * K;
  Mat3 R = Mat3::Identity() + c.a * K + c.b * K2;
  for (int k = 0; k < 3; ++k) {
    Mat3 Ek = skew(Vec3::Unit(k));
    dR[k] = c.c1 * r[k] * K + c.a * Ek + c.c2 * r[k] * K2 + c.b * (Ek * K + K * Ek);
  }
  return R;
}

// Log map R -> rotation vector, |r| in [0, pi]. Near pi the axis is taken
// from the dominant diagonal of (R + I)/2 for stability.
inline Vec3 log_rotation(const Mat3& R) {
  double tr = R.trace();
  double cos_theta = std::min(1.0, std::max(-1.0, (tr - 1.0) * 0.5));
  double theta = std::acos(cos_theta);
  Vec3 w(R(2, 1) - R(1, 2), R(0, 2) - R(2, 0), R(1, 0) - R(0, 1));
  if (theta < 1e-8) {
    return 0.5 * w;  // first order: R ~ I + skew(r)
  }
  if (theta < M_PI - 1e-4) {
    return (theta / (2.0 * std::sin(theta))) * w;
  }
  // Near pi: the symmetric part (R + R^T)/2 - cos(theta) I equals
  // (1 - cos(theta)) a a^T; symmetrizing cancels the skew term that would
  // otherwise contaminate the axis at ~sin(theta) magnitude.
  Mat3 B = (0.5 * (R + R.transpose()) - cos_theta * Mat3::Identity()) / (1.0 - cos_theta);
  int k = 0;
  if (B(1, 1) > B(k, k)) k = 1;
  if (B(2, 2) > B(k, k)) k = 2;
  Vec3 axis;
  axis[k] = std::sqrt(std::max(0.0, B(k, k)));
  for (int j = 0; j < 3; ++j) {
    if (j != k) axis[j] = B(k, j) / axis[k];
  }
  axis.normalize();
  // Sign from the skew part (vanishes exactly at pi), and a sharper angle
  // from |w| = 2 sin(theta), accurate where acos is not.
  if (axis.dot(w) < 0.0) axis = -axis;
  double sin_theta = std::min(1.0, 0.5 * w.norm());
  theta = M_PI - std::asin(sin_theta);
  return theta * axis;
}

}  // namespace anny
