#pragma once

// Shared scalar/vector types, error hierarchy, thread pool helpers and
// deterministic RNG utilities used across the library.

#include <Eigen/Dense>

#include <charconv>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace anny {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using VertexIndex = std::int32_t;
using BoneIndex = std::int32_t;
using Quad = std::array<VertexIndex, 4>;
using Tri = std::array<VertexIndex, 3>;

// World conventions: +Y is up, units are meters.
inline constexpr int kUpAxis = 1;

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
// Malformed input files.
struct ParseError : Error {
  using Error::Error;
};
// Structurally well-formed data violating a documented invariant.
struct ValidationError : Error {
  using Error::Error;
};
struct IoError : Error {
  using Error::Error;
};
// Operation preconditions (bad arguments, out-of-range values).
struct DomainError : Error {
  using Error::Error;
};

// Rigid/affine transform as explicit linear part + translation. Derivative
// objects reuse the same struct with a non-orthonormal linear part.
struct Affine {
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();

  static Affine identity() { return {}; }

  Vec3 apply(const Vec3& v) const { return R * v + t; }

  Affine compose(const Affine& o) const { return {R * o.R, R * o.t + t}; }

  // Valid only when R is a rotation.
  Affine inverse_rigid() const {
    Mat3 rt = R.transpose();
    return {rt, -(rt * t)};
  }
};

inline Affine compose(const Affine& a, const Affine& b) { return a.compose(b); }

// Product rule for d(a o b) given one differentiated factor.
inline Affine compose_d_left(const Affine& da, const Affine& b) {
  return {da.R * b.R, da.R * b.t + da.t};
}
inline Affine compose_d_right(const Affine& a, const Affine& db) {
  return {a.R * db.R, a.R * db.t};
}
inline Affine affine_sum(const Affine& a, const Affine& b) {
  return {a.R + b.R, a.t + b.t};
}
// d(a^-1) for rigid a.
inline Affine inverse_rigid_d(const Affine& a, const Affine& da) {
  Mat3 dRt = da.R.transpose();
  return {dRt, -(dRt * a.t) - a.R.transpose() * da.t};
}

inline Affine zero_affine() { return {Mat3::Zero(), Vec3::Zero()}; }

// ---------------------------------------------------------------------------
// Threading. A process-global worker cap, settable from the CLI (--threads)
// or the ANNY_THREADS environment variable. parallel_for uses fixed-size
// chunking so reductions combined in chunk order are reproducible.

namespace detail {
inline int& thread_count_ref() {
  static int count = [] {
    if (const char* env = std::getenv("ANNY_THREADS")) {
      int v = std::atoi(env);
      if (v > 0) return v;
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
  }();
  return count;
}
}  // namespace detail

inline void set_thread_count(int n) { detail::thread_count_ref() = n < 1 ? 1 : n; }
inline int thread_count() { return detail::thread_count_ref(); }

// Runs fn(begin, end) over [0, n) split into contiguous ranges. Ranges are
// assigned statically; output written per-index is deterministic.
inline void parallel_for(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& fn) {
  if (n <= 0) return;
  int workers = thread_count();
  if (workers <= 1 || n == 1) {
    fn(0, n);
    return;
  }
  std::int64_t nw = std::min<std::int64_t>(workers, n);
  std::int64_t chunk = (n + nw - 1) / nw;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(nw));
  for (std::int64_t w = 0; w < nw; ++w) {
    std::int64_t b = w * chunk;
    std::int64_t e = std::min(n, b + chunk);
    if (b >= e) break;
    pool.emplace_back([&fn, b, e] { fn(b, e); });
  }
  for (auto& th : pool) th.join();
}

// ---------------------------------------------------------------------------
// Deterministic seed derivation (splitmix64), used to give independent
// streams to sub-tasks without correlated draws.

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Shortest round-trip decimal form, used by every text exporter so that
// written files are byte-stable across runs.
inline std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::string format_index(std::int64_t v) { return std::to_string(v); }

}  // namespace anny
