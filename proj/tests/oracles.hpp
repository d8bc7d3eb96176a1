#pragma once

// Brute-force reference computations shared by the unit tests and the
// acceptance binary. None of them call into the library code they check.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace oracle {

inline double point_dist(const Eigen::Vector3d& a, const Eigen::Vector3d& b) { return (a - b).norm(); }

/// Surface distance between two capsules by sampling the medial segments on a
/// grid and refining the best cell with a shrinking pattern search. The
/// distance between points of two segments is jointly convex in (s, t), so the
/// refinement lands on the global minimum.
inline double capsule_distance(const Eigen::Vector3d& a1, const Eigen::Vector3d& b1, double r1,
                               const Eigen::Vector3d& a2, const Eigen::Vector3d& b2, double r2) {
  auto f = [&](double s, double t) { return point_dist(a1 + s * (b1 - a1), a2 + t * (b2 - a2)); };
  const int n = 64;
  double bs = 0, bt = 0, best = f(0, 0);
  for (int i = 0; i <= n; ++i) {
    for (int j = 0; j <= n; ++j) {
      const double v = f(double(i) / n, double(j) / n);
      if (v < best) best = v, bs = double(i) / n, bt = double(j) / n;
    }
  }
  double step = 1.0 / n;
  while (step > 1e-13) {
    bool improved = false;
    for (int di = -1; di <= 1; ++di) {
      for (int dj = -1; dj <= 1; ++dj) {
        const double s = std::clamp(bs + di * step, 0.0, 1.0), t = std::clamp(bt + dj * step, 0.0, 1.0);
        const double v = f(s, t);
        if (v < best) best = v, bs = s, bt = t, improved = true;
      }
    }
    if (!improved) step *= 0.5;
  }
  return best - r1 - r2;
}

/// Exhaustive k nearest rows by squared Euclidean distance, ties to the lower index.
inline std::vector<std::size_t> knn(const std::vector<std::vector<double>>& rows, const std::vector<double>& q,
                                    std::size_t k) {
  std::vector<std::pair<double, std::size_t>> d;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    double s = 0;
    for (std::size_t j = 0; j < q.size(); ++j) s += (rows[i][j] - q[j]) * (rows[i][j] - q[j]);
    d.emplace_back(s, i);
  }
  std::sort(d.begin(), d.end());
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < std::min(k, d.size()); ++i) out.push_back(d[i].second);
  return out;
}

/// Inverse-distance weighted chunk over the exhaustive neighbors, weights
/// m / (d + eps) with m = teleop_weight on teleoperated rows.
inline std::vector<double> knn_chunk(const std::vector<std::vector<double>>& rows,
                                     const std::vector<std::vector<double>>& chunks, const std::vector<bool>& teleop,
                                     const std::vector<double>& q, std::size_t k, double teleop_weight,
                                     double eps = 1e-8) {
  const auto ids = knn(rows, q, k);
  std::vector<double> w;
  double total = 0;
  for (std::size_t i : ids) {
    double s = 0;
    for (std::size_t j = 0; j < q.size(); ++j) s += (rows[i][j] - q[j]) * (rows[i][j] - q[j]);
    w.push_back((teleop[i] ? teleop_weight : 1.0) / (std::sqrt(s) + eps));
    total += w.back();
  }
  for (double& v : w) v /= total;
  std::vector<double> out(chunks[0].size(), 0.0);
  for (std::size_t r = 0; r < ids.size(); ++r) {
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += w[r] * chunks[ids[r]][j];
  }
  return out;
}

/// Exponentially weighted mean over (age, value) pairs.
inline double ensemble(const std::vector<std::pair<int, double>>& v, double k) {
  long double num = 0, den = 0;
  for (const auto& [age, a] : v) {
    const long double w = std::exp(-static_cast<long double>(k) * age);
    num += w * a;
    den += w;
  }
  return static_cast<double>(num / den);
}

// Rodrigues rotation written out by hand.
inline Eigen::Matrix3d rodrigues(const Eigen::Vector3d& axis, double angle) {
  const Eigen::Vector3d k = axis.normalized();
  Eigen::Matrix3d kx;
  kx << 0, -k.z(), k.y(), k.z(), 0, -k.x(), -k.y(), k.x(), 0;
  return Eigen::Matrix3d::Identity() + std::sin(angle) * kx + (1 - std::cos(angle)) * kx * kx;
}

/// 4x4 homogeneous product for revolute chains without fixed joint rotations.
inline Eigen::Vector3d chain_tcp(const Eigen::Matrix4d& base, const std::vector<Eigen::Vector3d>& axes,
                                 const std::vector<Eigen::Vector3d>& origins, const Eigen::Vector3d& tcp,
                                 const std::vector<double>& q) {
  Eigen::Matrix4d t = base;
  for (std::size_t i = 0; i < q.size(); ++i) {
    Eigen::Matrix4d step = Eigen::Matrix4d::Identity();
    step.block<3, 3>(0, 0) = rodrigues(axes[i], q[i]);
    step.block<3, 1>(0, 3) = origins[i];
    t = t * step;
  }
  Eigen::Vector4d p;
  p << tcp, 1.0;
  return (t * p).head<3>();
}

}  // namespace oracle
