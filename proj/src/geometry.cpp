#include "airexo/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace airexo {

SegmentClosest segment_segment_closest(const Eigen::Vector3d& p1, const Eigen::Vector3d& q1,
                                       const Eigen::Vector3d& p2, const Eigen::Vector3d& q2) {
  constexpr double kEps = 1e-15;
  const Eigen::Vector3d d1 = q1 - p1;
  const Eigen::Vector3d d2 = q2 - p2;
  const Eigen::Vector3d r = p1 - p2;
  const double a = d1.squaredNorm();
  const double e = d2.squaredNorm();
  const double f = d2.dot(r);
  double s = 0.0, t = 0.0;
  if (a <= kEps && e <= kEps) {
    return {r.norm(), 0.0, 0.0};
  }
  if (a <= kEps) {
    t = std::clamp(f / e, 0.0, 1.0);
  } else {
    const double c = d1.dot(r);
    if (e <= kEps) {
      s = std::clamp(-c / a, 0.0, 1.0);
    } else {
      const double b = d1.dot(d2);
      const double denom = a * e - b * b;
      s = denom > kEps * a * e ? std::clamp((b * f - c * e) / denom, 0.0, 1.0) : 0.0;
      t = (b * s + f) / e;
      if (t < 0.0) {
        t = 0.0;
        s = std::clamp(-c / a, 0.0, 1.0);
      } else if (t > 1.0) {
        t = 1.0;
        s = std::clamp((b - c) / a, 0.0, 1.0);
      }
    }
  }
  const Eigen::Vector3d c1 = p1 + d1 * s;
  const Eigen::Vector3d c2 = p2 + d2 * t;
  return {(c1 - c2).norm(), s, t};
}

double point_segment_distance(const Eigen::Vector3d& p, const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
  const Eigen::Vector3d ab = b - a;
  const double len2 = ab.squaredNorm();
  if (len2 <= 1e-30) return (p - a).norm();
  const double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
  return (p - (a + t * ab)).norm();
}

double capsule_distance(const Capsule& c1, const Capsule& c2) {
  return segment_segment_closest(c1.a, c1.b, c2.a, c2.b).distance - c1.radius - c2.radius;
}

double point_box_distance(const Eigen::Vector3d& p, const Aabb& box) {
  const Eigen::Vector3d d = (box.min - p).cwiseMax(Eigen::Vector3d::Zero()).cwiseMax(p - box.max);
  return d.norm();
}

double segment_box_distance(const Eigen::Vector3d& a, const Eigen::Vector3d& b, const Aabb& box) {
  auto f = [&](double t) { return point_box_distance(a + t * (b - a), box); };
  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  double lo = 0.0, hi = 1.0;
  double x1 = hi - invphi * (hi - lo), x2 = lo + invphi * (hi - lo);
  double f1 = f(x1), f2 = f(x2);
  for (int i = 0; i < 80; ++i) {
    if (f1 <= f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - invphi * (hi - lo);
      f1 = f(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + invphi * (hi - lo);
      f2 = f(x2);
    }
  }
  return std::min({f(0.0), f(1.0), f1, f2});
}

double capsule_box_distance(const Capsule& c, const Aabb& box) {
  return segment_box_distance(c.a, c.b, box) - c.radius;
}

double capsule_plane_distance(const Capsule& c, double height) {
  return std::min(c.a.z(), c.b.z()) - height - c.radius;
}

}  // namespace airexo
