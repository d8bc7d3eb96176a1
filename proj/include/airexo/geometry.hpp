#pragma once

#include <Eigen/Core>

namespace airexo {

struct Capsule {
  Eigen::Vector3d a = Eigen::Vector3d::Zero();
  Eigen::Vector3d b = Eigen::Vector3d::Zero();
  double radius = 0.0;
};

struct Aabb {
  Eigen::Vector3d min = Eigen::Vector3d::Zero();
  Eigen::Vector3d max = Eigen::Vector3d::Zero();

  bool contains(const Eigen::Vector3d& p) const {
    return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
  }
};

struct SegmentClosest {
  double distance = 0.0;
  double s = 0.0;  // parameter on the first segment
  double t = 0.0;  // parameter on the second segment
};

/// Exact closest points between segments [p1,q1] and [p2,q2]; either may be a point.
SegmentClosest segment_segment_closest(const Eigen::Vector3d& p1, const Eigen::Vector3d& q1,
                                       const Eigen::Vector3d& p2, const Eigen::Vector3d& q2);

double point_segment_distance(const Eigen::Vector3d& p, const Eigen::Vector3d& a, const Eigen::Vector3d& b);

/// Signed surface distance; negative means penetration.
double capsule_distance(const Capsule& c1, const Capsule& c2);

double point_box_distance(const Eigen::Vector3d& p, const Aabb& box);

/// Distance from a segment to a box (0 when they touch or overlap). The
/// point-to-box distance is convex along the segment, so a golden-section
/// search converges to the minimum.
double segment_box_distance(const Eigen::Vector3d& a, const Eigen::Vector3d& b, const Aabb& box);

double capsule_box_distance(const Capsule& c, const Aabb& box);

/// Signed distance from the capsule surface to the plane z = height (negative below).
double capsule_plane_distance(const Capsule& c, double height);

}  // namespace airexo
