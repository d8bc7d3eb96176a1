#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Geometry>
#include <nlohmann/json.hpp>

#include "airexo/core.hpp"

namespace airexo {

struct Pose {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Eigen::Quaterniond orientation = Eigen::Quaterniond::Identity();

  /// (x, y, z, rx, ry, rz, rw), the layout used by recorded tcp fields.
  std::array<double, 7> to_array() const;
  static Pose from_array(std::span<const double, 7> v);
};

/// URDF-style joint: fixed transform from the previous joint frame, then a
/// revolute rotation about `axis`.
struct JointSpec {
  Eigen::Vector3d origin_xyz = Eigen::Vector3d::Zero();
  Eigen::Vector3d origin_rpy = Eigen::Vector3d::Zero();
  Eigen::Vector3d axis = Eigen::Vector3d::UnitZ();
};

struct KinematicChain {
  std::vector<JointSpec> joints;
  Eigen::Vector3d tcp_offset = Eigen::Vector3d::Zero();
  Eigen::Isometry3d base_pose = Eigen::Isometry3d::Identity();
  /// Uniform scale on link translations; 0.8 models the exoskeleton.
  double scale = 1.0;
  /// Capsule radius per link (link i spans joint i to joint i+1, the last one ends at the TCP).
  std::vector<double> link_radii;
  /// Documented TCP pose at q = 0, when the config provides one.
  std::optional<Pose> home_tcp;

  std::size_t joint_count() const { return joints.size(); }
  void validate() const;
  KinematicChain scaled(double factor) const;
};

struct FkResult {
  /// World frame of each joint after its rotation.
  std::vector<Pose> joint_frames;
  Pose tcp;

  /// Joint origins followed by the TCP position (joint_count + 1 points).
  std::vector<Eigen::Vector3d> link_points() const;
};

FkResult forward_kinematics(const KinematicChain& chain, std::span<const double> q);

/// Finite-difference TCP twist between q and q + q_dot * dt:
/// (vx, vy, vz, wx, wy, wz) in the world frame.
std::array<double, 6> tcp_twist(const KinematicChain& chain, std::span<const double> q,
                                std::span<const double> q_dot, double dt);

nlohmann::json to_json(const KinematicChain& chain);
KinematicChain chain_from_json(const nlohmann::json& j);
KinematicChain load_chain(const std::filesystem::path& path);

/// Illustrative 7-joint chain for the simulated robot. At q = 0 the arm is
/// fully extended along +x at shoulder height.
KinematicChain default_chain(Arm arm);

Eigen::Matrix3d rotation_from_rpy(const Eigen::Vector3d& rpy);

}  // namespace airexo
