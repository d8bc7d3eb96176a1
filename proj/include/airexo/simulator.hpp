#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "airexo/core.hpp"
#include "airexo/geometry.hpp"
#include "airexo/kernels.hpp"
#include "airexo/kinematics.hpp"

namespace airexo {

using kernels::Bounds2;
using kernels::Point2;

/// Arms, chains and actuation limits of the simulated dual-arm robot.
struct RobotModel {
  std::array<ArmDescriptor, 2> arms;
  std::array<KinematicChain, 2> chains;
  double velocity_cap_rad_s = 1.0;

  const ArmDescriptor& arm(Arm a) const { return arms[index_of(a)]; }
  const KinematicChain& chain(Arm a) const { return chains[index_of(a)]; }
  void validate() const;
  static RobotModel defaults();
};

nlohmann::json to_json(const RobotModel& robot);
RobotModel robot_from_json(const nlohmann::json& j);

enum class TaskKind { kGatherBalls, kCurtainedShelf };

const char* task_id(TaskKind task);
/// Accepts "gather_balls"/"gather" and "curtained_shelf"/"shelf".
TaskKind task_from_string(std::string_view s);

inline constexpr int kBallsPerCluster = 40;

struct GatherBallsConfig {
  Bounds2 table{0.0, 0.9, -0.75, 0.75};
  std::array<Point2, 3> triangle{{{0.10, 0.34}, {0.10, -0.34}, {0.70, 0.0}}};
  struct Cluster {
    Point2 center;
    double radius = 0.08;
  };
  /// Spawn discs, left cluster first.
  std::array<Cluster, 2> clusters{{{{0.33, 0.55}, 0.08}, {{0.33, -0.55}, 0.08}}};
  double ball_radius = 0.0125;
  /// Links whose axis is below this height sweep balls.
  double contact_height = 0.065;
};

struct CurtainedShelfConfig {
  double curtain_x = 0.55;
  double curtain_y_min = -0.5, curtain_y_max = 0.5;
  double curtain_z_min = 0.25, curtain_z_max = 0.45;
  /// Curtain displacement (m) above which it counts as pushed aside.
  double push_threshold = 0.12;
  std::vector<Aabb> shelf_boxes;
  double shelf_support_z = 0.25;
  Aabb bin{{0.05, 0.55, 0.0}, {0.45, 0.95, 0.25}};
  double bin_floor_z = 0.0;
  Eigen::Vector3d object_nominal{0.70, 0.22, 0.30};
  double object_jitter = 0.02;
  double object_width = 0.07;
  double object_half_height = 0.05;
  double approach_radius = 0.06;
  double grasp_radius = 0.02;

  static CurtainedShelfConfig defaults();
};

struct TaskProtocol {
  double duration_s = 60.0;
  double control_rate_hz = 5.0;
  /// Step budget on top of rate x duration, when the task specifies one.
  std::optional<int> max_steps;

  int step_budget() const;
};

struct WorldConfig {
  TaskKind task = TaskKind::kGatherBalls;
  std::uint64_t seed = 0;
  double table_height = 0.0;
  std::array<bool, 2> grippers{false, false};
  std::array<std::vector<double>, 2> reset_pose;
  TaskProtocol protocol;
  GatherBallsConfig gather;
  CurtainedShelfConfig shelf;
  /// Quasi-static substep size for contact physics (rad of max joint travel).
  double substep_rad = 0.01;

  static WorldConfig gather_balls();
  static WorldConfig curtained_shelf();
};

nlohmann::json to_json(const WorldConfig& world);
WorldConfig world_from_json(const nlohmann::json& j);
WorldConfig load_world(const std::filesystem::path& path);

struct GatherBallsWorld {
  std::vector<Point2> balls;
  /// Cluster each ball was spawned in.
  std::vector<Arm> cluster;
  std::array<Point2, 3> triangle;
  Bounds2 table;
  bool operator==(const GatherBallsWorld&) const = default;
};

enum class Stage { kReachIn = 0, kPushAside, kApproach, kGrasp, kThrow };
inline constexpr int kStageCount = 5;
using StageFlags = std::array<bool, kStageCount>;
const char* stage_name(Stage s);

struct CurtainedShelfWorld {
  double curtain_displacement = 0.0;
  Eigen::Vector3d object_position = Eigen::Vector3d::Zero();
  bool object_attached = false;
  Aabb bin_region;
  StageFlags stage_flags{};
  std::array<bool, kStageCount> violation_logged{};

  bool operator==(const CurtainedShelfWorld& o) const {
    return curtain_displacement == o.curtain_displacement && object_position == o.object_position &&
           object_attached == o.object_attached && bin_region.min == o.bin_region.min &&
           bin_region.max == o.bin_region.max && stage_flags == o.stage_flags &&
           violation_logged == o.violation_logged;
  }
};

using World = std::variant<GatherBallsWorld, CurtainedShelfWorld>;

struct CollisionEvent {
  Nanoseconds t = 0;
  std::string pair;
  bool operator==(const CollisionEvent&) const = default;
};

struct SimEvent {
  Nanoseconds t = 0;
  std::string kind;
  std::string detail;
  bool operator==(const SimEvent&) const = default;
};

struct ArmState {
  std::vector<double> q;
  std::vector<double> q_dot;
  double gripper_width = 0.0;
  double gripper_cmd_width = 0.0;
  Nanoseconds gripper_cmd_t = 0;
  bool operator==(const ArmState&) const = default;
};

struct SimState {
  std::array<ArmState, 2> arms;
  World world;
  std::vector<CollisionEvent> collisions;
  std::vector<SimEvent> events;
  Nanoseconds sim_time = 0;

  const ArmState& arm(Arm a) const { return arms[index_of(a)]; }
  TaskKind task() const;
  bool operator==(const SimState&) const = default;
};

/// Joint targets for both arms plus gripper widths (ignored for arms without a gripper).
struct DualArmCommand {
  std::array<std::vector<double>, 2> joints;
  std::array<double, 2> gripper_widths{0.0, 0.0};
};

DualArmCommand hold_command(const SimState& state);

/// Identifies one link capsule: arm and link index.
struct LinkId {
  Arm arm = Arm::kLeft;
  int link = 0;
};

/// Pairs of links that are never checked: same link, adjacent links of one
/// arm, and (unless enabled) any other same-arm pair.
struct CollisionMask {
  bool self_collision = false;
  bool excluded(const LinkId& a, const LinkId& b) const;
};

std::vector<Capsule> arm_capsules(const KinematicChain& chain, const FkResult& fk);

class Simulator {
 public:
  Simulator(RobotModel robot, WorldConfig world, kernels::Exec exec = kernels::Exec::kOpenMP);

  SimState reset() const { return reset(world_.seed); }
  SimState reset(std::uint64_t seed) const;

  /// Advances by dt seconds. Joints move toward the command by at most
  /// velocity_cap * dt each; contact physics runs on interpolated substeps
  /// that depend only on the start and end configurations.
  SimState step(const SimState& state, const DualArmCommand& command, double dt) const;

  /// Latched Curtained Shelf stage flags for the state; throws kState for
  /// other worlds. Violations (a stage condition met before its predecessor)
  /// are appended to `events` when provided.
  StageFlags detect_stage(const SimState& state, std::vector<SimEvent>* events = nullptr) const;

  std::array<FkResult, 2> forward(const SimState& state) const;

  const RobotModel& robot() const { return robot_; }
  const WorldConfig& world() const { return world_; }
  CollisionMask& mask() { return mask_; }

 private:
  void apply_gather_contacts(GatherBallsWorld& world, const std::array<std::vector<Capsule>, 2>& capsules) const;
  void apply_shelf_contacts(CurtainedShelfWorld& world, const std::array<FkResult, 2>& fk) const;
  void collect_collisions(const std::array<std::vector<Capsule>, 2>& capsules, std::vector<std::string>& out) const;
  StageFlags latch_stages(CurtainedShelfWorld& world, const std::array<FkResult, 2>& fk,
                          const std::array<double, 2>& gripper_widths, Nanoseconds t,
                          std::vector<SimEvent>* events) const;

  RobotModel robot_;
  WorldConfig world_;
  kernels::Exec exec_;
  CollisionMask mask_;
};

/// Joint vector that places the TCP at (x, y) at shoulder height using only
/// the two vertical-axis joints available when the upper arm is rolled by
/// 90 degrees. The elbow bends away from the robot's midline. Throws
/// kInvalidRange when the target is out of reach.
std::vector<double> planar_reach_pose(const KinematicChain& chain, double x, double y);

/// Ball-in-triangle credit: 1 inside, 0.5 within `tol` of an edge, 0 outside.
double triangle_credit(const std::array<Point2, 3>& tri, const Point2& p, double tol = 1e-9);

}  // namespace airexo
