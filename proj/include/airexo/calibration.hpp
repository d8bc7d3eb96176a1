#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "airexo/core.hpp"

namespace airexo {

inline constexpr const char* kCalibrationSchema = "airexo-cal/1";

/// Calibration of one revolute joint: robot angle q_c and encoder reading p_c
/// captured at the shared calibration pose, a dimensionless direction/scale
/// coefficient k and the robot's kinematic limits.
struct JointCalibration {
  double q_c = 0.0;
  std::int32_t p_c = 0;
  double k = 1.0;
  double q_min = -std::numbers::pi;
  double q_max = std::numbers::pi;

  void validate() const;
  bool operator==(const JointCalibration&) const = default;
};

struct GripperCalibration {
  std::int32_t p_open = 0;
  std::int32_t p_closed = 0;
  double width_open = 0.085;
  double width_closed = 0.0;

  void validate() const;
  bool operator==(const GripperCalibration&) const = default;
};

struct ArmCalibration {
  std::vector<JointCalibration> joints;
  GripperCalibration gripper;
  bool operator==(const ArmCalibration&) const = default;
};

struct CalibrationRecord {
  Nanoseconds created_at = 0;
  std::string pose_label;
  double resolution_rad = kDefaultEncoderResolutionRad;
  std::array<ArmCalibration, 2> arms;

  const ArmCalibration& arm(Arm a) const { return arms[index_of(a)]; }
  void validate() const;
  bool operator==(const CalibrationRecord&) const = default;
};

/// Task-specific replacement for the kinematic range of one joint, optionally
/// with its own scale coefficient.
struct JointConstraint {
  double q_min = 0.0;
  double q_max = 0.0;
  std::optional<double> k;
};

struct TaskConstraint {
  std::string task_id;
  std::array<std::vector<JointConstraint>, 2> arms;

  const std::vector<JointConstraint>& arm(Arm a) const { return arms[index_of(a)]; }
  /// Task ranges must nest inside the kinematic ranges of the descriptors.
  void validate(const ArmDescriptor& left, const ArmDescriptor& right) const;
};

/// Per-joint inputs to capture_calibration that cannot be observed from a
/// single pose: the k sign table (depends on encoder mounting) and the gripper
/// handle span.
struct CaptureOptions {
  std::array<std::vector<double>, 2> k_signs;
  std::array<std::int32_t, 2> gripper_open_span_ticks{375, 375};
  double resolution_rad = kDefaultEncoderResolutionRad;

  static CaptureOptions defaults();
};

/// Records (q_c, p_c) for every joint at the matched pose. The gripper handle
/// is assumed closed at the calibration pose.
CalibrationRecord capture_calibration(const std::array<JointVector, 2>& robot_joints,
                                      const std::array<ArmDescriptor, 2>& arms,
                                      const EncoderFrame& encoder_frame, std::string pose_label,
                                      const CaptureOptions& options, Nanoseconds created_at);

/// Holds the active calibration. Recapture replaces it and guarantees a
/// strictly later created_at even if the clock does not advance.
class CalibrationStore {
 public:
  using Clock = std::function<Nanoseconds()>;
  explicit CalibrationStore(Clock clock);

  const CalibrationRecord& capture(const std::array<JointVector, 2>& robot_joints,
                                   const std::array<ArmDescriptor, 2>& arms,
                                   const EncoderFrame& encoder_frame, std::string pose_label,
                                   const CaptureOptions& options);
  const std::optional<CalibrationRecord>& current() const { return current_; }

 private:
  Clock clock_;
  std::optional<CalibrationRecord> current_;
};

/// q = clamp(q_c + k * (p - p_c) * res, lo, hi) with (lo, hi) the task range
/// when a constraint is given, otherwise the kinematic range.
double map_encoder_to_joint(const JointCalibration& cal, std::int64_t ticks, double resolution_rad,
                            const JointConstraint* constraint = nullptr);

/// The unclamped affine part of map_encoder_to_joint.
double encoder_to_joint_unclamped(const JointCalibration& cal, std::int64_t ticks,
                                  double resolution_rad, const JointConstraint* constraint = nullptr);

/// Inverse of the affine part, rounded to the nearest tick.
std::int64_t joint_to_encoder(const JointCalibration& cal, double q, double resolution_rad);

/// Linear map from the encoder handle range onto [width_closed, width_open], clamped.
double map_gripper(const GripperCalibration& cal, std::int64_t ticks);
std::int64_t gripper_to_encoder(const GripperCalibration& cal, double width);

struct MappedFrame {
  Nanoseconds t = 0;
  std::array<JointVector, 2> joints;
  std::array<double, 2> gripper_widths{0.0, 0.0};
};

MappedFrame map_frame(const CalibrationRecord& cal, const EncoderFrame& frame,
                      const TaskConstraint* constraint = nullptr);

struct TickRange {
  std::int64_t min = 0;
  std::int64_t max = 0;
};

/// Fraction of each robot range reachable from the given encoder ranges
/// (joints first, gripper last).
std::vector<double> coverage_report(const CalibrationRecord& cal, std::span<const TickRange> ranges,
                                    const ArmDescriptor& arm);

nlohmann::json to_json(const CalibrationRecord& cal);
CalibrationRecord calibration_from_json(const nlohmann::json& j);
void save_calibration(const CalibrationRecord& cal, const std::filesystem::path& path);
CalibrationRecord load_calibration(const std::filesystem::path& path);

TaskConstraint task_constraint_from_json(const nlohmann::json& j);
/// Loads a constraints file ({"constraints": [...]}) and picks the given id.
TaskConstraint load_task_constraint(const std::filesystem::path& path, const std::string& id);

/// Calibration of the simulated rig at the fully extended pose (all joints 0).
CalibrationRecord default_calibration();

}  // namespace airexo
