#include "airexo/core.hpp"

#include <cmath>
#include <limits>

namespace airexo {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidRange: return "invalid-range";
    case ErrorKind::kInvalidInput: return "invalid-input";
    case ErrorKind::kSchema: return "schema";
    case ErrorKind::kConfiguration: return "configuration";
    case ErrorKind::kState: return "invalid-state";
    case ErrorKind::kWorldType: return "world-type";
    case ErrorKind::kBackend: return "backend";
    case ErrorKind::kDisconnected: return "disconnected";
    case ErrorKind::kIo: return "io";
  }
  return "unknown";
}

Error::Error(ErrorKind kind, const std::string& what)
    : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

const char* to_string(Arm arm) { return arm == Arm::kLeft ? "left" : "right"; }

Arm arm_from_string(std::string_view name) {
  if (name == "left") return Arm::kLeft;
  if (name == "right") return Arm::kRight;
  throw Error(ErrorKind::kSchema, "unknown arm '" + std::string(name) + "'");
}

Nanoseconds from_seconds(double seconds) {
  if (!std::isfinite(seconds)) throw Error(ErrorKind::kInvalidInput, "non-finite duration");
  return static_cast<Nanoseconds>(std::llround(seconds * 1e9));
}

void ArmDescriptor::validate() const {
  if (joint_limits.empty()) throw Error(ErrorKind::kSchema, "arm '" + name + "' has no joints");
  for (std::size_t i = 0; i < joint_limits.size(); ++i) {
    const auto& lim = joint_limits[i];
    if (!(lim.min < lim.max)) {
      throw Error(ErrorKind::kInvalidRange,
                  "arm '" + name + "' joint " + std::to_string(i + 1) + " has q_min >= q_max");
    }
  }
  if (!(gripper_width_max > 0.0)) {
    throw Error(ErrorKind::kInvalidRange, "arm '" + name + "' gripper width range is empty");
  }
}

JointVector::JointVector(Arm arm, std::vector<double> values) : arm_(arm), values_(std::move(values)) {
  for (double v : values_) {
    if (!std::isfinite(v)) throw Error(ErrorKind::kInvalidInput, "joint value is not finite");
    if (std::abs(v) > kUnitSanityLimitRad) {
      throw Error(ErrorKind::kInvalidInput,
                  "joint value " + std::to_string(v) + " exceeds 8*pi rad; probable degree/radian mix-up");
    }
  }
}

JointVector JointVector::checked(const ArmDescriptor& arm, std::vector<double> values) {
  if (static_cast<int>(values.size()) != arm.joint_count()) {
    throw Error(ErrorKind::kSchema, "joint vector length " + std::to_string(values.size()) +
                                        " != " + std::to_string(arm.joint_count()) + " for arm '" +
                                        arm.name + "'");
  }
  return JointVector(arm.arm, std::move(values));
}

void EncoderFrame::validate_dual_arm() const {
  if (ticks.size() != static_cast<std::size_t>(kEncoderChannels)) {
    throw Error(ErrorKind::kSchema, "dim mismatch " + std::to_string(ticks.size()) +
                                        " != " + std::to_string(kEncoderChannels));
  }
  if (!(resolution_rad > 0.0) || !std::isfinite(resolution_rad)) {
    throw Error(ErrorKind::kInvalidInput, "encoder resolution must be positive");
  }
}

std::span<const std::int32_t> EncoderFrame::arm_ticks(Arm arm) const {
  validate_dual_arm();
  return std::span<const std::int32_t>(ticks).subspan(index_of(arm) * kArmDof, kArmDof);
}

double clamp(double x, double lo, double hi) {
  if (lo > hi) throw Error(ErrorKind::kInvalidRange, "clamp with lo > hi");
  if (x < lo) return lo;
  if (x > hi) return hi;
  return x;
}

std::int64_t quantize_to_resolution(double angle_rad, double resolution_rad) {
  if (!std::isfinite(angle_rad)) throw Error(ErrorKind::kInvalidInput, "non-finite angle");
  if (!(resolution_rad > 0.0) || !std::isfinite(resolution_rad)) {
    throw Error(ErrorKind::kInvalidInput, "resolution must be positive");
  }
  const double ratio = angle_rad / resolution_rad;
  if (std::abs(ratio) > static_cast<double>(std::numeric_limits<std::int64_t>::max() / 2)) {
    throw Error(ErrorKind::kInvalidInput, "angle out of encoder range");
  }
  const double magnitude = std::abs(ratio);
  const double floor_mag = std::floor(magnitude);
  const double frac = magnitude - floor_mag;
  double rounded;
  if (std::abs(frac - 0.5) <= 1e-9 * std::max(1.0, magnitude)) {
    rounded = floor_mag + 1.0;
  } else {
    rounded = std::round(magnitude);
  }
  return static_cast<std::int64_t>(ratio < 0 ? -rounded : rounded);
}

ArmDescriptor default_arm_descriptor(Arm arm) {
  ArmDescriptor d;
  d.name = std::string(to_string(arm)) + "_arm";
  d.arm = arm;
  const double deg = kDegToRad;
  d.joint_limits = {
      {-160 * deg, 160 * deg}, {-130 * deg, 130 * deg}, {-170 * deg, 170 * deg},
      {-150 * deg, 150 * deg}, {-170 * deg, 170 * deg}, {-120 * deg, 120 * deg},
      {-170 * deg, 170 * deg},
  };
  d.gripper_width_max = 0.085;
  return d;
}

}  // namespace airexo
