#pragma once

#include <array>
#include <cstdint>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace airexo {

enum class ErrorKind {
  kInvalidRange,
  kInvalidInput,
  kSchema,
  kConfiguration,
  kState,
  kWorldType,
  kBackend,
  kDisconnected,
  kIo,
};

const char* to_string(ErrorKind kind);

/// Every failure in the library is reported through this exception; callers
/// branch on kind() rather than on the message text.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what);
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

enum class Arm : std::uint8_t { kLeft = 0, kRight = 1 };

inline constexpr std::array<Arm, 2> kArms{Arm::kLeft, Arm::kRight};

const char* to_string(Arm arm);
Arm arm_from_string(std::string_view name);
inline constexpr std::size_t index_of(Arm arm) { return static_cast<std::size_t>(arm); }

// Per-arm layout: 7 revolute joints followed by one gripper channel.
inline constexpr int kArmJoints = 7;
inline constexpr int kArmDof = kArmJoints + 1;
inline constexpr int kDualArmJoints = 2 * kArmJoints;
inline constexpr int kEncoderChannels = 2 * kArmDof;

inline constexpr double kDegToRad = std::numbers::pi / 180.0;
inline constexpr double kDefaultEncoderResolutionDeg = 0.08;
inline constexpr double kDefaultEncoderResolutionRad = kDefaultEncoderResolutionDeg * kDegToRad;

// Joint values beyond this magnitude are almost certainly degrees passed as radians.
inline constexpr double kUnitSanityLimitRad = 8.0 * std::numbers::pi;

/// Monotonic time in integer nanoseconds.
using Nanoseconds = std::int64_t;
inline constexpr Nanoseconds kNanosPerSecond = 1'000'000'000;

inline constexpr double to_seconds(Nanoseconds t) { return static_cast<double>(t) * 1e-9; }
Nanoseconds from_seconds(double seconds);

template <class T>
struct Timestamped {
  Nanoseconds t = 0;
  T value{};
};

struct JointLimit {
  double min = 0.0;
  double max = 0.0;
  bool operator==(const JointLimit&) const = default;
};

/// Static description of one arm. dof() counts the gripper; joint_limits
/// covers only the revolute joints and the gripper range is held separately
/// since it is in meters.
struct ArmDescriptor {
  std::string name;
  Arm arm = Arm::kLeft;
  std::vector<JointLimit> joint_limits;
  double gripper_width_max = 0.085;

  int dof() const { return static_cast<int>(joint_limits.size()) + 1; }
  int joint_count() const { return static_cast<int>(joint_limits.size()); }
  void validate() const;
};

/// Joint angles in radians for one arm, always finite and sized to the arm.
class JointVector {
 public:
  JointVector() = default;
  JointVector(Arm arm, std::vector<double> values);

  /// Builds and checks the length against the descriptor.
  static JointVector checked(const ArmDescriptor& arm, std::vector<double> values);

  Arm arm() const { return arm_; }
  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  std::span<const double> values() const { return values_; }

  bool operator==(const JointVector&) const = default;

 private:
  Arm arm_ = Arm::kLeft;
  std::vector<double> values_;
};

/// One sample of all exoskeleton encoders. Channel layout is
/// [left j1..j7, left gripper, right j1..j7, right gripper].
struct EncoderFrame {
  std::vector<std::int32_t> ticks;
  double resolution_rad = kDefaultEncoderResolutionRad;
  Nanoseconds timestamp = 0;

  void validate_dual_arm() const;
  std::span<const std::int32_t> arm_ticks(Arm arm) const;
  bool operator==(const EncoderFrame&) const = default;
};

/// Clamps x into [lo, hi]; throws kInvalidRange when lo > hi.
double clamp(double x, double lo, double hi);

/// round(angle / resolution), halves rounded away from zero. Quotients within
/// a relative 1e-9 of a half are treated as exact halves so that decimal
/// inputs like 0.12deg / 0.08deg land on the tie they denote.
std::int64_t quantize_to_resolution(double angle_rad, double resolution_rad);

/// Default descriptors for the simulated dual-arm robot. Limits are
/// illustrative and not taken from any vendor datasheet.
ArmDescriptor default_arm_descriptor(Arm arm);

}  // namespace airexo
