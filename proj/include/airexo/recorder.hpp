#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "airexo/calibration.hpp"
#include "airexo/control_loop.hpp"
#include "airexo/simulator.hpp"

namespace airexo {

inline constexpr const char* kDemoSchema = "airexo-demo/1";
inline constexpr char kDemoMagic[8] = {'A', 'I', 'R', 'E', 'X', 'O', 'D', '1'};
inline constexpr int kGripperFields = 6;

enum class Domain { kTeleoperated, kInTheWild };
const char* to_string(Domain d);
Domain domain_from_string(std::string_view s);

using ImageHash = std::array<std::uint8_t, 32>;

/// One recorded sample. Per-arm blocks are left then right; tcp_pos holds
/// (x, y, z, qx, qy, qz, qw) per arm and tcp_vel (v, w) per arm. `gripper`
/// holds (width, force, status, last_cmd_width, last_cmd_force, last_cmd_t)
/// for each arm that has a gripper.
struct DemoFrame {
  Nanoseconds t = 0;
  std::array<double, 14> joint_pos{};
  std::array<double, 14> joint_vel{};
  std::array<double, 14> tcp_pos{};
  std::array<double, 12> tcp_vel{};
  std::array<double, 12> base_ft{};
  std::array<double, 12> tcp_ft{};
  std::vector<double> gripper;
  std::array<std::int32_t, 16> encoder{};
  std::vector<ImageHash> image_refs;

  bool operator==(const DemoFrame&) const = default;
};

struct Demonstration {
  std::string id;
  Domain domain = Domain::kTeleoperated;
  std::string task_id;
  std::string calibration_ref;
  std::uint64_t seed = 0;
  std::array<bool, 2> grippers{false, false};
  std::vector<std::string> cameras;
  /// World the demo was recorded in, when there was one.
  std::optional<nlohmann::json> world;
  nlohmann::json metadata = nlohmann::json::object();
  std::vector<DemoFrame> frames;

  int gripper_count() const { return static_cast<int>(grippers[0]) + static_cast<int>(grippers[1]); }
  double mean_hz() const;
  double duration_s() const;
  /// Gripper width of an arm in a frame, 0 when the arm has no gripper.
  double gripper_width(const DemoFrame& f, Arm arm) const;
  void validate() const;
  bool operator==(const Demonstration&) const = default;
};

/// Bytes per frame record for the given gripper and camera counts.
std::size_t frame_stride(int grippers, int cameras);

std::string serialize_demo(const Demonstration& demo);
Demonstration parse_demo(std::string_view bytes);
void write_demo(const Demonstration& demo, const std::filesystem::path& path);
Demonstration read_demo(const std::filesystem::path& path);
nlohmann::json demo_info(const Demonstration& demo);

/// Frame fields derived from a simulator snapshot.
DemoFrame frame_from_state(const RobotModel& robot, const std::array<bool, 2>& grippers, const SimState& state,
                           Nanoseconds t, const std::array<std::int32_t, 16>& encoder);

/// Collects one frame per control tick (the state before that tick's command).
class SessionRecorder {
 public:
  SessionRecorder(const RobotModel& robot, const WorldConfig& world, std::uint64_t seed,
                  std::string calibration_ref);

  void on_tick(const TickRecord& tick);
  TickObserver observer() {
    return [this](const TickRecord& r) { on_tick(r); };
  }
  std::size_t frame_count() const { return frames_.size(); }
  /// Throws kInvalidInput when fewer than two frames were recorded.
  Demonstration finish(std::string id, Domain domain = Domain::kTeleoperated) const;

 private:
  RobotModel robot_;
  WorldConfig world_;
  std::uint64_t seed_;
  std::string calibration_ref_;
  std::array<std::int32_t, 16> last_ticks_{};
  std::vector<DemoFrame> frames_;
};

/// Exoskeleton-only recording: one frame per encoder frame, joints mapped
/// through the calibration and TCP fields from robot forward kinematics.
Demonstration record_in_the_wild(const std::vector<EncoderFrame>& stream, const CalibrationRecord& cal,
                                 const std::string& calibration_ref, const RobotModel& robot, TaskKind task,
                                 const std::array<bool, 2>& grippers, std::string id,
                                 const TaskConstraint* constraint = nullptr);

struct ReplayResult {
  LoopStats stats;
  std::vector<SimEvent> warnings;
};

/// Resets the backend to the demo's seed and commands each next recorded
/// joint position at the recorded timing divided by rate_scale, holding on
/// the final tick.
ReplayResult replay(const Demonstration& demo, RobotBackend& backend, double rate_scale,
                    ClockMode clock = ClockMode::kVirtual, const TickObserver& observer = {});

/// Uniform grid at target_hz over [t_first, t_last].
Demonstration resample(const Demonstration& demo, double target_hz);

}  // namespace airexo
