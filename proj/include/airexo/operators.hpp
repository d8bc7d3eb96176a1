#pragma once

// Scripted stand-ins for a human operator. A script is a pair of joint-space
// tracks (one per arm) that the teleoperation source samples, encodes through
// the calibration and streams like a real exoskeleton would.

#include <array>
#include <cstdint>
#include <vector>

#include "airexo/calibration.hpp"
#include "airexo/simulator.hpp"

namespace airexo {

/// Piecewise-linear knots for one arm; holds the last knot afterwards.
struct ArmTrack {
  std::vector<double> times;
  std::vector<std::vector<double>> joints;
  std::vector<double> widths;

  void add(double t, std::vector<double> q, double width);
  double end_time() const { return times.empty() ? 0.0 : times.back(); }
};

struct OperatorSample {
  std::array<std::vector<double>, 2> joints;
  std::array<double, 2> widths{0.0, 0.0};
};

class ScriptedOperator {
 public:
  ScriptedOperator() = default;
  explicit ScriptedOperator(std::array<ArmTrack, 2> tracks);

  OperatorSample sample(double t) const;
  double duration() const;
  const ArmTrack& track(Arm a) const { return tracks_[index_of(a)]; }

 private:
  std::array<ArmTrack, 2> tracks_;
};

/// Gather Balls sweep for each active arm: swing outward while raised, lower
/// the forearm to table height, sweep the cluster inward onto the triangle,
/// lift and come back to center. The right arm mirrors the left.
struct GatherScript {
  std::array<bool, 2> active{true, true};
  double outer_yaw_deg = 75.0;
  double inner_yaw_deg = -20.0;
  double lower_pitch_rad = 0.957;
  double swing_speed = 0.6;  // rad/s
  double sweep_speed = 0.3;  // rad/s
  double lower_time_s = 1.6;

  /// Seeded variation of the script, as different demonstrators would produce.
  static GatherScript varied(std::uint64_t seed);
};

ScriptedOperator gather_operator(const GatherScript& script, const WorldConfig& world);

/// Curtained Shelf: the right arm reaches through the curtain and holds it
/// aside, the left arm approaches the object, grasps it, carries it out and
/// drops it into the bin.
struct ShelfScript {
  double tcp_speed = 0.15;  // m/s along straight TCP paths
  double grip_width = 0.04;
  double grip_time_s = 0.8;
};

ScriptedOperator shelf_operator(const ShelfScript& script, const WorldConfig& world, const RobotModel& robot,
                                const Eigen::Vector3d& object_position);

/// Encoder ticks the exoskeleton would read for a joint-space sample.
EncoderFrame encode_sample(const CalibrationRecord& cal, const OperatorSample& s, Nanoseconds t);

struct StreamOptions {
  double rate_hz = 30.0;
  double duration_s = 60.0;
  /// Uniform timestamp jitter, +- this many nanoseconds, seeded.
  Nanoseconds jitter_ns = 0;
  std::uint64_t seed = 0;
};

/// Encoder frames sampled from the script at the given rate.
std::vector<EncoderFrame> encoder_stream(const ScriptedOperator& op, const CalibrationRecord& cal,
                                         const StreamOptions& options);

}  // namespace airexo
