#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "airexo/calibration.hpp"
#include "airexo/simulator.hpp"

namespace airexo {

/// The robot as seen by a control loop. Implementations must tolerate
/// snapshot() from other threads while a single loop issues commands.
class RobotBackend {
 public:
  virtual ~RobotBackend() = default;
  virtual const RobotModel& robot() const = 0;
  virtual TaskKind task() const = 0;
  virtual std::uint64_t seed() const = 0;
  virtual SimState snapshot() const = 0;
  /// Re-seeds the world and returns the robot to its reset pose.
  virtual void reset(std::uint64_t seed) = 0;
  /// Throws Error(kBackend) when the command is rejected.
  virtual void command(const DualArmCommand& command, double dt) = 0;
};

class SimBackend : public RobotBackend {
 public:
  SimBackend(Simulator sim, std::uint64_t seed);

  const RobotModel& robot() const override { return sim_.robot(); }
  TaskKind task() const override { return sim_.world().task; }
  std::uint64_t seed() const override;
  SimState snapshot() const override;
  void command(const DualArmCommand& command, double dt) override;

  void reset(std::uint64_t seed) override;
  const Simulator& simulator() const { return sim_; }

 private:
  Simulator sim_;
  mutable std::mutex mu_;
  SimState state_;
  std::uint64_t seed_;
};

/// Single-slot latest-value mailbox between one producer and one consumer.
template <class T>
class Mailbox {
 public:
  void put(T value) {
    std::lock_guard lock(mu_);
    value_ = std::move(value);
    ++version_;
  }
  std::optional<T> latest() const {
    std::lock_guard lock(mu_);
    return value_;
  }
  std::uint64_t version() const {
    std::lock_guard lock(mu_);
    return version_;
  }
  void close() {
    std::lock_guard lock(mu_);
    closed_ = true;
  }
  bool closed() const {
    std::lock_guard lock(mu_);
    return closed_;
  }

 private:
  mutable std::mutex mu_;
  std::optional<T> value_;
  std::uint64_t version_ = 0;
  bool closed_ = false;
};

/// Pull-style encoder stream in session time.
class EncoderStream {
 public:
  virtual ~EncoderStream() = default;
  /// Frames stamped at or before t that have not been returned yet, in order.
  virtual std::vector<EncoderFrame> poll(Nanoseconds t) = 0;
  /// True once every frame has been delivered and no more will come.
  virtual bool exhausted() const = 0;
};

/// Replays a fixed script. Optional uniform +-jitter_ticks noise is drawn once
/// from the seed, so two runs with the same seed emit identical frames.
class SimulatedEncoderSource : public EncoderStream {
 public:
  explicit SimulatedEncoderSource(std::vector<EncoderFrame> script, int jitter_ticks = 0, std::uint64_t seed = 0);

  std::vector<EncoderFrame> poll(Nanoseconds t) override;
  bool exhausted() const override { return next_ >= script_.size(); }
  const std::vector<EncoderFrame>& frames() const { return script_; }

 private:
  std::vector<EncoderFrame> script_;
  std::size_t next_ = 0;
};

enum class ClockMode { kVirtual, kWallClock };

struct LoopConfig {
  double control_rate_hz = 5.0;
  double command_timeout_ms = 500.0;
  double velocity_cap_rad_s = 1.0;
  std::optional<std::string> task_constraint_id;

  void validate() const;
  Nanoseconds period_ns() const;
  /// floor(rate x duration) ticks.
  std::int64_t ticks_for(double duration_s) const;
};

struct LoopStats {
  std::int64_t ticks_executed = 0;
  double mean_period_error_ms = 0.0;
  double max_period_error_ms = 0.0;
  double p99_period_error_ms = 0.0;
  std::int64_t dropped_frames = 0;
  std::int64_t clamped_commands = 0;
  double last_latency_ms = 0.0;
  bool aborted = false;
  std::string abort_reason;
};

/// What the loop knows at one tick, handed to observers before the command is sent.
struct TickRecord {
  std::int64_t tick = 0;
  Nanoseconds t = 0;
  const SimState* before = nullptr;
  const DualArmCommand* command = nullptr;
  /// Encoder frame the command was derived from, if any.
  const EncoderFrame* frame = nullptr;
  bool stale = false;
  bool final_hold = false;
};

struct CommandDecision {
  enum class Kind { kCommand, kStale, kEnd };
  Kind kind = Kind::kStale;
  DualArmCommand command;
  std::optional<EncoderFrame> frame;
  std::string reason;
};

struct TickInput {
  std::int64_t tick = 0;
  Nanoseconds t = 0;
  const SimState* state = nullptr;
};

using CommandFn = std::function<CommandDecision(const TickInput&)>;
using TickObserver = std::function<void(const TickRecord&)>;

struct LoopOptions {
  ClockMode clock = ClockMode::kVirtual;
  /// Sleep between virtual ticks so they land at wall-clock tick times.
  bool pace_virtual = false;
  const std::atomic<bool>* stop = nullptr;
  TickObserver observer;
  /// Issue a no-motion hold as the final tick's command.
  bool final_hold = true;
};

/// Fixed-rate loop: asks `next` for a command each tick, holds the last command
/// on stale input, rate-limits relative to the previous command, clamps to the
/// joint limits and sends it. Runs max_ticks ticks (or until stopped when
/// max_ticks < 0); kEnd aborts with partial stats.
LoopStats run_loop(const CommandFn& next, RobotBackend& backend, const LoopConfig& cfg, std::int64_t max_ticks,
                   const LoopOptions& options = {});

struct SessionResult {
  LoopStats stats;
  std::string session_id;
};

SessionResult run_teleop_session(EncoderStream& source, const CalibrationRecord& cal, RobotBackend& backend,
                                 const LoopConfig& cfg, double duration_s, const LoopOptions& options = {},
                                 const TaskConstraint* constraint = nullptr);

/// Clamps to the arm's joint limits and moves at most max_step from `last`.
/// Returns true when anything was limited.
bool limit_command(const RobotModel& robot, const DualArmCommand& last, double max_step, DualArmCommand& cmd);

std::string make_session_id(const char* prefix);

}  // namespace airexo
