#include "airexo/control_loop.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <thread>

namespace airexo {

SimBackend::SimBackend(Simulator sim, std::uint64_t seed)
    : sim_(std::move(sim)), state_(sim_.reset(seed)), seed_(seed) {}

std::uint64_t SimBackend::seed() const {
  std::lock_guard lock(mu_);
  return seed_;
}

SimState SimBackend::snapshot() const {
  std::lock_guard lock(mu_);
  return state_;
}

void SimBackend::command(const DualArmCommand& command, double dt) {
  std::lock_guard lock(mu_);
  try {
    state_ = sim_.step(state_, command, dt);
  } catch (const Error& e) {
    throw Error(ErrorKind::kBackend, std::string("simulator rejected command: ") + e.what());
  }
}

void SimBackend::reset(std::uint64_t seed) {
  std::lock_guard lock(mu_);
  state_ = sim_.reset(seed);
  seed_ = seed;
}

SimulatedEncoderSource::SimulatedEncoderSource(std::vector<EncoderFrame> script, int jitter_ticks,
                                               std::uint64_t seed)
    : script_(std::move(script)) {
  if (jitter_ticks < 0) throw Error(ErrorKind::kInvalidInput, "jitter must be non-negative");
  for (std::size_t i = 1; i < script_.size(); ++i) {
    if (script_[i].timestamp <= script_[i - 1].timestamp) {
      throw Error(ErrorKind::kSchema, "encoder script timestamps must be strictly increasing");
    }
  }
  if (jitter_ticks > 0) {
    std::mt19937_64 rng(seed);
    const auto span = static_cast<std::uint64_t>(2 * jitter_ticks + 1);
    for (auto& f : script_) {
      for (auto& t : f.ticks) t += static_cast<std::int32_t>(rng() % span) - jitter_ticks;
    }
  }
}

std::vector<EncoderFrame> SimulatedEncoderSource::poll(Nanoseconds t) {
  std::vector<EncoderFrame> out;
  while (next_ < script_.size() && script_[next_].timestamp <= t) out.push_back(script_[next_++]);
  return out;
}

void LoopConfig::validate() const {
  if (!std::isfinite(control_rate_hz) || !(control_rate_hz > 0.0)) {
    throw Error(ErrorKind::kConfiguration, "control_rate_hz must be positive");
  }
  if (!(command_timeout_ms > 0.0)) throw Error(ErrorKind::kConfiguration, "command_timeout_ms must be positive");
  if (!(velocity_cap_rad_s > 0.0)) throw Error(ErrorKind::kConfiguration, "velocity_cap_rad_s must be positive");
}

Nanoseconds LoopConfig::period_ns() const {
  validate();
  return static_cast<Nanoseconds>(std::llround(1e9 / control_rate_hz));
}

std::int64_t LoopConfig::ticks_for(double duration_s) const {
  validate();
  if (!(duration_s >= 0.0)) throw Error(ErrorKind::kInvalidInput, "duration must be non-negative");
  return static_cast<std::int64_t>(std::floor(control_rate_hz * duration_s + 1e-9));
}

bool limit_command(const RobotModel& robot, const DualArmCommand& last, double max_step, DualArmCommand& cmd) {
  bool limited = false;
  for (Arm a : kArms) {
    const std::size_t ai = index_of(a);
    const auto& d = robot.arm(a);
    auto& q = cmd.joints[ai];
    if (q.size() != static_cast<std::size_t>(d.joint_count())) {
      throw Error(ErrorKind::kSchema, "command joint count mismatch");
    }
    for (std::size_t j = 0; j < q.size(); ++j) {
      const double raw = q[j];
      double v = clamp(raw, d.joint_limits[j].min, d.joint_limits[j].max);
      const double prev = last.joints[ai][j];
      v = prev + clamp(v - prev, -max_step, max_step);
      if (v != raw) limited = true;
      q[j] = v;
    }
    const double w = clamp(cmd.gripper_widths[ai], 0.0, d.gripper_width_max);
    if (w != cmd.gripper_widths[ai]) limited = true;
    cmd.gripper_widths[ai] = w;
  }
  return limited;
}

std::string make_session_id(const char* prefix) {
  static std::atomic<std::uint64_t> counter{0};
  const auto now = std::chrono::system_clock::now().time_since_epoch();
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now).count();
  return std::string(prefix) + "-" + std::to_string(ms) + "-" + std::to_string(counter++);
}

LoopStats run_loop(const CommandFn& next, RobotBackend& backend, const LoopConfig& cfg, std::int64_t max_ticks,
                   const LoopOptions& opt) {
  cfg.validate();
  using Clock = std::chrono::steady_clock;
  const Nanoseconds period = cfg.period_ns();
  const double dt = to_seconds(period);
  const double max_step = cfg.velocity_cap_rad_s * dt;
  const auto start = Clock::now();
  const bool wall = opt.clock == ClockMode::kWallClock;
  const bool paced = wall || opt.pace_virtual;

  LoopStats stats;
  std::vector<double> period_errors;
  std::optional<DualArmCommand> last;
  for (std::int64_t k = 0; max_ticks < 0 || k < max_ticks; ++k) {
    if (opt.stop && opt.stop->load()) break;
    const Nanoseconds scheduled = k * period;
    Nanoseconds t = scheduled;
    if (paced) {
      std::this_thread::sleep_until(start + std::chrono::nanoseconds(scheduled));
      const Nanoseconds actual =
          std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - start).count();
      period_errors.push_back(static_cast<double>(actual - scheduled) * 1e-6);
      if (wall) t = actual;
    }
    const SimState before = backend.snapshot();
    if (!last) last = hold_command(before);
    const bool final_tick = opt.final_hold && max_ticks >= 0 && k == max_ticks - 1;

    DualArmCommand cmd;
    std::optional<EncoderFrame> frame;
    bool stale = false;
    if (final_tick) {
      cmd = hold_command(before);
    } else {
      CommandDecision d = next(TickInput{k, t, &before});
      if (d.kind == CommandDecision::Kind::kEnd) {
        stats.aborted = true;
        stats.abort_reason = d.reason.empty() ? "source disconnected" : d.reason;
        break;
      }
      if (d.kind == CommandDecision::Kind::kStale) {
        stale = true;
        ++stats.dropped_frames;
        cmd = *last;
      } else {
        cmd = std::move(d.command);
        if (limit_command(backend.robot(), *last, max_step, cmd)) ++stats.clamped_commands;
      }
      frame = std::move(d.frame);
      if (frame) stats.last_latency_ms = static_cast<double>(t - frame->timestamp) * 1e-6;
    }
    if (opt.observer) {
      opt.observer(TickRecord{k, t, &before, &cmd, frame ? &*frame : nullptr, stale, final_tick});
    }
    try {
      backend.command(cmd, dt);
    } catch (const Error& e) {
      stats.aborted = true;
      stats.abort_reason = e.what();
      break;
    }
    last = cmd;
    ++stats.ticks_executed;
  }
  if (!period_errors.empty()) {
    double sum = 0.0;
    for (double e : period_errors) {
      sum += e;
      stats.max_period_error_ms = std::max(stats.max_period_error_ms, e);
    }
    stats.mean_period_error_ms = sum / static_cast<double>(period_errors.size());
    std::sort(period_errors.begin(), period_errors.end());
    const auto idx = static_cast<std::size_t>(std::ceil(0.99 * static_cast<double>(period_errors.size()))) - 1;
    stats.p99_period_error_ms = period_errors[std::min(idx, period_errors.size() - 1)];
  }
  return stats;
}

SessionResult run_teleop_session(EncoderStream& source, const CalibrationRecord& cal, RobotBackend& backend,
                                 const LoopConfig& cfg, double duration_s, const LoopOptions& options,
                                 const TaskConstraint* constraint) {
  cal.validate();
  const Nanoseconds timeout = from_seconds(cfg.command_timeout_ms * 1e-3);
  Mailbox<EncoderFrame> mailbox;
  std::atomic<bool> producer_stop{false};
  std::thread producer;
  const bool wall = options.clock == ClockMode::kWallClock;
  if (wall) {
    producer = std::thread([&] {
      const auto start = std::chrono::steady_clock::now();
      while (!producer_stop.load()) {
        const Nanoseconds now =
            std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - start).count();
        for (auto& f : source.poll(now)) mailbox.put(std::move(f));
        if (source.exhausted()) {
          mailbox.close();
          return;
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(1));
      }
    });
  }
  auto next = [&](const TickInput& in) {
    if (!wall) {
      for (auto& f : source.poll(in.t)) mailbox.put(std::move(f));
      if (source.exhausted()) mailbox.close();
    }
    CommandDecision d;
    const auto f = mailbox.latest();
    if (!f || in.t - f->timestamp > timeout) {
      d.kind = mailbox.closed() ? CommandDecision::Kind::kEnd : CommandDecision::Kind::kStale;
      return d;
    }
    const MappedFrame m = map_frame(cal, *f, constraint);
    d.kind = CommandDecision::Kind::kCommand;
    for (Arm a : kArms) {
      const auto v = m.joints[index_of(a)].values();
      d.command.joints[index_of(a)].assign(v.begin(), v.end());
    }
    d.command.gripper_widths = m.gripper_widths;
    d.frame = *f;
    return d;
  };
  SessionResult r;
  r.session_id = make_session_id("teleop");
  try {
    r.stats = run_loop(next, backend, cfg, cfg.ticks_for(duration_s), options);
  } catch (...) {
    producer_stop = true;
    if (producer.joinable()) producer.join();
    throw;
  }
  producer_stop = true;
  if (producer.joinable()) producer.join();
  return r;
}

}  // namespace airexo
