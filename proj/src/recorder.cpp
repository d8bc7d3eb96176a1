#include "airexo/recorder.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <thread>

namespace airexo {

namespace {

class Writer {
 public:
  explicit Writer(std::string& out) : out_(out) {}
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void bytes(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }

 private:
  std::string& out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }
  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string_view take(std::size_t n) {
    need(n);
    auto s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw Error(ErrorKind::kSchema, "demonstration file truncated");
  }
  std::string_view in_;
  std::size_t pos_ = 0;
};

template <std::size_t N>
void put(Writer& w, const std::array<double, N>& a) {
  for (double v : a) w.f64(v);
}
template <std::size_t N>
void get(Reader& r, std::array<double, N>& a) {
  for (double& v : a) v = r.f64();
}

double lerp(double a, double b, double u) { return a + u * (b - a); }

std::vector<std::string> gripper_names(const std::array<bool, 2>& g) {
  std::vector<std::string> out;
  for (Arm a : kArms) {
    if (g[index_of(a)]) out.emplace_back(to_string(a));
  }
  return out;
}

}  // namespace

const char* to_string(Domain d) { return d == Domain::kTeleoperated ? "teleoperated" : "in_the_wild"; }

Domain domain_from_string(std::string_view s) {
  if (s == "teleoperated") return Domain::kTeleoperated;
  if (s == "in_the_wild") return Domain::kInTheWild;
  throw Error(ErrorKind::kSchema, "unknown domain '" + std::string(s) + "'");
}

double Demonstration::duration_s() const {
  if (frames.size() < 2) return 0.0;
  return to_seconds(frames.back().t - frames.front().t);
}

double Demonstration::mean_hz() const {
  if (frames.size() < 2) return 0.0;
  return static_cast<double>(frames.size() - 1) / duration_s();
}

double Demonstration::gripper_width(const DemoFrame& f, Arm arm) const {
  if (!grippers[index_of(arm)]) return 0.0;
  const int slot = arm == Arm::kRight && grippers[0] ? 1 : 0;
  return f.gripper[static_cast<std::size_t>(slot * kGripperFields)];
}

void Demonstration::validate() const {
  if (frames.size() < 2) throw Error(ErrorKind::kInvalidInput, "a demonstration needs at least 2 frames");
  if (domain == Domain::kInTheWild && calibration_ref.empty()) {
    throw Error(ErrorKind::kConfiguration, "in-the-wild demonstration without calibration_ref");
  }
  const std::size_t g = static_cast<std::size_t>(gripper_count() * kGripperFields);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const auto& f = frames[i];
    if (i > 0 && f.t <= frames[i - 1].t) throw Error(ErrorKind::kSchema, "frame timestamps must increase");
    if (f.gripper.size() != g) throw Error(ErrorKind::kSchema, "gripper block size mismatch");
    if (f.image_refs.size() != cameras.size()) throw Error(ErrorKind::kSchema, "image ref count mismatch");
    for (int a = 0; a < 2; ++a) {
      double n = 0.0;
      for (int c = 3; c < 7; ++c) n += f.tcp_pos[a * 7 + c] * f.tcp_pos[a * 7 + c];
      if (std::abs(std::sqrt(n) - 1.0) > 1e-6) throw Error(ErrorKind::kSchema, "tcp quaternion is not unit norm");
    }
  }
}

std::size_t frame_stride(int grippers, int cameras) {
  return 8 + 8 * (14 + 14 + 14 + 12 + 12 + 12) + 8 * kGripperFields * grippers + 4 * 16 + 32 * cameras;
}

std::string serialize_demo(const Demonstration& demo) {
  demo.validate();
  const int g = demo.gripper_count();
  const int c = static_cast<int>(demo.cameras.size());
  nlohmann::json h;
  h["schema"] = kDemoSchema;
  h["id"] = demo.id;
  h["domain"] = to_string(demo.domain);
  h["task"] = demo.task_id;
  h["calibration_ref"] = demo.calibration_ref;
  h["seed"] = demo.seed;
  h["grippers"] = gripper_names(demo.grippers);
  h["cameras"] = demo.cameras;
  if (demo.world) h["world"] = *demo.world;
  h["metadata"] = demo.metadata;
  h["dims"] = {{"joint_pos", 14}, {"joint_vel", 14}, {"tcp_pos", 14},       {"tcp_vel", 12},
               {"base_ft", 12},   {"tcp_ft", 12},    {"gripper", 6 * g},     {"encoder", 16},
               {"image_hash", 32 * c}};
  h["frame_stride"] = frame_stride(g, c);
  h["frame_count"] = demo.frames.size();
  h["mean_hz"] = demo.mean_hz();
  const std::string header = h.dump();

  std::string out;
  out.reserve(12 + header.size() + demo.frames.size() * frame_stride(g, c));
  Writer w(out);
  w.bytes(kDemoMagic, sizeof kDemoMagic);
  w.u32(static_cast<std::uint32_t>(header.size()));
  w.bytes(header.data(), header.size());
  for (const auto& f : demo.frames) {
    w.i64(f.t);
    put(w, f.joint_pos);
    put(w, f.joint_vel);
    put(w, f.tcp_pos);
    put(w, f.tcp_vel);
    put(w, f.base_ft);
    put(w, f.tcp_ft);
    for (double v : f.gripper) w.f64(v);
    for (auto v : f.encoder) w.i32(v);
    for (const auto& hsh : f.image_refs) w.bytes(hsh.data(), hsh.size());
  }
  return out;
}

Demonstration parse_demo(std::string_view bytes) {
  Reader r(bytes);
  if (r.take(8) != std::string_view(kDemoMagic, 8)) throw Error(ErrorKind::kSchema, "not a demonstration file");
  const std::uint32_t hlen = r.u32();
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(r.take(hlen));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::kSchema, std::string("demonstration header: ") + e.what());
  }
  Demonstration d;
  try {
    if (h.at("schema").get<std::string>() != kDemoSchema) {
      throw Error(ErrorKind::kSchema, "unsupported schema " + h.at("schema").get<std::string>());
    }
    d.id = h.at("id").get<std::string>();
    d.domain = domain_from_string(h.at("domain").get<std::string>());
    d.task_id = h.at("task").get<std::string>();
    d.calibration_ref = h.at("calibration_ref").get<std::string>();
    d.seed = h.at("seed").get<std::uint64_t>();
    for (const auto& g : h.at("grippers")) d.grippers[index_of(arm_from_string(g.get<std::string>()))] = true;
    d.cameras = h.at("cameras").get<std::vector<std::string>>();
    if (h.contains("world")) d.world = h.at("world");
    d.metadata = h.at("metadata");
    const int g = d.gripper_count();
    const int c = static_cast<int>(d.cameras.size());
    if (h.at("frame_stride").get<std::size_t>() != frame_stride(g, c)) {
      throw Error(ErrorKind::kSchema, "frame stride does not match dims");
    }
    const auto n = h.at("frame_count").get<std::size_t>();
    if (r.remaining() != n * frame_stride(g, c)) throw Error(ErrorKind::kSchema, "frame data size mismatch");
    d.frames.resize(n);
    for (auto& f : d.frames) {
      f.t = r.i64();
      get(r, f.joint_pos);
      get(r, f.joint_vel);
      get(r, f.tcp_pos);
      get(r, f.tcp_vel);
      get(r, f.base_ft);
      get(r, f.tcp_ft);
      f.gripper.resize(static_cast<std::size_t>(g * kGripperFields));
      for (double& v : f.gripper) v = r.f64();
      for (auto& v : f.encoder) v = r.i32();
      f.image_refs.resize(static_cast<std::size_t>(c));
      for (auto& hsh : f.image_refs) std::memcpy(hsh.data(), r.take(32).data(), 32);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kSchema, std::string("demonstration header: ") + e.what());
  }
  d.validate();
  return d;
}

void write_demo(const Demonstration& demo, const std::filesystem::path& path) {
  const std::string bytes = serialize_demo(demo);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::kIo, "write failed for " + path.string());
}

Demonstration read_demo(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_demo(ss.str());
}

nlohmann::json demo_info(const Demonstration& demo) {
  return {{"id", demo.id},
          {"domain", to_string(demo.domain)},
          {"task", demo.task_id},
          {"frames", demo.frames.size()},
          {"duration_s", demo.duration_s()},
          {"mean_hz", demo.mean_hz()},
          {"grippers", gripper_names(demo.grippers)},
          {"cameras", demo.cameras},
          {"calibration_ref", demo.calibration_ref},
          {"seed", demo.seed},
          {"frame_stride", frame_stride(demo.gripper_count(), static_cast<int>(demo.cameras.size()))},
          {"metadata", demo.metadata}};
}

namespace {

void fill_kinematics(const RobotModel& robot, const std::array<std::vector<double>, 2>& q,
                     const std::array<std::vector<double>, 2>& qd, DemoFrame& f) {
  for (Arm a : kArms) {
    const std::size_t ai = index_of(a);
    for (int j = 0; j < kArmJoints; ++j) {
      f.joint_pos[ai * kArmJoints + j] = q[ai][j];
      f.joint_vel[ai * kArmJoints + j] = qd[ai][j];
    }
    const FkResult fk = forward_kinematics(robot.chain(a), q[ai]);
    const auto pose = fk.tcp.to_array();
    std::copy(pose.begin(), pose.end(), f.tcp_pos.begin() + static_cast<std::ptrdiff_t>(ai * 7));
    const auto tw = tcp_twist(robot.chain(a), q[ai], qd[ai], 1e-3);
    std::copy(tw.begin(), tw.end(), f.tcp_vel.begin() + static_cast<std::ptrdiff_t>(ai * 6));
  }
}

}  // namespace

DemoFrame frame_from_state(const RobotModel& robot, const std::array<bool, 2>& grippers, const SimState& state,
                           Nanoseconds t, const std::array<std::int32_t, 16>& encoder) {
  DemoFrame f;
  f.t = t;
  fill_kinematics(robot, {state.arms[0].q, state.arms[1].q}, {state.arms[0].q_dot, state.arms[1].q_dot}, f);
  for (Arm a : kArms) {
    if (!grippers[index_of(a)]) continue;
    const auto& s = state.arm(a);
    const double status = s.gripper_width == s.gripper_cmd_width ? 0.0 : 1.0;
    f.gripper.insert(f.gripper.end(),
                     {s.gripper_width, 0.0, status, s.gripper_cmd_width, 0.0, to_seconds(s.gripper_cmd_t)});
  }
  f.encoder = encoder;
  return f;
}

SessionRecorder::SessionRecorder(const RobotModel& robot, const WorldConfig& world, std::uint64_t seed,
                                 std::string calibration_ref)
    : robot_(robot), world_(world), seed_(seed), calibration_ref_(std::move(calibration_ref)) {
  world_.seed = seed;
}

void SessionRecorder::on_tick(const TickRecord& tick) {
  if (tick.frame) {
    if (tick.frame->ticks.size() != last_ticks_.size()) {
      throw Error(ErrorKind::kSchema, "dim mismatch " + std::to_string(tick.frame->ticks.size()) + " != 16");
    }
    std::copy(tick.frame->ticks.begin(), tick.frame->ticks.end(), last_ticks_.begin());
  }
  frames_.push_back(frame_from_state(robot_, world_.grippers, *tick.before, tick.t, last_ticks_));
}

Demonstration SessionRecorder::finish(std::string id, Domain domain) const {
  Demonstration d;
  d.id = std::move(id);
  d.domain = domain;
  d.task_id = task_id(world_.task);
  d.calibration_ref = calibration_ref_;
  d.seed = seed_;
  d.grippers = world_.grippers;
  d.world = to_json(world_);
  d.frames = frames_;
  d.validate();
  return d;
}

Demonstration record_in_the_wild(const std::vector<EncoderFrame>& stream, const CalibrationRecord& cal,
                                 const std::string& calibration_ref, const RobotModel& robot, TaskKind task,
                                 const std::array<bool, 2>& grippers, std::string id,
                                 const TaskConstraint* constraint) {
  if (calibration_ref.empty()) throw Error(ErrorKind::kConfiguration, "in-the-wild recording needs a calibration");
  if (stream.size() < 2) throw Error(ErrorKind::kInvalidInput, "a demonstration needs at least 2 frames");
  Demonstration d;
  d.id = std::move(id);
  d.domain = Domain::kInTheWild;
  d.task_id = task_id(task);
  d.calibration_ref = calibration_ref;
  d.grippers = grippers;
  std::array<std::vector<double>, 2> prev_q;
  std::array<double, 2> prev_w{0.0, 0.0};
  Nanoseconds prev_t = 0;
  for (std::size_t i = 0; i < stream.size(); ++i) {
    const EncoderFrame& e = stream[i];
    const MappedFrame m = map_frame(cal, e, constraint);
    std::array<std::vector<double>, 2> q, qd;
    for (Arm a : kArms) {
      const auto v = m.joints[index_of(a)].values();
      q[index_of(a)].assign(v.begin(), v.end());
      qd[index_of(a)].assign(v.size(), 0.0);
      if (i > 0) {
        const double dt = to_seconds(e.timestamp - prev_t);
        for (std::size_t j = 0; j < v.size(); ++j) qd[index_of(a)][j] = (v[j] - prev_q[index_of(a)][j]) / dt;
      }
    }
    DemoFrame f;
    f.t = e.timestamp;
    fill_kinematics(robot, q, qd, f);
    for (Arm a : kArms) {
      if (!grippers[index_of(a)]) continue;
      const double w = m.gripper_widths[index_of(a)];
      const double status = i > 0 && w != prev_w[index_of(a)] ? 1.0 : 0.0;
      f.gripper.insert(f.gripper.end(), {w, 0.0, status, w, 0.0, to_seconds(e.timestamp)});
    }
    std::copy(e.ticks.begin(), e.ticks.end(), f.encoder.begin());
    d.frames.push_back(std::move(f));
    prev_q = q;
    prev_w = m.gripper_widths;
    prev_t = e.timestamp;
  }
  d.validate();
  return d;
}

ReplayResult replay(const Demonstration& demo, RobotBackend& backend, double rate_scale, ClockMode clock,
                    const TickObserver& observer) {
  if (!std::isfinite(rate_scale) || !(rate_scale > 0.0)) {
    throw Error(ErrorKind::kInvalidInput, "rate_scale must be positive");
  }
  demo.validate();
  if (task_from_string(demo.task_id) != backend.task()) {
    throw Error(ErrorKind::kWorldType, std::string("demonstration for ") + demo.task_id + " cannot replay in " +
                                           task_id(backend.task()));
  }
  backend.reset(demo.seed);
  const RobotModel& robot = backend.robot();
  ReplayResult out;
  using Clock = std::chrono::steady_clock;
  const auto start = Clock::now();
  const std::size_t n = demo.frames.size();
  Nanoseconds scaled_t = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const Nanoseconds t = demo.frames[k].t - demo.frames.front().t;
    if (clock == ClockMode::kWallClock) {
      std::this_thread::sleep_until(start + std::chrono::nanoseconds(scaled_t));
      const Nanoseconds actual =
          std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - start).count();
      const double err = static_cast<double>(actual - scaled_t) * 1e-6;
      out.stats.max_period_error_ms = std::max(out.stats.max_period_error_ms, err);
      out.stats.mean_period_error_ms += err / static_cast<double>(n);
    }
    const bool last = k + 1 == n;
    const Nanoseconds step_ns = last ? demo.frames[k].t - demo.frames[k - 1].t : demo.frames[k + 1].t - demo.frames[k].t;
    const double dt = to_seconds(step_ns) / rate_scale;
    scaled_t += static_cast<Nanoseconds>(std::llround(static_cast<double>(step_ns) / rate_scale));
    const SimState before = backend.snapshot();
    DualArmCommand cmd;
    if (last) {
      cmd = hold_command(before);
    } else {
      const DemoFrame& f = demo.frames[k + 1];
      for (Arm a : kArms) {
        const std::size_t ai = index_of(a);
        const auto& d = robot.arm(a);
        cmd.joints[ai].resize(static_cast<std::size_t>(d.joint_count()));
        for (int j = 0; j < d.joint_count(); ++j) {
          const double v = f.joint_pos[ai * kArmJoints + j];
          const double c = clamp(v, d.joint_limits[j].min, d.joint_limits[j].max);
          if (c != v) {
            out.warnings.push_back({f.t, "replay_clamped",
                                    std::string(to_string(a)) + " joint " + std::to_string(j + 1) +
                                        " outside limits"});
          }
          cmd.joints[ai][j] = c;
        }
        cmd.gripper_widths[ai] = demo.gripper_width(f, a);
      }
    }
    if (observer) observer(TickRecord{static_cast<std::int64_t>(k), t, &before, &cmd, nullptr, false, last});
    try {
      backend.command(cmd, dt);
    } catch (const Error& e) {
      out.stats.aborted = true;
      out.stats.abort_reason = e.what();
      break;
    }
    ++out.stats.ticks_executed;
  }
  return out;
}

Demonstration resample(const Demonstration& demo, double target_hz) {
  if (!std::isfinite(target_hz) || !(target_hz > 0.0)) throw Error(ErrorKind::kInvalidInput, "target_hz must be positive");
  demo.validate();
  const Nanoseconds t0 = demo.frames.front().t;
  const Nanoseconds span = demo.frames.back().t - t0;
  const auto n = static_cast<std::size_t>(std::floor(to_seconds(span) * target_hz + 1e-9)) + 1;
  Demonstration out = demo;
  out.frames.clear();
  out.frames.reserve(n);
  out.metadata["resampled_hz"] = target_hz;
  const auto& src = demo.frames;
  std::size_t hi = 1;
  for (std::size_t i = 0; i < n; ++i) {
    const Nanoseconds t = t0 + static_cast<Nanoseconds>(std::llround(static_cast<double>(i) * 1e9 / target_hz));
    while (hi + 1 < src.size() && src[hi].t < t) ++hi;
    const DemoFrame& a = src[hi - 1];
    const DemoFrame& b = src[hi];
    const double u = std::clamp(static_cast<double>(t - a.t) / static_cast<double>(b.t - a.t), 0.0, 1.0);
    const DemoFrame& near = u <= 0.5 ? a : b;
    DemoFrame f;
    f.t = t;
    for (std::size_t j = 0; j < 14; ++j) {
      f.joint_pos[j] = lerp(a.joint_pos[j], b.joint_pos[j], u);
      f.joint_vel[j] = lerp(a.joint_vel[j], b.joint_vel[j], u);
    }
    for (std::size_t arm = 0; arm < 2; ++arm) {
      const std::size_t o = arm * 7;
      for (std::size_t j = 0; j < 3; ++j) f.tcp_pos[o + j] = lerp(a.tcp_pos[o + j], b.tcp_pos[o + j], u);
      double dot = 0.0;
      for (std::size_t j = 3; j < 7; ++j) dot += a.tcp_pos[o + j] * b.tcp_pos[o + j];
      const double sign = dot < 0.0 ? -1.0 : 1.0;
      double norm = 0.0;
      for (std::size_t j = 3; j < 7; ++j) {
        f.tcp_pos[o + j] = lerp(a.tcp_pos[o + j], sign * b.tcp_pos[o + j], u);
        norm += f.tcp_pos[o + j] * f.tcp_pos[o + j];
      }
      norm = std::sqrt(norm);
      for (std::size_t j = 3; j < 7; ++j) f.tcp_pos[o + j] /= norm;
    }
    for (std::size_t j = 0; j < 12; ++j) {
      f.tcp_vel[j] = lerp(a.tcp_vel[j], b.tcp_vel[j], u);
      f.base_ft[j] = lerp(a.base_ft[j], b.base_ft[j], u);
      f.tcp_ft[j] = lerp(a.tcp_ft[j], b.tcp_ft[j], u);
    }
    f.gripper = near.gripper;
    for (std::size_t g = 0; g + kGripperFields <= f.gripper.size(); g += kGripperFields) {
      f.gripper[g] = lerp(a.gripper[g], b.gripper[g], u);
      f.gripper[g + 1] = lerp(a.gripper[g + 1], b.gripper[g + 1], u);
    }
    f.encoder = near.encoder;
    f.image_refs = near.image_refs;
    out.frames.push_back(std::move(f));
  }
  if (out.frames.size() < 2) throw Error(ErrorKind::kInvalidInput, "resampled demonstration has fewer than 2 frames");
  return out;
}

}  // namespace airexo
