#include "airexo/operators.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace airexo {

namespace {

double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }
double spread(std::mt19937_64& rng, double half) { return half * (2.0 * unit(rng) - 1.0); }

double travel(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Appends knots every `step` seconds along a straight TCP segment at fixed height.
void line_to(ArmTrack& tr, const KinematicChain& chain, Eigen::Vector2d from, Eigen::Vector2d to, double speed,
             double width) {
  const double len = (to - from).norm();
  if (len == 0.0) return;
  const double dur = len / speed;
  const int n = std::max(1, static_cast<int>(std::ceil(dur / 0.1)));
  const double t0 = tr.end_time();
  for (int i = 1; i <= n; ++i) {
    const double a = static_cast<double>(i) / n;
    const Eigen::Vector2d p = from + a * (to - from);
    tr.add(t0 + a * dur, planar_reach_pose(chain, p.x(), p.y()), width);
  }
}

}  // namespace

void ArmTrack::add(double t, std::vector<double> q, double width) {
  if (!times.empty() && !(t > times.back())) throw Error(ErrorKind::kInvalidInput, "track knots must increase");
  times.push_back(t);
  joints.push_back(std::move(q));
  widths.push_back(width);
}

ScriptedOperator::ScriptedOperator(std::array<ArmTrack, 2> tracks) : tracks_(std::move(tracks)) {
  for (const auto& t : tracks_) {
    if (t.times.empty()) throw Error(ErrorKind::kInvalidInput, "every arm track needs at least one knot");
  }
}

OperatorSample ScriptedOperator::sample(double t) const {
  OperatorSample s;
  for (Arm a : kArms) {
    const auto& tr = tracks_[index_of(a)];
    const auto it = std::upper_bound(tr.times.begin(), tr.times.end(), t);
    if (it == tr.times.begin()) {
      s.joints[index_of(a)] = tr.joints.front();
      s.widths[index_of(a)] = tr.widths.front();
      continue;
    }
    const std::size_t hi = static_cast<std::size_t>(it - tr.times.begin());
    if (hi == tr.times.size()) {
      s.joints[index_of(a)] = tr.joints.back();
      s.widths[index_of(a)] = tr.widths.back();
      continue;
    }
    const std::size_t lo = hi - 1;
    const double u = (t - tr.times[lo]) / (tr.times[hi] - tr.times[lo]);
    auto& q = s.joints[index_of(a)];
    q.resize(tr.joints[lo].size());
    for (std::size_t j = 0; j < q.size(); ++j) q[j] = tr.joints[lo][j] + u * (tr.joints[hi][j] - tr.joints[lo][j]);
    s.widths[index_of(a)] = tr.widths[lo] + u * (tr.widths[hi] - tr.widths[lo]);
  }
  return s;
}

double ScriptedOperator::duration() const {
  return std::max(tracks_[0].end_time(), tracks_[1].end_time());
}

GatherScript GatherScript::varied(std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  GatherScript s;
  s.outer_yaw_deg += spread(rng, 4.0);
  s.inner_yaw_deg += spread(rng, 2.0);
  s.swing_speed *= 1.0 + spread(rng, 0.1);
  s.sweep_speed *= 1.0 + spread(rng, 0.15);
  s.lower_time_s *= 1.0 + spread(rng, 0.1);
  return s;
}

ScriptedOperator gather_operator(const GatherScript& sc, const WorldConfig& world) {
  std::array<ArmTrack, 2> tracks;
  for (Arm a : kArms) {
    auto& tr = tracks[index_of(a)];
    const auto& home = world.reset_pose[index_of(a)];
    tr.add(0.0, home, 0.0);
    if (!sc.active[index_of(a)]) continue;
    const double side = a == Arm::kLeft ? 1.0 : -1.0;
    auto pose = [&](double yaw_deg, double pitch) {
      std::vector<double> q = home;
      q[0] = side * yaw_deg * kDegToRad;
      q[1] = pitch;
      q[3] = -pitch;
      return q;
    };
    std::vector<double> prev = home;
    auto go = [&](std::vector<double> q, double dur) {
      tr.add(tr.end_time() + dur, q, 0.0);
      prev = std::move(q);
    };
    auto at_speed = [&](std::vector<double> q, double speed) { go(q, std::max(travel(prev, q) / speed, 0.2)); };
    at_speed(pose(sc.outer_yaw_deg, 0.0), sc.swing_speed);
    go(pose(sc.outer_yaw_deg, sc.lower_pitch_rad), sc.lower_time_s);
    at_speed(pose(sc.inner_yaw_deg, sc.lower_pitch_rad), sc.sweep_speed);
    go(pose(sc.inner_yaw_deg, 0.5), 1.0);
    at_speed(pose(0.0, 0.5), sc.swing_speed);
  }
  return ScriptedOperator(std::move(tracks));
}

ScriptedOperator shelf_operator(const ShelfScript& sc, const WorldConfig& world, const RobotModel& robot,
                                const Eigen::Vector3d& object) {
  const auto& shelf = world.shelf;
  const KinematicChain& lc = robot.chain(Arm::kLeft);
  const KinematicChain& rc = robot.chain(Arm::kRight);
  const double open = robot.arm(Arm::kLeft).gripper_width_max;
  std::array<ArmTrack, 2> tracks;
  auto& left = tracks[index_of(Arm::kLeft)];
  auto& right = tracks[index_of(Arm::kRight)];

  const Eigen::Vector2d r0(0.35, -0.25), r1(shelf.curtain_x + 0.17, -0.25);
  right.add(0.0, world.reset_pose[index_of(Arm::kRight)], 0.0);
  line_to(right, rc, r0, r1, sc.tcp_speed, 0.0);

  const Eigen::Vector2d l0(0.35, 0.25), obj(object.x(), object.y());
  const Eigen::Vector2d l1(0.45, object.y()), l3(0.40, object.y());
  const Eigen::Vector2d bin((shelf.bin.min.x() + shelf.bin.max.x()) / 2.0,
                            (shelf.bin.min.y() + shelf.bin.max.y()) / 2.0);
  left.add(0.0, world.reset_pose[index_of(Arm::kLeft)], open);
  left.add(right.end_time() + 0.2, world.reset_pose[index_of(Arm::kLeft)], open);
  line_to(left, lc, l0, l1, sc.tcp_speed, open);
  line_to(left, lc, l1, obj, sc.tcp_speed, open);
  const std::vector<double> at_obj = left.joints.back();
  left.add(left.end_time() + sc.grip_time_s, at_obj, sc.grip_width);
  line_to(left, lc, obj, l3, sc.tcp_speed, sc.grip_width);
  line_to(left, lc, l3, bin, sc.tcp_speed, sc.grip_width);
  const std::vector<double> at_bin = left.joints.back();
  left.add(left.end_time() + sc.grip_time_s, at_bin, open);
  return ScriptedOperator(std::move(tracks));
}

EncoderFrame encode_sample(const CalibrationRecord& cal, const OperatorSample& s, Nanoseconds t) {
  EncoderFrame f;
  f.resolution_rad = cal.resolution_rad;
  f.timestamp = t;
  f.ticks.reserve(kEncoderChannels);
  for (Arm a : kArms) {
    const auto& ac = cal.arm(a);
    const auto& q = s.joints[index_of(a)];
    if (q.size() != ac.joints.size()) throw Error(ErrorKind::kSchema, "sample and calibration joint counts differ");
    for (std::size_t j = 0; j < q.size(); ++j) {
      f.ticks.push_back(static_cast<std::int32_t>(joint_to_encoder(ac.joints[j], q[j], cal.resolution_rad)));
    }
    f.ticks.push_back(static_cast<std::int32_t>(gripper_to_encoder(ac.gripper, s.widths[index_of(a)])));
  }
  return f;
}

std::vector<EncoderFrame> encoder_stream(const ScriptedOperator& op, const CalibrationRecord& cal,
                                         const StreamOptions& o) {
  if (!(o.rate_hz > 0.0) || !(o.duration_s >= 0.0)) throw Error(ErrorKind::kInvalidInput, "bad stream options");
  std::mt19937_64 rng(o.seed);
  const int n = static_cast<int>(std::floor(o.duration_s * o.rate_hz + 1e-9)) + 1;
  std::vector<EncoderFrame> out;
  out.reserve(n);
  Nanoseconds last = -1;
  for (int i = 0; i < n; ++i) {
    Nanoseconds t = static_cast<Nanoseconds>(std::llround(i * 1e9 / o.rate_hz));
    if (o.jitter_ns > 0 && i > 0) {
      t += static_cast<Nanoseconds>(std::llround(spread(rng, static_cast<double>(o.jitter_ns))));
    }
    t = std::max(t, last + 1);
    last = t;
    out.push_back(encode_sample(cal, op.sample(to_seconds(t)), t));
  }
  return out;
}

}  // namespace airexo
