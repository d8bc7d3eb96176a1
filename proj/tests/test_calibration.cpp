#include "doctest.h"

#include <filesystem>
#include <numbers>
#include <random>

#include "airexo/calibration.hpp"

using namespace airexo;

namespace {

const double kRes = 0.08 * std::numbers::pi / 180.0;

// Independent evaluation of the joint mapping in long double.
double oracle(double q_c, long long p_c, double k, long long p, double res, double lo, double hi) {
  const long double q = static_cast<long double>(q_c) +
                        static_cast<long double>(k) * static_cast<long double>(p - p_c) * static_cast<long double>(res);
  return static_cast<double>(std::min<long double>(std::max<long double>(q, lo), hi));
}

std::array<JointVector, 2> zeros() {
  return {JointVector(Arm::kLeft, std::vector<double>(7, 0.0)), JointVector(Arm::kRight, std::vector<double>(7, 0.0))};
}

std::array<ArmDescriptor, 2> arms() { return {default_arm_descriptor(Arm::kLeft), default_arm_descriptor(Arm::kRight)}; }

EncoderFrame frame_of(std::int32_t v) {
  EncoderFrame f;
  f.ticks.assign(16, v);
  return f;
}

}  // namespace

TEST_CASE("hand examples of the joint mapping") {
  JointCalibration c{0.0, 1000, 1.0, -std::numbers::pi, std::numbers::pi};
  const double forty_deg = 40.0 * std::numbers::pi / 180.0;
  CHECK(std::abs(map_encoder_to_joint(c, 1500, kRes) - forty_deg) < 1e-12);
  CHECK(std::abs(map_encoder_to_joint(c, 1500, kRes) - 0.6981317) < 1e-7);
  CHECK(map_encoder_to_joint(c, 1000, kRes) == 0.0);
  c.q_max = 0.5;
  CHECK(map_encoder_to_joint(c, 1500, kRes) == 0.5);
  c.q_max = std::numbers::pi;
  c.k = -1.0;
  CHECK(std::abs(map_encoder_to_joint(c, 1500, kRes) + forty_deg) < 1e-12);
}

TEST_CASE("mapping stays in limits and is monotone under fuzz") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  std::uniform_int_distribution<int> tick(-100000, 100000);
  for (int i = 0; i < 10000; ++i) {
    double lo = u(rng), hi = u(rng);
    if (lo > hi) std::swap(lo, hi);
    if (hi - lo < 1e-3) hi = lo + 1e-3;
    std::uniform_real_distribution<double> in(lo, hi);
    JointCalibration c{in(rng), tick(rng), (rng() & 1) ? 1.0 : -1.0, lo, hi};
    std::optional<JointConstraint> tc;
    if (rng() % 3 == 0) {
      double a = in(rng), b = in(rng);
      if (a > b) std::swap(a, b);
      if (b - a < 1e-6) b = a + 1e-6;
      tc = JointConstraint{a, b, std::nullopt};
    }
    const auto* tp = tc ? &*tc : nullptr;
    const double alo = tc ? tc->q_min : lo, ahi = tc ? tc->q_max : hi;
    const int p1 = tick(rng), p2 = tick(rng);
    const double q1 = map_encoder_to_joint(c, p1, kRes, tp);
    const double q2 = map_encoder_to_joint(c, p2, kRes, tp);
    CHECK(q1 >= alo);
    CHECK(q1 <= ahi);
    CHECK(std::abs(q1 - oracle(c.q_c, c.p_c, c.k, p1, kRes, alo, ahi)) < 1e-12);
    if ((p1 <= p2) == (c.k > 0)) {
      CHECK(q1 <= q2);
    } else {
      CHECK(q1 >= q2);
    }
  }
}

TEST_CASE("inverse mapping round trips within half a tick") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-2.5, 2.5);
  JointCalibration c{0.3, 2250, -1.0, -3.0, 3.0};
  for (int i = 0; i < 2000; ++i) {
    const double q = u(rng);
    const auto p = joint_to_encoder(c, q, kRes);
    CHECK(std::abs(map_encoder_to_joint(c, p, kRes) - q) <= kRes / 2 + 1e-12);
  }
}

TEST_CASE("task constraints narrow the active range and may override k") {
  JointCalibration c{0.0, 1000, 1.0, -std::numbers::pi, std::numbers::pi};
  JointConstraint t{-0.2, 0.3, std::nullopt};
  CHECK(map_encoder_to_joint(c, 1500, kRes, &t) == 0.3);
  CHECK(map_encoder_to_joint(c, 0, kRes, &t) == -0.2);
  t.k = -0.5;
  CHECK(std::abs(map_encoder_to_joint(c, 1100, kRes, &t) + 50 * kRes) < 1e-15);

  TaskConstraint tc;
  tc.task_id = "t";
  for (Arm a : kArms) tc.arms[index_of(a)].assign(7, JointConstraint{-0.1, 0.1, std::nullopt});
  CHECK_NOTHROW(tc.validate(default_arm_descriptor(Arm::kLeft), default_arm_descriptor(Arm::kRight)));
  tc.arms[0][3].q_max = 10.0;
  CHECK_THROWS_AS(tc.validate(default_arm_descriptor(Arm::kLeft), default_arm_descriptor(Arm::kRight)), Error);
}

TEST_CASE("gripper mapping is linear and clamped") {
  GripperCalibration g{1375, 1000, 0.085, 0.0};
  CHECK(map_gripper(g, 1375) == 0.085);
  CHECK(map_gripper(g, 1000) == 0.0);
  GripperCalibration even{1400, 1000, 0.085, 0.0};
  CHECK(map_gripper(even, 1200) == doctest::Approx(0.0425).epsilon(1e-15));
  CHECK(map_gripper(g, 5000) == 0.085);
  CHECK(map_gripper(g, -5000) == 0.0);
  CHECK(gripper_to_encoder(even, 0.0425) == 1200);
}

TEST_CASE("capture records the pose and validates lengths") {
  const auto rec = capture_calibration(zeros(), arms(), frame_of(1000), "extended", CaptureOptions::defaults(), 5);
  for (Arm a : kArms) {
    for (const auto& j : rec.arm(a).joints) {
      CHECK(j.q_c == 0.0);
      CHECK(j.p_c == 1000);
    }
    CHECK(rec.arm(a).gripper.p_closed == 1000);
  }
  CHECK(rec.created_at == 5);

  std::array<JointVector, 2> short_q{JointVector(Arm::kLeft, std::vector<double>(8, 0.0)),
                                     JointVector(Arm::kRight, std::vector<double>(8, 0.0))};
  CHECK_THROWS_AS(capture_calibration(short_q, arms(), frame_of(1000), "x", CaptureOptions::defaults(), 0), Error);
}

TEST_CASE("recapture replaces the record with a later timestamp") {
  CalibrationStore store([] { return Nanoseconds{42}; });
  const auto first = store.capture(zeros(), arms(), frame_of(1000), "a", CaptureOptions::defaults());
  const auto second = store.capture(zeros(), arms(), frame_of(2000), "b", CaptureOptions::defaults());
  CHECK(second.created_at > first.created_at);
  CHECK(store.current()->arm(Arm::kLeft).joints[0].p_c == 2000);
}

TEST_CASE("frame mapping is per-channel") {
  const auto rec = default_calibration();
  EncoderFrame f = frame_of(2250);
  const auto base = map_frame(rec, f);
  for (Arm a : kArms) {
    for (double v : base.joints[index_of(a)].values()) CHECK(v == 0.0);
  }
  f.ticks[10] += 1;  // right arm joint 3
  const auto moved = map_frame(rec, f);
  int changed = 0;
  for (Arm a : kArms) {
    for (int j = 0; j < 7; ++j) {
      const double d = moved.joints[index_of(a)][j] - base.joints[index_of(a)][j];
      if (d != 0.0) {
        ++changed;
        CHECK(std::abs(std::abs(d) - f.resolution_rad) < 1e-15);
      }
    }
  }
  CHECK(changed == 1);
  f.ticks.pop_back();
  CHECK_THROWS_AS(map_frame(rec, f), Error);
}

TEST_CASE("coverage") {
  const auto rec = default_calibration();
  const ArmDescriptor d = default_arm_descriptor(Arm::kLeft);
  std::vector<TickRange> full;
  for (const auto& lim : d.joint_limits) {
    full.push_back({joint_to_encoder(rec.arm(Arm::kLeft).joints[0], lim.min, rec.resolution_rad) - 5,
                    joint_to_encoder(rec.arm(Arm::kLeft).joints[0], lim.max, rec.resolution_rad) + 5});
  }
  full.push_back({0, 5000});
  for (double c : coverage_report(rec, full, d)) CHECK(c == 1.0);

  // Robot range [-pi, pi] against an exoskeleton image of [-2, 2].
  CalibrationRecord r = rec;
  ArmDescriptor wide = d;
  for (auto& lim : wide.joint_limits) lim = {-std::numbers::pi, std::numbers::pi};
  std::vector<TickRange> part;
  const auto half = static_cast<std::int64_t>(std::llround(2.0 / r.resolution_rad));
  for (int j = 0; j < 7; ++j) part.push_back({2250 - half, 2250 + half});
  part.push_back({2250, 2250 + 100});
  const auto cov = coverage_report(r, part, wide);
  // The image endpoints are whole ticks, so allow one tick of slack per end.
  CHECK(std::abs(cov[0] - 4.0 / (2 * std::numbers::pi)) <= 2 * r.resolution_rad / (2 * std::numbers::pi));

  std::vector<TickRange> disjoint(8, TickRange{100000, 100001});
  CHECK(coverage_report(r, disjoint, wide)[0] == 0.0);
  wide.joint_limits[0] = {1.0, 1.0};
  CHECK_THROWS_AS(coverage_report(r, part, wide), Error);
}

TEST_CASE("calibration documents round trip") {
  const auto rec = default_calibration();
  CHECK(calibration_from_json(to_json(rec)) == rec);
  const auto path = std::filesystem::temp_directory_path() / "airexo_cal_test.json";
  save_calibration(rec, path);
  CHECK(load_calibration(path) == rec);
  auto j = to_json(rec);
  j["schema"] = "airexo-cal/9";
  CHECK_THROWS_AS(calibration_from_json(j), Error);
  CHECK(load_task_constraint("configs/task_constraints.json", "gather_balls").arms[0].size() == 7);
  CHECK_THROWS_AS(load_task_constraint("configs/task_constraints.json", "nope"), Error);
}
