#include "airexo/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace airexo {

namespace {

const JointConstraint* constraint_for(const TaskConstraint* constraint, Arm arm, std::size_t joint) {
  if (constraint == nullptr) return nullptr;
  const auto& entries = constraint->arm(arm);
  if (joint >= entries.size()) {
    throw Error(ErrorKind::kSchema, "task constraint '" + constraint->task_id + "' lacks joint " +
                                        std::to_string(joint + 1));
  }
  return &entries[joint];
}

}  // namespace

void JointCalibration::validate() const {
  if (!(q_min < q_max)) throw Error(ErrorKind::kInvalidRange, "calibration q_min >= q_max");
  if (q_c < q_min || q_c > q_max) {
    throw Error(ErrorKind::kInvalidRange, "calibration pose q_c outside [q_min, q_max]");
  }
  if (k == 0.0 || !std::isfinite(k)) throw Error(ErrorKind::kInvalidInput, "calibration k must be non-zero");
}

void GripperCalibration::validate() const {
  if (p_open == p_closed) throw Error(ErrorKind::kInvalidRange, "gripper p_open == p_closed");
  if (!(width_closed >= 0.0) || !(width_open > width_closed)) {
    throw Error(ErrorKind::kInvalidRange, "gripper widths must satisfy width_open > width_closed >= 0");
  }
}

void CalibrationRecord::validate() const {
  if (!(resolution_rad > 0.0)) throw Error(ErrorKind::kInvalidInput, "resolution must be positive");
  for (Arm a : kArms) {
    const auto& ac = arm(a);
    if (ac.joints.size() != static_cast<std::size_t>(kArmJoints)) {
      throw Error(ErrorKind::kSchema, std::string("calibration for ") + to_string(a) + " arm has " +
                                          std::to_string(ac.joints.size()) + " joints, expected " +
                                          std::to_string(kArmJoints));
    }
    for (const auto& j : ac.joints) j.validate();
    ac.gripper.validate();
  }
}

void TaskConstraint::validate(const ArmDescriptor& left, const ArmDescriptor& right) const {
  for (const ArmDescriptor* d : {&left, &right}) {
    const auto& entries = arm(d->arm);
    if (static_cast<int>(entries.size()) != d->joint_count()) {
      throw Error(ErrorKind::kSchema, "task constraint '" + task_id + "' has " +
                                          std::to_string(entries.size()) + " joints for arm '" +
                                          d->name + "'");
    }
    for (std::size_t i = 0; i < entries.size(); ++i) {
      const auto& c = entries[i];
      const auto& lim = d->joint_limits[i];
      if (!(c.q_min < c.q_max)) throw Error(ErrorKind::kInvalidRange, "task range is empty");
      if (c.q_min < lim.min || c.q_max > lim.max) {
        throw Error(ErrorKind::kInvalidRange, "task constraint '" + task_id + "' joint " +
                                                  std::to_string(i + 1) +
                                                  " exceeds the kinematic range");
      }
      if (c.k && (*c.k == 0.0 || !std::isfinite(*c.k))) {
        throw Error(ErrorKind::kInvalidInput, "task constraint k must be non-zero");
      }
    }
  }
}

CaptureOptions CaptureOptions::defaults() {
  CaptureOptions o;
  o.k_signs[0] = {1, 1, 1, 1, 1, 1, 1};
  // The right exoskeleton arm is a mirror image: roll/yaw encoders read reversed.
  o.k_signs[1] = {-1, 1, -1, 1, -1, 1, -1};
  o.gripper_open_span_ticks = {375, -375};
  return o;
}

CalibrationRecord capture_calibration(const std::array<JointVector, 2>& robot_joints,
                                      const std::array<ArmDescriptor, 2>& arms,
                                      const EncoderFrame& encoder_frame, std::string pose_label,
                                      const CaptureOptions& options, Nanoseconds created_at) {
  encoder_frame.validate_dual_arm();
  CalibrationRecord rec;
  rec.created_at = created_at;
  rec.pose_label = std::move(pose_label);
  rec.resolution_rad = encoder_frame.resolution_rad;
  for (Arm a : kArms) {
    const auto i = index_of(a);
    const ArmDescriptor& desc = arms[i];
    const JointVector& q = robot_joints[i];
    if (q.arm() != a || desc.arm != a) throw Error(ErrorKind::kSchema, "arm order must be left, right");
    // The encoder frame carries joints + gripper per arm.
    if (static_cast<int>(q.size()) + 1 != kArmDof || desc.dof() != kArmDof) {
      throw Error(ErrorKind::kSchema, "joint vector length " + std::to_string(q.size()) +
                                          " does not fill " + std::to_string(kArmDof) +
                                          " calibration slots (joints + gripper)");
    }
    const auto& signs = options.k_signs[i];
    if (signs.size() != q.size()) throw Error(ErrorKind::kSchema, "k sign table length mismatch");
    const auto ticks = encoder_frame.arm_ticks(a);
    ArmCalibration ac;
    for (std::size_t j = 0; j < q.size(); ++j) {
      JointCalibration jc{q[j], ticks[j], signs[j], desc.joint_limits[j].min, desc.joint_limits[j].max};
      jc.validate();
      ac.joints.push_back(jc);
    }
    ac.gripper.p_closed = ticks[kArmJoints];
    ac.gripper.p_open = ticks[kArmJoints] + options.gripper_open_span_ticks[i];
    ac.gripper.width_open = desc.gripper_width_max;
    ac.gripper.width_closed = 0.0;
    ac.gripper.validate();
    rec.arms[i] = std::move(ac);
  }
  return rec;
}

CalibrationStore::CalibrationStore(Clock clock) : clock_(std::move(clock)) {}

const CalibrationRecord& CalibrationStore::capture(const std::array<JointVector, 2>& robot_joints,
                                                   const std::array<ArmDescriptor, 2>& arms,
                                                   const EncoderFrame& encoder_frame,
                                                   std::string pose_label,
                                                   const CaptureOptions& options) {
  Nanoseconds now = clock_();
  if (current_ && now <= current_->created_at) now = current_->created_at + 1;
  current_ = capture_calibration(robot_joints, arms, encoder_frame, std::move(pose_label), options, now);
  return *current_;
}

double encoder_to_joint_unclamped(const JointCalibration& cal, std::int64_t ticks, double resolution_rad,
                                  const JointConstraint* constraint) {
  const double k = (constraint != nullptr && constraint->k) ? *constraint->k : cal.k;
  const double delta = static_cast<double>(ticks - static_cast<std::int64_t>(cal.p_c));
  return cal.q_c + k * delta * resolution_rad;
}

double map_encoder_to_joint(const JointCalibration& cal, std::int64_t ticks, double resolution_rad,
                            const JointConstraint* constraint) {
  if (!(resolution_rad > 0.0)) throw Error(ErrorKind::kInvalidInput, "resolution must be positive");
  const double q = encoder_to_joint_unclamped(cal, ticks, resolution_rad, constraint);
  if (constraint != nullptr) return std::min(std::max(q, constraint->q_min), constraint->q_max);
  return std::min(std::max(q, cal.q_min), cal.q_max);
}

std::int64_t joint_to_encoder(const JointCalibration& cal, double q, double resolution_rad) {
  return static_cast<std::int64_t>(cal.p_c) + quantize_to_resolution((q - cal.q_c) / cal.k, resolution_rad);
}

double map_gripper(const GripperCalibration& cal, std::int64_t ticks) {
  const double span = static_cast<double>(cal.p_open) - static_cast<double>(cal.p_closed);
  const double s = (static_cast<double>(ticks) - static_cast<double>(cal.p_closed)) / span;
  const double w = cal.width_closed + s * (cal.width_open - cal.width_closed);
  return std::min(std::max(w, cal.width_closed), cal.width_open);
}

std::int64_t gripper_to_encoder(const GripperCalibration& cal, double width) {
  const double s = (width - cal.width_closed) / (cal.width_open - cal.width_closed);
  const double span = static_cast<double>(cal.p_open) - static_cast<double>(cal.p_closed);
  return cal.p_closed + static_cast<std::int64_t>(std::llround(s * span));
}

MappedFrame map_frame(const CalibrationRecord& cal, const EncoderFrame& frame,
                      const TaskConstraint* constraint) {
  frame.validate_dual_arm();
  MappedFrame out;
  out.t = frame.timestamp;
  for (Arm a : kArms) {
    const auto i = index_of(a);
    const auto& ac = cal.arm(a);
    if (ac.joints.size() + 1 != static_cast<std::size_t>(kArmDof)) {
      throw Error(ErrorKind::kSchema, "calibration slot count does not match the encoder frame");
    }
    const auto ticks = frame.arm_ticks(a);
    std::vector<double> q(ac.joints.size());
    for (std::size_t j = 0; j < ac.joints.size(); ++j) {
      q[j] = map_encoder_to_joint(ac.joints[j], ticks[j], frame.resolution_rad,
                                  constraint_for(constraint, a, j));
    }
    out.joints[i] = JointVector(a, std::move(q));
    out.gripper_widths[i] = map_gripper(ac.gripper, ticks[kArmJoints]);
  }
  return out;
}

std::vector<double> coverage_report(const CalibrationRecord& cal, std::span<const TickRange> ranges,
                                    const ArmDescriptor& arm) {
  const auto& ac = cal.arm(arm.arm);
  if (ranges.size() != ac.joints.size() + 1) {
    throw Error(ErrorKind::kSchema, "coverage needs one tick range per joint plus the gripper");
  }
  std::vector<double> out;
  out.reserve(ranges.size());
  for (std::size_t j = 0; j < ac.joints.size(); ++j) {
    const auto& lim = arm.joint_limits.at(j);
    const double width = lim.max - lim.min;
    if (!(width > 0.0)) throw Error(ErrorKind::kInvalidRange, "degenerate robot joint range");
    if (ranges[j].min > ranges[j].max) throw Error(ErrorKind::kInvalidRange, "tick range min > max");
    const double a = encoder_to_joint_unclamped(ac.joints[j], ranges[j].min, cal.resolution_rad);
    const double b = encoder_to_joint_unclamped(ac.joints[j], ranges[j].max, cal.resolution_rad);
    const double lo = std::max(std::min(a, b), lim.min);
    const double hi = std::min(std::max(a, b), lim.max);
    out.push_back(std::clamp((hi - lo) / width, 0.0, 1.0));
  }
  const auto& g = ac.gripper;
  const auto& gr = ranges.back();
  if (gr.min > gr.max) throw Error(ErrorKind::kInvalidRange, "tick range min > max");
  const double span = static_cast<double>(g.p_open) - static_cast<double>(g.p_closed);
  auto unclamped = [&](std::int64_t p) {
    return g.width_closed + (static_cast<double>(p) - g.p_closed) / span * (g.width_open - g.width_closed);
  };
  const double a = unclamped(gr.min), b = unclamped(gr.max);
  const double lo = std::max(std::min(a, b), g.width_closed);
  const double hi = std::min(std::max(a, b), g.width_open);
  out.push_back(std::clamp((hi - lo) / (g.width_open - g.width_closed), 0.0, 1.0));
  return out;
}

nlohmann::json to_json(const CalibrationRecord& cal) {
  nlohmann::json arms = nlohmann::json::object();
  for (Arm a : kArms) {
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& j : cal.arm(a).joints) {
      entries.push_back({{"q_c", j.q_c}, {"p_c", j.p_c}, {"k", j.k}, {"q_min", j.q_min}, {"q_max", j.q_max}});
    }
    const auto& g = cal.arm(a).gripper;
    entries.push_back({{"p_open", g.p_open},
                       {"p_closed", g.p_closed},
                       {"width_open", g.width_open},
                       {"width_closed", g.width_closed}});
    arms[to_string(a)] = std::move(entries);
  }
  return {{"schema", kCalibrationSchema},
          {"created_at", cal.created_at},
          {"pose_label", cal.pose_label},
          {"encoder_resolution_rad", cal.resolution_rad},
          {"arms", std::move(arms)}};
}

CalibrationRecord calibration_from_json(const nlohmann::json& j) {
  try {
    if (j.at("schema").get<std::string>() != kCalibrationSchema) {
      throw Error(ErrorKind::kSchema, "unsupported calibration schema '" + j.at("schema").get<std::string>() + "'");
    }
    CalibrationRecord cal;
    cal.created_at = j.at("created_at").get<Nanoseconds>();
    cal.pose_label = j.value("pose_label", "");
    cal.resolution_rad = j.value("encoder_resolution_rad", kDefaultEncoderResolutionRad);
    for (Arm a : kArms) {
      const auto& entries = j.at("arms").at(to_string(a));
      if (entries.size() != static_cast<std::size_t>(kArmDof)) {
        throw Error(ErrorKind::kSchema, std::string(to_string(a)) + " arm has " +
                                            std::to_string(entries.size()) + " calibration entries, expected " +
                                            std::to_string(kArmDof));
      }
      ArmCalibration ac;
      for (int i = 0; i < kArmJoints; ++i) {
        const auto& e = entries.at(i);
        ac.joints.push_back({e.at("q_c").get<double>(), e.at("p_c").get<std::int32_t>(), e.at("k").get<double>(),
                             e.at("q_min").get<double>(), e.at("q_max").get<double>()});
      }
      const auto& g = entries.at(kArmJoints);
      ac.gripper.p_open = g.at("p_open").get<std::int32_t>();
      ac.gripper.p_closed = g.at("p_closed").get<std::int32_t>();
      ac.gripper.width_open = g.at("width_open").get<double>();
      ac.gripper.width_closed = g.value("width_closed", 0.0);
      cal.arms[index_of(a)] = std::move(ac);
    }
    cal.validate();
    return cal;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kSchema, std::string("calibration document: ") + e.what());
  }
}

void save_calibration(const CalibrationRecord& cal, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out << to_json(cal).dump(2) << '\n';
}

namespace {
nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot read " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kSchema, path.string() + ": " + e.what());
  }
}
}  // namespace

CalibrationRecord load_calibration(const std::filesystem::path& path) {
  return calibration_from_json(read_json_file(path));
}

TaskConstraint task_constraint_from_json(const nlohmann::json& j) {
  try {
    TaskConstraint tc;
    tc.task_id = j.at("id").get<std::string>();
    for (Arm a : kArms) {
      for (const auto& e : j.at("arms").at(to_string(a))) {
        JointConstraint c{e.at("q_min").get<double>(), e.at("q_max").get<double>(), std::nullopt};
        if (e.contains("k")) c.k = e.at("k").get<double>();
        tc.arms[index_of(a)].push_back(c);
      }
    }
    return tc;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kSchema, std::string("task constraint: ") + e.what());
  }
}

TaskConstraint load_task_constraint(const std::filesystem::path& path, const std::string& id) {
  const auto doc = read_json_file(path);
  for (const auto& c : doc.at("constraints")) {
    if (c.value("id", "") == id) return task_constraint_from_json(c);
  }
  throw Error(ErrorKind::kConfiguration, "no task constraint with id '" + id + "' in " + path.string());
}

CalibrationRecord default_calibration() {
  const std::array<ArmDescriptor, 2> arms{default_arm_descriptor(Arm::kLeft),
                                          default_arm_descriptor(Arm::kRight)};
  EncoderFrame frame;
  frame.ticks.assign(kEncoderChannels, 2250);
  const std::array<JointVector, 2> q{JointVector(Arm::kLeft, std::vector<double>(kArmJoints, 0.0)),
                                     JointVector(Arm::kRight, std::vector<double>(kArmJoints, 0.0))};
  return capture_calibration(q, arms, frame, "fully extended", CaptureOptions::defaults(), 0);
}

}  // namespace airexo
