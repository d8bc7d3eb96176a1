#include "airexo/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <set>

namespace airexo {

namespace {

// Portable uniform in [0, 1): the standard distributions are not specified
// bit-for-bit across library implementations.
double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

nlohmann::json vec_json(const Eigen::Vector3d& v) { return {v.x(), v.y(), v.z()}; }

Eigen::Vector3d vec_from(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3) throw Error(ErrorKind::kSchema, "expected a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

nlohmann::json box_json(const Aabb& b) { return {{"min", vec_json(b.min)}, {"max", vec_json(b.max)}}; }
Aabb box_from(const nlohmann::json& j) { return {vec_from(j.at("min")), vec_from(j.at("max"))}; }

nlohmann::json pt_json(const Point2& p) { return {p.x, p.y}; }
Point2 pt_from(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 2) throw Error(ErrorKind::kSchema, "expected a 2-vector");
  return {j[0].get<double>(), j[1].get<double>()};
}

std::string link_name(Arm arm, int link) { return std::string(to_string(arm)) + ":" + std::to_string(link); }

double dist2d(const Point2& a, const Point2& b) { return std::hypot(a.x - b.x, a.y - b.y); }

}  // namespace

// ---------------------------------------------------------------- robot

void RobotModel::validate() const {
  for (Arm a : kArms) {
    const auto& d = arms[index_of(a)];
    d.validate();
    if (d.arm != a) throw Error(ErrorKind::kConfiguration, "arm descriptor order must be left, right");
    chains[index_of(a)].validate();
    if (static_cast<std::size_t>(d.joint_count()) != chains[index_of(a)].joint_count()) {
      throw Error(ErrorKind::kConfiguration, std::string(to_string(a)) + " arm: joint limits and chain disagree");
    }
  }
  if (!(velocity_cap_rad_s > 0.0)) throw Error(ErrorKind::kConfiguration, "velocity cap must be positive");
}

RobotModel RobotModel::defaults() {
  RobotModel r;
  for (Arm a : kArms) {
    r.arms[index_of(a)] = default_arm_descriptor(a);
    r.chains[index_of(a)] = default_chain(a);
  }
  return r;
}

nlohmann::json to_json(const RobotModel& robot) {
  nlohmann::json arms, chains;
  for (Arm a : kArms) {
    const auto& d = robot.arm(a);
    nlohmann::json lim = nlohmann::json::array();
    for (const auto& l : d.joint_limits) lim.push_back({l.min, l.max});
    arms[to_string(a)] = {{"name", d.name}, {"joint_limits", lim}, {"gripper_width_max", d.gripper_width_max}};
    chains[to_string(a)] = to_json(robot.chain(a));
  }
  return {{"arms", arms}, {"chains", chains}, {"velocity_cap_rad_s", robot.velocity_cap_rad_s}};
}

RobotModel robot_from_json(const nlohmann::json& j) {
  try {
    RobotModel r = RobotModel::defaults();
    for (Arm a : kArms) {
      const char* name = to_string(a);
      if (j.contains("arms") && j.at("arms").contains(name)) {
        const auto& e = j.at("arms").at(name);
        auto& d = r.arms[index_of(a)];
        d.name = e.value("name", d.name);
        if (e.contains("joint_limits")) {
          d.joint_limits.clear();
          for (const auto& l : e.at("joint_limits")) {
            if (!l.is_array() || l.size() != 2) throw Error(ErrorKind::kSchema, "joint limit must be [min, max]");
            d.joint_limits.push_back({l[0].get<double>(), l[1].get<double>()});
          }
        }
        d.gripper_width_max = e.value("gripper_width_max", d.gripper_width_max);
      }
      if (j.contains("chains") && j.at("chains").contains(name)) {
        r.chains[index_of(a)] = chain_from_json(j.at("chains").at(name));
      }
    }
    r.velocity_cap_rad_s = j.value("velocity_cap_rad_s", r.velocity_cap_rad_s);
    r.validate();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kSchema, std::string("robot config: ") + e.what());
  }
}

// ---------------------------------------------------------------- tasks

const char* task_id(TaskKind task) {
  return task == TaskKind::kGatherBalls ? "gather_balls" : "curtained_shelf";
}

TaskKind task_from_string(std::string_view s) {
  if (s == "gather_balls" || s == "gather") return TaskKind::kGatherBalls;
  if (s == "curtained_shelf" || s == "shelf") return TaskKind::kCurtainedShelf;
  throw Error(ErrorKind::kInvalidInput, "unknown task '" + std::string(s) + "'");
}

const char* stage_name(Stage s) {
  switch (s) {
    case Stage::kReachIn: return "reach_in";
    case Stage::kPushAside: return "push_aside";
    case Stage::kApproach: return "approach";
    case Stage::kGrasp: return "grasp";
    case Stage::kThrow: return "throw";
  }
  return "?";
}

CurtainedShelfConfig CurtainedShelfConfig::defaults() {
  CurtainedShelfConfig c;
  c.shelf_boxes = {
      {{0.55, -0.53, 0.22}, {0.98, 0.53, 0.25}},  // bottom board
      {{0.55, -0.53, 0.45}, {0.98, 0.53, 0.48}},  // top board
      {{0.55, 0.50, 0.22}, {0.98, 0.53, 0.48}},   // left side
      {{0.55, -0.53, 0.22}, {0.98, -0.50, 0.48}}, // right side
      {{0.95, -0.53, 0.22}, {0.98, 0.53, 0.48}},  // back
  };
  return c;
}

int TaskProtocol::step_budget() const {
  if (!(duration_s > 0.0) || !(control_rate_hz > 0.0)) {
    throw Error(ErrorKind::kConfiguration, "protocol duration and rate must be positive");
  }
  int n = static_cast<int>(std::floor(duration_s * control_rate_hz + 1e-9));
  if (max_steps) n = std::min(n, *max_steps);
  return n;
}

WorldConfig WorldConfig::gather_balls() {
  WorldConfig w;
  w.task = TaskKind::kGatherBalls;
  w.grippers = {false, false};
  w.reset_pose = {std::vector<double>(kArmJoints, 0.0), std::vector<double>(kArmJoints, 0.0)};
  w.protocol = {60.0, 5.0, std::nullopt};
  return w;
}

WorldConfig WorldConfig::curtained_shelf() {
  WorldConfig w;
  w.task = TaskKind::kCurtainedShelf;
  w.grippers = {true, false};
  w.shelf = CurtainedShelfConfig::defaults();
  w.reset_pose = {planar_reach_pose(default_chain(Arm::kLeft), 0.35, 0.25),
                  planar_reach_pose(default_chain(Arm::kRight), 0.35, -0.25)};
  w.protocol = {120.0, 5.0, 400};
  return w;
}

std::vector<double> planar_reach_pose(const KinematicChain& chain, double x, double y) {
  if (chain.joint_count() != static_cast<std::size_t>(kArmJoints)) {
    throw Error(ErrorKind::kConfiguration, "planar reach needs a 7-joint chain");
  }
  const double s = chain.scale;
  const double l1 = s * (chain.joints[2].origin_xyz.norm() + chain.joints[3].origin_xyz.norm());
  const double l2 = s * (chain.joints[4].origin_xyz.norm() + chain.joints[5].origin_xyz.norm() +
                         chain.joints[6].origin_xyz.norm() + chain.tcp_offset.norm());
  const Eigen::Vector3d base = chain.base_pose.translation();
  const double dx = x - base.x(), dy = y - base.y();
  const double r2 = dx * dx + dy * dy;
  const double c = (r2 - l1 * l1 - l2 * l2) / (2.0 * l1 * l2);
  if (c < -1.0 || c > 1.0) throw Error(ErrorKind::kInvalidRange, "planar target out of reach");
  const double outward = base.y() >= 0.0 ? -1.0 : 1.0;
  const double elbow = outward * std::acos(c);
  const double yaw = std::atan2(dy, dx) - std::atan2(l2 * std::sin(elbow), l1 + l2 * std::cos(elbow));
  return {yaw, 0.0, std::numbers::pi / 2.0, elbow, 0.0, 0.0, 0.0};
}

nlohmann::json to_json(const WorldConfig& w) {
  nlohmann::json j;
  j["task"] = task_id(w.task);
  j["seed"] = w.seed;
  j["table_height"] = w.table_height;
  j["grippers"] = {{"left", w.grippers[0]}, {"right", w.grippers[1]}};
  j["reset_pose"] = {{"left", w.reset_pose[0]}, {"right", w.reset_pose[1]}};
  j["protocol"] = {{"duration_s", w.protocol.duration_s}, {"control_rate_hz", w.protocol.control_rate_hz}};
  if (w.protocol.max_steps) j["protocol"]["max_steps"] = *w.protocol.max_steps;
  j["substep_rad"] = w.substep_rad;
  if (w.task == TaskKind::kGatherBalls) {
    const auto& g = w.gather;
    j["gather"] = {
        {"table", {{"x", {g.table.x_min, g.table.x_max}}, {"y", {g.table.y_min, g.table.y_max}}}},
        {"triangle", {pt_json(g.triangle[0]), pt_json(g.triangle[1]), pt_json(g.triangle[2])}},
        {"clusters",
         {{"left", {{"center", pt_json(g.clusters[0].center)}, {"radius", g.clusters[0].radius}}},
          {"right", {{"center", pt_json(g.clusters[1].center)}, {"radius", g.clusters[1].radius}}}}},
        {"ball_radius", g.ball_radius},
        {"contact_height", g.contact_height}};
  } else {
    const auto& s = w.shelf;
    nlohmann::json boxes = nlohmann::json::array();
    for (const auto& b : s.shelf_boxes) boxes.push_back(box_json(b));
    j["shelf"] = {{"curtain_x", s.curtain_x},
                  {"curtain_y", {s.curtain_y_min, s.curtain_y_max}},
                  {"curtain_z", {s.curtain_z_min, s.curtain_z_max}},
                  {"push_threshold", s.push_threshold},
                  {"shelf_boxes", boxes},
                  {"shelf_support_z", s.shelf_support_z},
                  {"bin", box_json(s.bin)},
                  {"bin_floor_z", s.bin_floor_z},
                  {"object_nominal", vec_json(s.object_nominal)},
                  {"object_jitter", s.object_jitter},
                  {"object_width", s.object_width},
                  {"object_half_height", s.object_half_height},
                  {"approach_radius", s.approach_radius},
                  {"grasp_radius", s.grasp_radius}};
  }
  return j;
}

WorldConfig world_from_json(const nlohmann::json& j) {
  try {
    const TaskKind task = task_from_string(j.at("task").get<std::string>());
    WorldConfig w = task == TaskKind::kGatherBalls ? WorldConfig::gather_balls() : WorldConfig::curtained_shelf();
    w.seed = j.value("seed", w.seed);
    w.table_height = j.value("table_height", w.table_height);
    w.substep_rad = j.value("substep_rad", w.substep_rad);
    if (!(w.substep_rad > 0.0)) throw Error(ErrorKind::kConfiguration, "substep_rad must be positive");
    if (j.contains("grippers")) {
      w.grippers = {j.at("grippers").value("left", w.grippers[0]), j.at("grippers").value("right", w.grippers[1])};
    }
    if (j.contains("reset_pose")) {
      for (Arm a : kArms) {
        if (j.at("reset_pose").contains(to_string(a))) {
          w.reset_pose[index_of(a)] = j.at("reset_pose").at(to_string(a)).get<std::vector<double>>();
        }
      }
    }
    if (j.contains("protocol")) {
      const auto& p = j.at("protocol");
      w.protocol.duration_s = p.value("duration_s", w.protocol.duration_s);
      w.protocol.control_rate_hz = p.value("control_rate_hz", w.protocol.control_rate_hz);
      if (p.contains("max_steps")) w.protocol.max_steps = p.at("max_steps").get<int>();
      w.protocol.step_budget();
    }
    if (j.contains("gather")) {
      const auto& g = j.at("gather");
      auto& c = w.gather;
      if (g.contains("table")) {
        const auto x = g.at("table").at("x").get<std::vector<double>>();
        const auto y = g.at("table").at("y").get<std::vector<double>>();
        if (x.size() != 2 || y.size() != 2) throw Error(ErrorKind::kSchema, "table bounds must be [min, max]");
        c.table = {x[0], x[1], y[0], y[1]};
      }
      if (g.contains("triangle")) {
        const auto& t = g.at("triangle");
        if (t.size() != 3) throw Error(ErrorKind::kSchema, "triangle needs 3 vertices");
        for (int i = 0; i < 3; ++i) c.triangle[i] = pt_from(t[i]);
      }
      if (g.contains("clusters")) {
        for (Arm a : kArms) {
          if (!g.at("clusters").contains(to_string(a))) continue;
          const auto& e = g.at("clusters").at(to_string(a));
          c.clusters[index_of(a)] = {pt_from(e.at("center")), e.value("radius", c.clusters[index_of(a)].radius)};
        }
      }
      c.ball_radius = g.value("ball_radius", c.ball_radius);
      c.contact_height = g.value("contact_height", c.contact_height);
    }
    if (j.contains("shelf")) {
      const auto& s = j.at("shelf");
      auto& c = w.shelf;
      c.curtain_x = s.value("curtain_x", c.curtain_x);
      if (s.contains("curtain_y")) {
        c.curtain_y_min = s.at("curtain_y").at(0).get<double>();
        c.curtain_y_max = s.at("curtain_y").at(1).get<double>();
      }
      if (s.contains("curtain_z")) {
        c.curtain_z_min = s.at("curtain_z").at(0).get<double>();
        c.curtain_z_max = s.at("curtain_z").at(1).get<double>();
      }
      c.push_threshold = s.value("push_threshold", c.push_threshold);
      if (s.contains("shelf_boxes")) {
        c.shelf_boxes.clear();
        for (const auto& b : s.at("shelf_boxes")) c.shelf_boxes.push_back(box_from(b));
      }
      c.shelf_support_z = s.value("shelf_support_z", c.shelf_support_z);
      if (s.contains("bin")) c.bin = box_from(s.at("bin"));
      c.bin_floor_z = s.value("bin_floor_z", c.bin_floor_z);
      if (s.contains("object_nominal")) c.object_nominal = vec_from(s.at("object_nominal"));
      c.object_jitter = s.value("object_jitter", c.object_jitter);
      c.object_width = s.value("object_width", c.object_width);
      c.object_half_height = s.value("object_half_height", c.object_half_height);
      c.approach_radius = s.value("approach_radius", c.approach_radius);
      c.grasp_radius = s.value("grasp_radius", c.grasp_radius);
    }
    return w;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kSchema, std::string("world config: ") + e.what());
  }
}

WorldConfig load_world(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot read " + path.string());
  try {
    return world_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::kSchema, path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------- state

TaskKind SimState::task() const {
  return std::holds_alternative<GatherBallsWorld>(world) ? TaskKind::kGatherBalls : TaskKind::kCurtainedShelf;
}

DualArmCommand hold_command(const SimState& state) {
  DualArmCommand c;
  for (Arm a : kArms) {
    c.joints[index_of(a)] = state.arm(a).q;
    c.gripper_widths[index_of(a)] = state.arm(a).gripper_cmd_width;
  }
  return c;
}

bool CollisionMask::excluded(const LinkId& a, const LinkId& b) const {
  if (a.arm != b.arm) return false;
  if (std::abs(a.link - b.link) <= 1) return true;
  return !self_collision;
}

std::vector<Capsule> arm_capsules(const KinematicChain& chain, const FkResult& fk) {
  const auto pts = fk.link_points();
  std::vector<Capsule> out;
  out.reserve(pts.size() - 1);
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    const double r = i < chain.link_radii.size() ? chain.link_radii[i] : 0.04;
    out.push_back({pts[i], pts[i + 1], r});
  }
  return out;
}

double triangle_credit(const std::array<Point2, 3>& tri, const Point2& p, double tol) {
  const double area = (tri[1].x - tri[0].x) * (tri[2].y - tri[0].y) - (tri[1].y - tri[0].y) * (tri[2].x - tri[0].x);
  if (area == 0.0) throw Error(ErrorKind::kConfiguration, "degenerate triangle");
  const double orient = area > 0.0 ? 1.0 : -1.0;
  double min_d = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 3; ++i) {
    const Point2& a = tri[i];
    const Point2& b = tri[(i + 1) % 3];
    const double len = std::hypot(b.x - a.x, b.y - a.y);
    const double cross = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
    min_d = std::min(min_d, orient * cross / len);
  }
  if (std::abs(min_d) <= tol) return 0.5;
  return min_d > 0.0 ? 1.0 : 0.0;
}

// ---------------------------------------------------------------- simulator

Simulator::Simulator(RobotModel robot, WorldConfig world, kernels::Exec exec)
    : robot_(std::move(robot)), world_(std::move(world)), exec_(exec) {
  robot_.validate();
  world_.protocol.step_budget();
  for (Arm a : kArms) {
    const auto& pose = world_.reset_pose[index_of(a)];
    const auto& d = robot_.arm(a);
    if (pose.size() != static_cast<std::size_t>(d.joint_count())) {
      throw Error(ErrorKind::kConfiguration, std::string(to_string(a)) + " reset pose has wrong length");
    }
    for (int i = 0; i < d.joint_count(); ++i) {
      if (pose[i] < d.joint_limits[i].min || pose[i] > d.joint_limits[i].max) {
        throw Error(ErrorKind::kConfiguration, std::string(to_string(a)) + " reset pose outside joint limits");
      }
    }
  }
}

SimState Simulator::reset(std::uint64_t seed) const {
  SimState s;
  for (Arm a : kArms) {
    auto& st = s.arms[index_of(a)];
    st.q = world_.reset_pose[index_of(a)];
    st.q_dot.assign(st.q.size(), 0.0);
    st.gripper_width = world_.grippers[index_of(a)] ? robot_.arm(a).gripper_width_max : 0.0;
    st.gripper_cmd_width = st.gripper_width;
  }
  std::mt19937_64 rng(seed);
  if (world_.task == TaskKind::kGatherBalls) {
    const auto& g = world_.gather;
    GatherBallsWorld w;
    w.triangle = g.triangle;
    w.table = g.table;
    for (Arm a : kArms) {
      const auto& c = g.clusters[index_of(a)];
      for (int i = 0; i < kBallsPerCluster; ++i) {
        Point2 p;
        do {
          p = {c.center.x + c.radius * (2.0 * unit(rng) - 1.0), c.center.y + c.radius * (2.0 * unit(rng) - 1.0)};
        } while (dist2d(p, c.center) > c.radius);
        w.balls.push_back(p);
        w.cluster.push_back(a);
      }
    }
    s.world = std::move(w);
  } else {
    const auto& c = world_.shelf;
    CurtainedShelfWorld w;
    w.bin_region = c.bin;
    const double jx = c.object_jitter * (2.0 * unit(rng) - 1.0);
    const double jy = c.object_jitter * (2.0 * unit(rng) - 1.0);
    w.object_position = {c.object_nominal.x() + jx, c.object_nominal.y() + jy, c.shelf_support_z + c.object_half_height};
    s.world = w;
  }
  return s;
}

std::array<FkResult, 2> Simulator::forward(const SimState& state) const {
  return {forward_kinematics(robot_.chain(Arm::kLeft), state.arm(Arm::kLeft).q),
          forward_kinematics(robot_.chain(Arm::kRight), state.arm(Arm::kRight).q)};
}

void Simulator::apply_gather_contacts(GatherBallsWorld& world,
                                      const std::array<std::vector<Capsule>, 2>& capsules) const {
  const auto& g = world_.gather;
  const double h = world_.table_height + g.contact_height;
  std::vector<kernels::Footprint> fps;
  for (const auto& arm : capsules) {
    for (const auto& c : arm) {
      Eigen::Vector3d a = c.a, b = c.b;
      const bool a_low = a.z() <= h, b_low = b.z() <= h;
      if (!a_low && !b_low) continue;
      if (a_low != b_low) {
        const double t = (h - a.z()) / (b.z() - a.z());
        const Eigen::Vector3d cut = a + t * (b - a);
        (a_low ? b : a) = cut;
      }
      fps.push_back({{a.x(), a.y()}, {b.x(), b.y()}, c.radius + g.ball_radius});
    }
  }
  if (fps.empty()) return;
  kernels::push_out(exec_, world.balls, fps, world.table, 4);
}

void Simulator::apply_shelf_contacts(CurtainedShelfWorld& world, const std::array<FkResult, 2>& fk) const {
  const auto& c = world_.shelf;
  double depth = 0.0;
  for (const auto& p : fk[index_of(Arm::kRight)].link_points()) {
    if (p.y() < c.curtain_y_min || p.y() > c.curtain_y_max) continue;
    if (p.z() < c.curtain_z_min || p.z() > c.curtain_z_max) continue;
    depth = std::max(depth, p.x() - c.curtain_x);
  }
  world.curtain_displacement = depth > 0.0 ? std::max(world.curtain_displacement, depth) : 0.0;
  if (world.object_attached) world.object_position = fk[index_of(Arm::kLeft)].tcp.position;
}

void Simulator::collect_collisions(const std::array<std::vector<Capsule>, 2>& capsules,
                                   std::vector<std::string>& out) const {
  const auto& left = capsules[index_of(Arm::kLeft)];
  const auto& right = capsules[index_of(Arm::kRight)];
  std::vector<double> d(left.size() * right.size());
  if (exec_ == kernels::Exec::kSerial) {
    kernels::capsule_pair_distances_serial(left, right, d);
  } else {
    kernels::capsule_pair_distances_omp(left, right, d);
  }
  for (std::size_t i = 0; i < left.size(); ++i) {
    for (std::size_t j = 0; j < right.size(); ++j) {
      if (d[i * right.size() + j] < 0.0) {
        out.push_back(link_name(Arm::kLeft, static_cast<int>(i)) + "|" + link_name(Arm::kRight, static_cast<int>(j)));
      }
    }
  }
  for (Arm a : kArms) {
    const auto& caps = capsules[index_of(a)];
    if (mask_.self_collision) {
      for (std::size_t i = 0; i < caps.size(); ++i) {
        for (std::size_t j = i + 1; j < caps.size(); ++j) {
          if (mask_.excluded({a, static_cast<int>(i)}, {a, static_cast<int>(j)})) continue;
          if (capsule_distance(caps[i], caps[j]) < 0.0) {
            out.push_back(link_name(a, static_cast<int>(i)) + "|" + link_name(a, static_cast<int>(j)));
          }
        }
      }
    }
    for (std::size_t i = 0; i < caps.size(); ++i) {
      const std::string name = link_name(a, static_cast<int>(i));
      if (capsule_plane_distance(caps[i], world_.table_height) < 0.0) out.push_back(name + "|table");
      if (world_.task == TaskKind::kCurtainedShelf) {
        const auto& boxes = world_.shelf.shelf_boxes;
        for (std::size_t b = 0; b < boxes.size(); ++b) {
          if (capsule_box_distance(caps[i], boxes[b]) < 0.0) out.push_back(name + "|shelf:" + std::to_string(b));
        }
      }
    }
  }
}

StageFlags Simulator::latch_stages(CurtainedShelfWorld& world, const std::array<FkResult, 2>& fk,
                                   const std::array<double, 2>& widths, Nanoseconds t,
                                   std::vector<SimEvent>* events) const {
  const auto& c = world_.shelf;
  const Eigen::Vector3d right_tcp = fk[index_of(Arm::kRight)].tcp.position;
  const Eigen::Vector3d left_tcp = fk[index_of(Arm::kLeft)].tcp.position;
  const double to_object = (left_tcp - world.object_position).norm();
  const StageFlags cond{
      right_tcp.x() > c.curtain_x,
      world.curtain_displacement >= c.push_threshold,
      to_object <= c.approach_radius,
      world.object_attached || (to_object <= c.grasp_radius && widths[index_of(Arm::kLeft)] < c.object_width),
      !world.object_attached && world.bin_region.contains(world.object_position),
  };
  for (int i = 0; i < kStageCount; ++i) {
    const bool prev_ok = i == 0 || world.stage_flags[i - 1];
    if (world.stage_flags[i]) continue;
    if (cond[i] && prev_ok) {
      world.stage_flags[i] = true;
    } else if (cond[i] && !world.violation_logged[i]) {
      world.violation_logged[i] = true;
      if (events) {
        events->push_back({t, "protocol_violation",
                           std::string(stage_name(static_cast<Stage>(i))) + " before " +
                               stage_name(static_cast<Stage>(i - 1))});
      }
    }
  }
  return world.stage_flags;
}

StageFlags Simulator::detect_stage(const SimState& state, std::vector<SimEvent>* events) const {
  const auto* w = std::get_if<CurtainedShelfWorld>(&state.world);
  if (!w || world_.task != TaskKind::kCurtainedShelf) {
    throw Error(ErrorKind::kState, "stage detection needs a curtained shelf world");
  }
  CurtainedShelfWorld copy = *w;
  const std::array<double, 2> widths{state.arms[0].gripper_width, state.arms[1].gripper_width};
  return latch_stages(copy, forward(state), widths, state.sim_time, events);
}

SimState Simulator::step(const SimState& state, const DualArmCommand& command, double dt) const {
  if (!std::isfinite(dt) || !(dt > 0.0)) throw Error(ErrorKind::kInvalidInput, "step dt must be positive");
  if (state.task() != world_.task) throw Error(ErrorKind::kWorldType, "state belongs to a different world");
  SimState out = state;
  const Nanoseconds t_new = state.sim_time + from_seconds(dt);
  const double cap = robot_.velocity_cap_rad_s * dt;
  std::array<std::vector<double>, 2> start, end;
  double max_delta = 0.0;
  for (Arm a : kArms) {
    const std::size_t ai = index_of(a);
    const auto& d = robot_.arm(a);
    const auto& target = command.joints[ai];
    if (target.size() != static_cast<std::size_t>(d.joint_count())) {
      throw Error(ErrorKind::kSchema, std::string(to_string(a)) + " command has " + std::to_string(target.size()) +
                                          " joints, expected " + std::to_string(d.joint_count()));
    }
    start[ai] = state.arms[ai].q;
    end[ai].resize(target.size());
    for (std::size_t j = 0; j < target.size(); ++j) {
      if (!std::isfinite(target[j])) throw Error(ErrorKind::kInvalidInput, "non-finite joint command");
      const double goal = clamp(target[j], d.joint_limits[j].min, d.joint_limits[j].max);
      const double cur = start[ai][j];
      const double delta = goal - cur;
      end[ai][j] = std::abs(delta) <= cap ? goal : cur + std::copysign(cap, delta);
      max_delta = std::max(max_delta, std::abs(end[ai][j] - cur));
    }
    auto& st = out.arms[ai];
    st.q = end[ai];
    for (std::size_t j = 0; j < st.q.size(); ++j) st.q_dot[j] = (end[ai][j] - start[ai][j]) / dt;
    if (world_.grippers[ai]) {
      const double w = command.gripper_widths[ai];
      if (!std::isfinite(w)) throw Error(ErrorKind::kInvalidInput, "non-finite gripper command");
      const double wc = clamp(w, 0.0, d.gripper_width_max);
      if (wc != st.gripper_cmd_width) st.gripper_cmd_t = t_new;
      st.gripper_cmd_width = wc;
      st.gripper_width = wc;
    }
  }

  const int n = std::clamp(static_cast<int>(std::ceil(max_delta / world_.substep_rad)), 1, 64);
  std::set<std::string> pairs;
  std::vector<std::string> hits;
  std::array<FkResult, 2> fk;
  for (int i = 1; i <= n; ++i) {
    std::array<std::vector<double>, 2> q;
    if (i == n) {
      q = end;
    } else {
      const double alpha = static_cast<double>(i) / n;
      for (std::size_t ai = 0; ai < 2; ++ai) {
        q[ai].resize(end[ai].size());
        for (std::size_t j = 0; j < q[ai].size(); ++j) q[ai][j] = start[ai][j] + alpha * (end[ai][j] - start[ai][j]);
      }
    }
    std::array<std::vector<Capsule>, 2> caps;
    for (Arm a : kArms) {
      fk[index_of(a)] = forward_kinematics(robot_.chain(a), q[index_of(a)]);
      caps[index_of(a)] = arm_capsules(robot_.chain(a), fk[index_of(a)]);
    }
    if (auto* g = std::get_if<GatherBallsWorld>(&out.world)) {
      apply_gather_contacts(*g, caps);
    } else {
      apply_shelf_contacts(std::get<CurtainedShelfWorld>(out.world), fk);
    }
    hits.clear();
    collect_collisions(caps, hits);
    pairs.insert(hits.begin(), hits.end());
  }
  for (const auto& p : pairs) out.collisions.push_back({t_new, p});

  if (auto* w = std::get_if<CurtainedShelfWorld>(&out.world)) {
    const auto& c = world_.shelf;
    const std::array<double, 2> widths{out.arms[0].gripper_width, out.arms[1].gripper_width};
    latch_stages(*w, fk, widths, t_new, &out.events);
    const Eigen::Vector3d tcp = fk[index_of(Arm::kLeft)].tcp.position;
    const double width = widths[index_of(Arm::kLeft)];
    if (!w->object_attached && w->stage_flags[static_cast<int>(Stage::kGrasp)] && width < c.object_width &&
        (tcp - w->object_position).norm() <= c.grasp_radius) {
      w->object_attached = true;
      w->object_position = tcp;
    } else if (w->object_attached && width >= c.object_width) {
      w->object_attached = false;
      Eigen::Vector3d& p = w->object_position;
      const bool over_bin = p.x() >= c.bin.min.x() && p.x() <= c.bin.max.x() && p.y() >= c.bin.min.y() &&
                            p.y() <= c.bin.max.y();
      bool over_shelf = false;
      if (!c.shelf_boxes.empty()) {
        const auto& board = c.shelf_boxes.front();
        over_shelf = p.x() >= board.min.x() && p.x() <= board.max.x() && p.y() >= board.min.y() &&
                     p.y() <= board.max.y() && p.z() >= c.shelf_support_z;
      }
      if (over_bin) {
        p.z() = c.bin_floor_z + c.object_half_height;
      } else if (over_shelf) {
        p.z() = c.shelf_support_z + c.object_half_height;
      } else {
        p.z() = world_.table_height + c.object_half_height;
      }
      latch_stages(*w, fk, widths, t_new, &out.events);
    }
  }
  out.sim_time = t_new;
  return out;
}

}  // namespace airexo
