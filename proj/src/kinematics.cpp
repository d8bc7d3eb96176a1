#include "airexo/kinematics.hpp"

#include <cmath>
#include <fstream>

namespace airexo {

std::array<double, 7> Pose::to_array() const {
  const Eigen::Quaterniond q = orientation.normalized();
  return {position.x(), position.y(), position.z(), q.x(), q.y(), q.z(), q.w()};
}

Pose Pose::from_array(std::span<const double, 7> v) {
  Pose p;
  p.position = {v[0], v[1], v[2]};
  p.orientation = Eigen::Quaterniond(v[6], v[3], v[4], v[5]);
  return p;
}

Eigen::Matrix3d rotation_from_rpy(const Eigen::Vector3d& rpy) {
  return (Eigen::AngleAxisd(rpy.z(), Eigen::Vector3d::UnitZ()) *
          Eigen::AngleAxisd(rpy.y(), Eigen::Vector3d::UnitY()) *
          Eigen::AngleAxisd(rpy.x(), Eigen::Vector3d::UnitX()))
      .toRotationMatrix();
}

void KinematicChain::validate() const {
  if (joints.empty()) throw Error(ErrorKind::kSchema, "kinematic chain has no joints");
  if (!(scale > 0.0)) throw Error(ErrorKind::kInvalidInput, "chain scale must be positive");
  for (const auto& j : joints) {
    if (j.axis.norm() < 1e-12) throw Error(ErrorKind::kSchema, "joint axis has zero length");
  }
  if (!link_radii.empty() && link_radii.size() != joints.size()) {
    throw Error(ErrorKind::kSchema, "link_radii must have one entry per joint");
  }
}

KinematicChain KinematicChain::scaled(double factor) const {
  KinematicChain c = *this;
  c.scale *= factor;
  if (c.home_tcp) c.home_tcp.reset();
  return c;
}

std::vector<Eigen::Vector3d> FkResult::link_points() const {
  std::vector<Eigen::Vector3d> pts;
  pts.reserve(joint_frames.size() + 1);
  for (const auto& f : joint_frames) pts.push_back(f.position);
  pts.push_back(tcp.position);
  return pts;
}

FkResult forward_kinematics(const KinematicChain& chain, std::span<const double> q) {
  if (q.size() != chain.joints.size()) {
    throw Error(ErrorKind::kSchema, "joint vector length " + std::to_string(q.size()) + " != chain joint count " +
                                        std::to_string(chain.joints.size()));
  }
  FkResult out;
  out.joint_frames.reserve(q.size());
  Eigen::Isometry3d t = chain.base_pose;
  for (std::size_t i = 0; i < q.size(); ++i) {
    const auto& js = chain.joints[i];
    t.translate(chain.scale * js.origin_xyz);
    t.rotate(rotation_from_rpy(js.origin_rpy));
    t.rotate(Eigen::AngleAxisd(q[i], js.axis.normalized()));
    Pose p;
    p.position = t.translation();
    p.orientation = Eigen::Quaterniond(t.rotation()).normalized();
    out.joint_frames.push_back(p);
  }
  t.translate(chain.scale * chain.tcp_offset);
  out.tcp.position = t.translation();
  out.tcp.orientation = Eigen::Quaterniond(t.rotation()).normalized();
  return out;
}

std::array<double, 6> tcp_twist(const KinematicChain& chain, std::span<const double> q,
                                std::span<const double> q_dot, double dt) {
  if (!(dt > 0.0)) throw Error(ErrorKind::kInvalidInput, "twist dt must be positive");
  if (q_dot.size() != q.size()) throw Error(ErrorKind::kSchema, "q_dot length mismatch");
  std::vector<double> q2(q.begin(), q.end());
  for (std::size_t i = 0; i < q2.size(); ++i) q2[i] += q_dot[i] * dt;
  const FkResult a = forward_kinematics(chain, q);
  const FkResult b = forward_kinematics(chain, q2);
  const Eigen::Vector3d v = (b.tcp.position - a.tcp.position) / dt;
  const Eigen::AngleAxisd rel(b.tcp.orientation * a.tcp.orientation.inverse());
  const Eigen::Vector3d w = rel.axis() * rel.angle() / dt;
  return {v.x(), v.y(), v.z(), w.x(), w.y(), w.z()};
}

namespace {

nlohmann::json vec_json(const Eigen::Vector3d& v) { return {v.x(), v.y(), v.z()}; }

Eigen::Vector3d vec_from(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3) throw Error(ErrorKind::kSchema, "expected a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

}  // namespace

nlohmann::json to_json(const KinematicChain& chain) {
  nlohmann::json joints = nlohmann::json::array();
  for (const auto& js : chain.joints) {
    joints.push_back({{"origin_xyz", vec_json(js.origin_xyz)},
                      {"origin_rpy", vec_json(js.origin_rpy)},
                      {"axis", vec_json(js.axis)}});
  }
  const Eigen::Vector3d base_rpy = Eigen::Matrix3d(chain.base_pose.rotation()).eulerAngles(2, 1, 0).reverse();
  nlohmann::json j = {{"joints", joints},
                      {"tcp_offset", vec_json(chain.tcp_offset)},
                      {"base", {{"xyz", vec_json(chain.base_pose.translation())}, {"rpy", vec_json(base_rpy)}}},
                      {"scale", chain.scale},
                      {"link_radii", chain.link_radii}};
  if (chain.home_tcp) {
    const auto a = chain.home_tcp->to_array();
    j["home_tcp"] = {{"position", {a[0], a[1], a[2]}}, {"orientation", {a[3], a[4], a[5], a[6]}}};
  }
  return j;
}

KinematicChain chain_from_json(const nlohmann::json& j) {
  try {
    KinematicChain c;
    for (const auto& e : j.at("joints")) {
      JointSpec js;
      js.origin_xyz = vec_from(e.at("origin_xyz"));
      js.origin_rpy = e.contains("origin_rpy") ? vec_from(e.at("origin_rpy")) : Eigen::Vector3d::Zero();
      js.axis = vec_from(e.at("axis"));
      c.joints.push_back(js);
    }
    c.tcp_offset = vec_from(j.at("tcp_offset"));
    if (j.contains("base")) {
      const auto& b = j.at("base");
      c.base_pose = Eigen::Isometry3d::Identity();
      c.base_pose.translate(vec_from(b.at("xyz")));
      if (b.contains("rpy")) c.base_pose.rotate(rotation_from_rpy(vec_from(b.at("rpy"))));
    }
    c.scale = j.value("scale", 1.0);
    if (j.contains("link_radii")) c.link_radii = j.at("link_radii").get<std::vector<double>>();
    if (j.contains("home_tcp")) {
      const auto& h = j.at("home_tcp");
      const auto pos = h.at("position").get<std::vector<double>>();
      const auto ori = h.at("orientation").get<std::vector<double>>();
      if (pos.size() != 3 || ori.size() != 4) throw Error(ErrorKind::kSchema, "home_tcp malformed");
      Pose p;
      p.position = {pos[0], pos[1], pos[2]};
      p.orientation = Eigen::Quaterniond(ori[3], ori[0], ori[1], ori[2]);
      c.home_tcp = p;
    }
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kSchema, std::string("chain config: ") + e.what());
  }
}

KinematicChain load_chain(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot read " + path.string());
  try {
    return chain_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::kSchema, path.string() + ": " + e.what());
  }
}

KinematicChain default_chain(Arm arm) {
  KinematicChain c;
  const Eigen::Vector3d x = Eigen::Vector3d::UnitX(), y = Eigen::Vector3d::UnitY(), z = Eigen::Vector3d::UnitZ();
  c.joints = {
      {Eigen::Vector3d::Zero(), Eigen::Vector3d::Zero(), z},  // shoulder yaw
      {Eigen::Vector3d::Zero(), Eigen::Vector3d::Zero(), y},  // shoulder pitch
      {0.15 * x, Eigen::Vector3d::Zero(), x},                 // upper-arm roll
      {0.15 * x, Eigen::Vector3d::Zero(), y},                 // elbow
      {0.15 * x, Eigen::Vector3d::Zero(), x},                 // forearm roll
      {0.15 * x, Eigen::Vector3d::Zero(), y},                 // wrist
      {0.05 * x, Eigen::Vector3d::Zero(), x},                 // flange roll
  };
  c.tcp_offset = 0.10 * x;
  const double side = arm == Arm::kLeft ? 0.3 : -0.3;
  c.base_pose = Eigen::Isometry3d::Identity();
  c.base_pose.translate(Eigen::Vector3d(0.0, side, 0.3));
  c.link_radii = {0.05, 0.04, 0.04, 0.04, 0.04, 0.035, 0.03};
  Pose home;
  home.position = {0.75, side, 0.3};
  c.home_tcp = home;
  return c;
}

}  // namespace airexo
