#include "airexo/wire.hpp"

#include <array>
#include <limits>

namespace airexo {

namespace {

constexpr std::array<std::pair<MessageType, const char*>, 9> kNames{{
    {MessageType::kHello, "hello"},
    {MessageType::kState, "state"},
    {MessageType::kEncoderInput, "encoder_input"},
    {MessageType::kCommandEcho, "command_echo"},
    {MessageType::kRecordCtl, "record_ctl"},
    {MessageType::kReplayCtl, "replay_ctl"},
    {MessageType::kEvalCtl, "eval_ctl"},
    {MessageType::kEvent, "event"},
    {MessageType::kError, "error"},
}};

}  // namespace

const char* to_string(MessageType t) {
  for (const auto& [k, n] : kNames) {
    if (k == t) return n;
  }
  return "?";
}

MessageType message_type_from_string(std::string_view s) {
  for (const auto& [k, n] : kNames) {
    if (s == n) return k;
  }
  throw Error(ErrorKind::kSchema, "unknown message type '" + std::string(s) + "'");
}

std::string encode(const WireMessage& m) {
  return nlohmann::json{{"type", to_string(m.type)}, {"seq", m.seq}, {"t", m.t}, {"payload", m.payload}}.dump();
}

WireMessage decode(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::kSchema, std::string("malformed message: ") + e.what());
  }
  if (!j.is_object()) throw Error(ErrorKind::kSchema, "message must be an object");
  for (const char* key : {"type", "seq", "t", "payload"}) {
    if (!j.contains(key)) throw Error(ErrorKind::kSchema, std::string("message missing '") + key + "'");
  }
  if (!j["type"].is_string()) throw Error(ErrorKind::kSchema, "type must be a string");
  if (!j["seq"].is_number_integer()) throw Error(ErrorKind::kSchema, "seq must be an integer");
  if (!j["t"].is_number_integer()) throw Error(ErrorKind::kSchema, "t must be an integer");
  if (!j["payload"].is_object()) throw Error(ErrorKind::kSchema, "payload must be an object");
  WireMessage m;
  m.type = message_type_from_string(j["type"].get<std::string>());
  m.seq = j["seq"].get<std::int64_t>();
  m.t = j["t"].get<std::int64_t>();
  m.payload = j["payload"];
  return m;
}

std::vector<std::int32_t> parse_encoder_ticks(const nlohmann::json& payload) {
  if (!payload.contains("ticks") || !payload["ticks"].is_array()) {
    throw Error(ErrorKind::kSchema, "encoder_input needs a ticks array");
  }
  const auto& a = payload["ticks"];
  if (a.size() != static_cast<std::size_t>(kEncoderChannels)) {
    throw Error(ErrorKind::kSchema, "dim mismatch " + std::to_string(a.size()) + " != " +
                                        std::to_string(kEncoderChannels));
  }
  std::vector<std::int32_t> ticks;
  ticks.reserve(a.size());
  for (const auto& v : a) {
    if (!v.is_number_integer()) throw Error(ErrorKind::kSchema, "ticks must be integers");
    const auto x = v.get<std::int64_t>();
    if (x < std::numeric_limits<std::int32_t>::min() || x > std::numeric_limits<std::int32_t>::max()) {
      throw Error(ErrorKind::kInvalidRange, "tick value out of range");
    }
    ticks.push_back(static_cast<std::int32_t>(x));
  }
  return ticks;
}

nlohmann::json state_payload(const RobotModel& robot, const SimState& state, std::int64_t tick,
                             const std::string& mode) {
  nlohmann::json joint_pos = nlohmann::json::array(), joint_vel = nlohmann::json::array();
  nlohmann::json tcp_pos = nlohmann::json::array(), widths = nlohmann::json::array();
  for (Arm a : kArms) {
    const auto& s = state.arm(a);
    for (double v : s.q) joint_pos.push_back(v);
    for (double v : s.q_dot) joint_vel.push_back(v);
    for (double v : forward_kinematics(robot.chain(a), s.q).tcp.to_array()) tcp_pos.push_back(v);
    widths.push_back(s.gripper_width);
  }
  nlohmann::json world;
  if (const auto* g = std::get_if<GatherBallsWorld>(&state.world)) {
    nlohmann::json balls = nlohmann::json::array();
    for (const auto& b : g->balls) balls.push_back({b.x, b.y});
    world = {{"task", task_id(TaskKind::kGatherBalls)}, {"balls", balls}};
  } else {
    const auto& w = std::get<CurtainedShelfWorld>(state.world);
    nlohmann::json flags;
    for (int i = 0; i < kStageCount; ++i) flags[stage_name(static_cast<Stage>(i))] = w.stage_flags[i];
    world = {{"task", task_id(TaskKind::kCurtainedShelf)},
             {"curtain_displacement", w.curtain_displacement},
             {"object", {w.object_position.x(), w.object_position.y(), w.object_position.z()}},
             {"object_attached", w.object_attached},
             {"stages", flags}};
  }
  nlohmann::json recent = nlohmann::json::array();
  for (auto it = state.collisions.rbegin(); it != state.collisions.rend() && it->t == state.sim_time; ++it) {
    recent.push_back(it->pair);
  }
  return {{"tick", tick},
          {"mode", mode},
          {"sim_time", state.sim_time},
          {"joint_pos", joint_pos},
          {"joint_vel", joint_vel},
          {"tcp_pos", tcp_pos},
          {"gripper_width", widths},
          {"world", world},
          {"collision_count", state.collisions.size()},
          {"collisions_now", recent}};
}

nlohmann::json error_payload(ErrorKind kind, const std::string& message) {
  return {{"code", to_string(kind)}, {"message", message}};
}

nlohmann::json event_payload(const std::string& kind, const nlohmann::json& detail) {
  return {{"kind", kind}, {"detail", detail}};
}

}  // namespace airexo
