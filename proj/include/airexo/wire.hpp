#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "airexo/core.hpp"
#include "airexo/simulator.hpp"

namespace airexo {

inline constexpr const char* kWireVersion = "airexo-wire/1";

enum class MessageType {
  kHello,
  kState,
  kEncoderInput,
  kCommandEcho,
  kRecordCtl,
  kReplayCtl,
  kEvalCtl,
  kEvent,
  kError,
};

const char* to_string(MessageType t);
MessageType message_type_from_string(std::string_view s);

/// One document per WebSocket message: {"type", "seq", "t", "payload"}.
struct WireMessage {
  MessageType type = MessageType::kEvent;
  std::int64_t seq = 0;
  Nanoseconds t = 0;
  nlohmann::json payload = nlohmann::json::object();
  bool operator==(const WireMessage&) const = default;
};

std::string encode(const WireMessage& m);
/// Throws kSchema for malformed documents.
WireMessage decode(std::string_view text);

/// Validates an encoder_input payload ({"ticks": [16 integers]}) and returns the ticks.
std::vector<std::int32_t> parse_encoder_ticks(const nlohmann::json& payload);

/// State payload for a snapshot; TCP poses come from the same joint values.
nlohmann::json state_payload(const RobotModel& robot, const SimState& state, std::int64_t tick,
                             const std::string& mode);

nlohmann::json error_payload(ErrorKind kind, const std::string& message);
nlohmann::json event_payload(const std::string& kind, const nlohmann::json& detail = nlohmann::json::object());

}  // namespace airexo
