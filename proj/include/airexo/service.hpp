#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include "airexo/recorder.hpp"
#include "airexo/scenarios.hpp"
#include "airexo/wire.hpp"

namespace airexo {

struct ServiceConfig {
  std::string bind_address = "127.0.0.1";
  std::uint16_t port = 8765;
  std::filesystem::path data_dir = "data";
  /// Tick timestamps derive from the tick count instead of the wall clock.
  bool virtual_time = false;
  /// Broadcast state every n-th tick.
  int state_decimation = 1;
  Rig rig;

  /// Applies AIREXO_PORT and AIREXO_DATA_DIR when set.
  void apply_env();
};

enum class ServiceMode { kIdle, kTeleop, kReplay, kPolicy };
const char* to_string(ServiceMode m);

/// Transport-independent service state machine. Not thread-safe: the
/// transport calls it from one thread.
class ServiceCore {
 public:
  using ClientId = std::uint64_t;
  using Sender = std::function<void(const std::string&)>;

  explicit ServiceCore(ServiceConfig cfg);

  /// Registers a client and sends it the hello message.
  ClientId connect(Sender send);
  void disconnect(ClientId id);
  void handle(ClientId id, std::string_view text);
  /// One control tick: command the backend, record, broadcast.
  void tick();

  Nanoseconds now() const;
  ServiceMode mode() const { return mode_; }
  std::int64_t ticks() const { return tick_; }
  std::optional<ClientId> operator_client() const { return operator_; }
  const SimBackend& backend() const { return backend_; }
  const ServiceConfig& config() const { return cfg_; }
  const std::string& session_id() const { return session_id_; }
  std::int64_t dropped_frames() const { return dropped_; }

 private:
  struct Client {
    Sender send;
    std::int64_t out_seq = 0;
    std::int64_t in_seq = -1;
  };

  void send(ClientId id, MessageType type, nlohmann::json payload);
  void broadcast(MessageType type, const nlohmann::json& payload);
  void error(ClientId id, ErrorKind kind, const std::string& message);
  void on_hello(ClientId id, const WireMessage& m);
  void on_encoder_input(ClientId id, const WireMessage& m);
  void on_record(ClientId id, const WireMessage& m);
  void on_replay(ClientId id, const WireMessage& m);
  void on_eval(ClientId id, const WireMessage& m);
  std::filesystem::path data_path(const std::string& name) const;

  ServiceConfig cfg_;
  SimBackend backend_;
  std::string session_id_;
  std::map<ClientId, Client> clients_;
  ClientId next_id_ = 1;
  std::optional<ClientId> operator_;
  ServiceMode mode_ = ServiceMode::kIdle;
  Mailbox<EncoderFrame> mailbox_;
  std::optional<DualArmCommand> last_command_;
  std::optional<SessionRecorder> recorder_;
  std::string recording_id_;
  std::optional<Demonstration> replay_demo_;
  std::size_t replay_index_ = 0;
  std::int64_t tick_ = 0;
  std::int64_t dropped_ = 0;
  std::int64_t wall_start_ns_ = 0;
};

/// Runs the WebSocket server until `stop` becomes true. Throws kIo when the
/// port cannot be bound.
void serve(const ServiceConfig& cfg, const std::atomic<bool>& stop,
           const std::function<void(std::uint16_t)>& on_listening = {});

}  // namespace airexo
