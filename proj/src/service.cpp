#include "airexo/service.hpp"

#include <chrono>
#include <cstdlib>
#include <deque>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

namespace airexo {

void ServiceConfig::apply_env() {
  if (const char* p = std::getenv("AIREXO_PORT")) {
    try {
      const int v = std::stoi(p);
      if (v < 0 || v > 65535) throw std::out_of_range("port");
      port = static_cast<std::uint16_t>(v);
    } catch (const std::exception&) {
      throw Error(ErrorKind::kConfiguration, std::string("AIREXO_PORT is not a port number: ") + p);
    }
  }
  if (const char* d = std::getenv("AIREXO_DATA_DIR")) data_dir = d;
}

const char* to_string(ServiceMode m) {
  switch (m) {
    case ServiceMode::kIdle: return "idle";
    case ServiceMode::kTeleop: return "teleop";
    case ServiceMode::kReplay: return "replay";
    case ServiceMode::kPolicy: return "policy";
  }
  return "?";
}

ServiceCore::ServiceCore(ServiceConfig cfg)
    : cfg_(std::move(cfg)),
      backend_(Simulator(cfg_.rig.robot, cfg_.rig.world), cfg_.rig.world.seed),
      session_id_(make_session_id("serve")) {
  cfg_.rig.loop.validate();
  cfg_.rig.calibration.validate();
  if (cfg_.state_decimation < 1) throw Error(ErrorKind::kConfiguration, "state_decimation must be >= 1");
  wall_start_ns_ = std::chrono::duration_cast<std::chrono::nanoseconds>(
                       std::chrono::steady_clock::now().time_since_epoch())
                       .count();
}

Nanoseconds ServiceCore::now() const {
  if (cfg_.virtual_time) return tick_ * cfg_.rig.loop.period_ns();
  const auto n = std::chrono::duration_cast<std::chrono::nanoseconds>(
                     std::chrono::steady_clock::now().time_since_epoch())
                     .count();
  return n - wall_start_ns_;
}

void ServiceCore::send(ClientId id, MessageType type, nlohmann::json payload) {
  auto it = clients_.find(id);
  if (it == clients_.end()) return;
  WireMessage m{type, it->second.out_seq++, now(), std::move(payload)};
  it->second.send(encode(m));
}

void ServiceCore::broadcast(MessageType type, const nlohmann::json& payload) {
  std::vector<ClientId> ids;
  for (const auto& [id, c] : clients_) ids.push_back(id);
  for (ClientId id : ids) send(id, type, payload);
}

void ServiceCore::error(ClientId id, ErrorKind kind, const std::string& message) {
  send(id, MessageType::kError, error_payload(kind, message));
}

ServiceCore::ClientId ServiceCore::connect(Sender sender) {
  const ClientId id = next_id_++;
  clients_[id] = Client{std::move(sender)};
  const auto& rig = cfg_.rig;
  send(id, MessageType::kHello,
       {{"version", kWireVersion},
        {"session_id", session_id_},
        {"client_id", id},
        {"mode", to_string(mode_)},
        {"control_rate_hz", rig.loop.control_rate_hz},
        {"virtual_time", cfg_.virtual_time},
        {"resolution_rad", rig.calibration.resolution_rad},
        {"encoder_channels", kEncoderChannels},
        {"world", to_json(rig.world)},
        {"robot", to_json(rig.robot)},
        {"calibration", to_json(rig.calibration)}});
  return id;
}

void ServiceCore::disconnect(ClientId id) {
  clients_.erase(id);
  if (operator_ == id) {
    operator_.reset();
    if (mode_ == ServiceMode::kTeleop) mode_ = ServiceMode::kIdle;
    broadcast(MessageType::kEvent, event_payload("operator_left", {{"client_id", id}}));
  }
}

void ServiceCore::handle(ClientId id, std::string_view text) {
  auto it = clients_.find(id);
  if (it == clients_.end()) return;
  WireMessage m;
  try {
    m = decode(text);
  } catch (const Error& e) {
    error(id, e.kind(), e.what());
    return;
  }
  if (m.seq <= it->second.in_seq) {
    send(id, MessageType::kEvent,
         event_payload("stale_seq", {{"seq", m.seq}, {"last_seq", it->second.in_seq}, {"type", to_string(m.type)}}));
    return;
  }
  it->second.in_seq = m.seq;
  try {
    switch (m.type) {
      case MessageType::kHello: on_hello(id, m); break;
      case MessageType::kEncoderInput: on_encoder_input(id, m); break;
      case MessageType::kRecordCtl: on_record(id, m); break;
      case MessageType::kReplayCtl: on_replay(id, m); break;
      case MessageType::kEvalCtl: on_eval(id, m); break;
      default: error(id, ErrorKind::kInvalidInput, std::string("clients may not send ") + to_string(m.type));
    }
  } catch (const Error& e) {
    error(id, e.kind(), e.what());
  } catch (const nlohmann::json::exception& e) {
    error(id, ErrorKind::kSchema, e.what());
  }
}

void ServiceCore::on_hello(ClientId id, const WireMessage& m) {
  if (m.payload.contains("version") && m.payload["version"] != kWireVersion) {
    throw Error(ErrorKind::kSchema, "unsupported wire version " + m.payload["version"].dump());
  }
  const std::string role = m.payload.value("role", "observer");
  if (role == "operator") {
    if (operator_ && *operator_ != id) throw Error(ErrorKind::kState, "operator role already held");
    operator_ = id;
    if (mode_ == ServiceMode::kIdle) mode_ = ServiceMode::kTeleop;
    broadcast(MessageType::kEvent, event_payload("role_granted", {{"client_id", id}, {"role", role}}));
  } else if (role == "observer") {
    send(id, MessageType::kEvent, event_payload("role_granted", {{"client_id", id}, {"role", role}}));
  } else {
    throw Error(ErrorKind::kInvalidInput, "unknown role '" + role + "'");
  }
}

void ServiceCore::on_encoder_input(ClientId id, const WireMessage& m) {
  if (operator_ != id) throw Error(ErrorKind::kState, "sender does not hold the operator role");
  EncoderFrame f;
  f.ticks = parse_encoder_ticks(m.payload);
  f.resolution_rad = cfg_.rig.calibration.resolution_rad;
  f.timestamp = now();
  mailbox_.put(std::move(f));
  if (mode_ == ServiceMode::kIdle) mode_ = ServiceMode::kTeleop;
}

std::filesystem::path ServiceCore::data_path(const std::string& name) const {
  const std::filesystem::path p(name);
  if (p.is_absolute() || name.find("..") != std::string::npos) {
    throw Error(ErrorKind::kInvalidInput, "file names must be relative to the data directory");
  }
  return cfg_.data_dir / p;
}

void ServiceCore::on_record(ClientId id, const WireMessage& m) {
  const std::string action = m.payload.at("action").get<std::string>();
  if (action == "start") {
    if (recorder_) throw Error(ErrorKind::kState, "already recording");
    recording_id_ = m.payload.value("id", session_id_ + "-rec" + std::to_string(tick_));
    data_path(recording_id_ + ".demo");
    recorder_.emplace(cfg_.rig.robot, cfg_.rig.world, backend_.seed(), cfg_.rig.calibration_ref);
    broadcast(MessageType::kEvent, event_payload("recording_started", {{"id", recording_id_}, {"client_id", id}}));
  } else if (action == "stop") {
    if (!recorder_) throw Error(ErrorKind::kState, "not recording");
    SessionRecorder rec = std::move(*recorder_);
    recorder_.reset();
    const Demonstration d = rec.finish(recording_id_);
    std::filesystem::create_directories(cfg_.data_dir);
    const auto path = data_path(recording_id_ + ".demo");
    write_demo(d, path);
    broadcast(MessageType::kEvent,
              event_payload("recording_saved", {{"id", d.id}, {"path", path.string()}, {"frames", d.frames.size()}}));
  } else {
    throw Error(ErrorKind::kInvalidInput, "record_ctl action must be start or stop");
  }
}

void ServiceCore::on_replay(ClientId id, const WireMessage& m) {
  const std::string action = m.payload.at("action").get<std::string>();
  if (action == "start") {
    Demonstration d = read_demo(data_path(m.payload.at("file").get<std::string>()));
    if (task_from_string(d.task_id) != backend_.task()) {
      throw Error(ErrorKind::kWorldType, "demonstration for " + d.task_id + " cannot replay in " +
                                             task_id(backend_.task()));
    }
    backend_.reset(d.seed);
    last_command_.reset();
    replay_demo_ = std::move(d);
    replay_index_ = 0;
    mode_ = ServiceMode::kReplay;
    broadcast(MessageType::kEvent,
              event_payload("replay_started", {{"id", replay_demo_->id}, {"frames", replay_demo_->frames.size()}, {"client_id", id}}));
  } else if (action == "stop") {
    replay_demo_.reset();
    mode_ = operator_ ? ServiceMode::kTeleop : ServiceMode::kIdle;
    broadcast(MessageType::kEvent, event_payload("replay_stopped"));
  } else {
    throw Error(ErrorKind::kInvalidInput, "replay_ctl action must be start or stop");
  }
}

void ServiceCore::on_eval(ClientId id, const WireMessage& m) {
  const std::string action = m.payload.at("action").get<std::string>();
  if (action == "score") {
    const SimState s = backend_.snapshot();
    const TrialResult r = score_trial(s, backend_.task(), to_seconds(s.sim_time));
    send(id, MessageType::kEvent, event_payload("trial_result", to_json(r)));
  } else if (action == "reset") {
    const std::uint64_t seed = m.payload.value("seed", backend_.seed());
    backend_.reset(seed);
    last_command_.reset();
    broadcast(MessageType::kEvent, event_payload("world_reset", {{"seed", seed}}));
  } else {
    throw Error(ErrorKind::kInvalidInput, "eval_ctl action must be score or reset");
  }
}

void ServiceCore::tick() {
  const LoopConfig& loop = cfg_.rig.loop;
  const Nanoseconds period = loop.period_ns();
  const double dt = to_seconds(period);
  const Nanoseconds t = now();
  const SimState before = backend_.snapshot();
  if (!last_command_) last_command_ = hold_command(before);
  DualArmCommand cmd = hold_command(before);
  std::optional<EncoderFrame> frame;
  bool stale = false;
  if (mode_ == ServiceMode::kTeleop) {
    const auto f = mailbox_.latest();
    if (!f || t - f->timestamp > from_seconds(loop.command_timeout_ms * 1e-3)) {
      stale = true;
      ++dropped_;
      cmd = *last_command_;
    } else {
      const MappedFrame mf = map_frame(cfg_.rig.calibration, *f);
      for (Arm a : kArms) {
        const auto v = mf.joints[index_of(a)].values();
        cmd.joints[index_of(a)].assign(v.begin(), v.end());
      }
      cmd.gripper_widths = mf.gripper_widths;
      limit_command(backend_.robot(), *last_command_, loop.velocity_cap_rad_s * dt, cmd);
      frame = f;
    }
  } else if (mode_ == ServiceMode::kReplay && replay_demo_) {
    if (replay_index_ + 1 < replay_demo_->frames.size()) {
      const DemoFrame& f = replay_demo_->frames[++replay_index_];
      for (Arm a : kArms) {
        const auto& d = backend_.robot().arm(a);
        auto& q = cmd.joints[index_of(a)];
        for (int j = 0; j < d.joint_count(); ++j) {
          q[j] = clamp(f.joint_pos[index_of(a) * kArmJoints + j], d.joint_limits[j].min, d.joint_limits[j].max);
        }
        cmd.gripper_widths[index_of(a)] = replay_demo_->gripper_width(f, a);
      }
    } else {
      replay_demo_.reset();
      mode_ = operator_ ? ServiceMode::kTeleop : ServiceMode::kIdle;
      broadcast(MessageType::kEvent, event_payload("replay_finished"));
    }
  }
  if (recorder_) recorder_->on_tick(TickRecord{tick_, t, &before, &cmd, frame ? &*frame : nullptr, stale, false});
  try {
    backend_.command(cmd, dt);
    last_command_ = cmd;
  } catch (const Error& e) {
    broadcast(MessageType::kEvent, event_payload("backend_error", {{"message", e.what()}}));
  }
  ++tick_;
  const SimState after = backend_.snapshot();
  if (tick_ % cfg_.state_decimation == 0) {
    broadcast(MessageType::kState, state_payload(backend_.robot(), after, tick_, to_string(mode_)));
  }
  if (operator_ && frame) {
    nlohmann::json joints = nlohmann::json::array();
    for (Arm a : kArms) {
      for (double v : cmd.joints[index_of(a)]) joints.push_back(v);
    }
    send(*operator_, MessageType::kCommandEcho,
         {{"tick", tick_}, {"joints", joints}, {"gripper_widths", cmd.gripper_widths}, {"frame_t", frame->timestamp}});
  }
}

// ---------------------------------------------------------------- transport

namespace {

namespace beast = boost::beast;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;

class WsSession : public std::enable_shared_from_this<WsSession> {
 public:
  WsSession(tcp::socket socket, ServiceCore& core) : ws_(std::move(socket)), core_(core) {}

  void run() {
    ws_.async_accept([self = shared_from_this()](beast::error_code ec) {
      if (ec) return;
      std::weak_ptr<WsSession> weak = self;
      self->id_ = self->core_.connect([weak](const std::string& text) {
        if (auto p = weak.lock()) p->enqueue(text);
      });
      self->read();
    });
  }

 private:
  void read() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->drop();
        return;
      }
      const std::string text = beast::buffers_to_string(self->buffer_.data());
      self->buffer_.consume(self->buffer_.size());
      self->core_.handle(self->id_, text);
      self->read();
    });
  }

  void enqueue(const std::string& text) {
    if (closed_) return;
    queue_.push_back(text);
    if (queue_.size() == 1) write();
  }

  void write() {
    ws_.text(true);
    ws_.async_write(net::buffer(queue_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->drop();
        return;
      }
      self->queue_.pop_front();
      if (!self->queue_.empty()) self->write();
    });
  }

  void drop() {
    if (closed_) return;
    closed_ = true;
    queue_.clear();
    if (id_ != 0) core_.disconnect(id_);
  }

  websocket::stream<beast::tcp_stream> ws_;
  beast::flat_buffer buffer_;
  std::deque<std::string> queue_;
  ServiceCore& core_;
  ServiceCore::ClientId id_ = 0;
  bool closed_ = false;
};

}  // namespace

void serve(const ServiceConfig& cfg, const std::atomic<bool>& stop,
           const std::function<void(std::uint16_t)>& on_listening) {
  ServiceCore core(cfg);
  net::io_context ioc;
  tcp::acceptor acceptor(ioc);
  try {
    const tcp::endpoint ep(net::ip::make_address(cfg.bind_address), cfg.port);
    acceptor.open(ep.protocol());
    acceptor.set_option(net::socket_base::reuse_address(true));
    acceptor.bind(ep);
    acceptor.listen();
  } catch (const boost::system::system_error& e) {
    throw Error(ErrorKind::kIo, "cannot listen on " + cfg.bind_address + ":" + std::to_string(cfg.port) + ": " +
                                    e.what());
  }
  std::function<void()> accept = [&] {
    acceptor.async_accept([&](beast::error_code ec, tcp::socket socket) {
      if (!ec) std::make_shared<WsSession>(std::move(socket), core)->run();
      if (acceptor.is_open()) accept();
    });
  };
  accept();

  const auto period = std::chrono::nanoseconds(cfg.rig.loop.period_ns());
  const auto start = std::chrono::steady_clock::now();
  net::steady_timer tick_timer(ioc);
  std::int64_t k = 0;
  std::function<void()> schedule = [&] {
    tick_timer.expires_at(start + (k + 1) * period);
    tick_timer.async_wait([&](beast::error_code ec) {
      if (ec) return;
      ++k;
      core.tick();
      schedule();
    });
  };
  schedule();

  net::steady_timer stop_timer(ioc);
  std::function<void()> watch = [&] {
    stop_timer.expires_after(std::chrono::milliseconds(50));
    stop_timer.async_wait([&](beast::error_code ec) {
      if (ec) return;
      if (stop.load()) {
        ioc.stop();
        return;
      }
      watch();
    });
  };
  watch();
  if (on_listening) on_listening(acceptor.local_endpoint().port());
  ioc.run();
}

}  // namespace airexo
