#include "doctest.h"

#include <filesystem>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include "airexo/operators.hpp"
#include "airexo/service.hpp"

using namespace airexo;
namespace fs = std::filesystem;

namespace {

struct Inbox {
  std::vector<WireMessage> messages;
  ServiceCore::Sender sender() {
    return [this](const std::string& text) { messages.push_back(decode(text)); };
  }
  std::vector<WireMessage> of(MessageType type) const {
    std::vector<WireMessage> out;
    for (const auto& m : messages) {
      if (m.type == type) out.push_back(m);
    }
    return out;
  }
  std::vector<std::string> events() const {
    std::vector<std::string> out;
    for (const auto& m : of(MessageType::kEvent)) out.push_back(m.payload.at("kind").get<std::string>());
    return out;
  }
  bool has_event(const std::string& kind) const {
    const auto e = events();
    return std::find(e.begin(), e.end(), kind) != e.end();
  }
};

struct Client {
  Inbox inbox;
  ServiceCore::ClientId id = 0;
  std::int64_t seq = 0;

  void send(ServiceCore& core, MessageType type, nlohmann::json payload) {
    if (payload.is_null()) payload = nlohmann::json::object();
    core.handle(id, encode(WireMessage{type, seq++, 0, std::move(payload)}));
  }
};

fs::path scratch_dir(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("airexo-test-" + name + "-" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

ServiceConfig virtual_config(const fs::path& data) {
  ServiceConfig cfg;
  cfg.virtual_time = true;
  cfg.data_dir = data;
  return cfg;
}

std::vector<std::int32_t> ticks_for(const CalibrationRecord& cal, double q) {
  OperatorSample s;
  s.joints = {std::vector<double>(7, q), std::vector<double>(7, q)};
  return encode_sample(cal, s, 0).ticks;
}

}  // namespace

TEST_CASE("hello announces the session and the protocol version") {
  ServiceCore core(virtual_config(scratch_dir("hello")));
  Client c;
  c.id = core.connect(c.inbox.sender());
  REQUIRE(c.inbox.messages.size() == 1);
  const auto& hello = c.inbox.messages[0];
  CHECK(hello.type == MessageType::kHello);
  CHECK(hello.seq == 0);
  CHECK(hello.payload.at("version") == kWireVersion);
  CHECK(hello.payload.at("encoder_channels") == 16);
  CHECK(hello.payload.at("session_id") == core.session_id());
  CHECK(core.mode() == ServiceMode::kIdle);
}

TEST_CASE("only one client may hold the operator role") {
  ServiceCore core(virtual_config(scratch_dir("roles")));
  Client a, b;
  a.id = core.connect(a.inbox.sender());
  b.id = core.connect(b.inbox.sender());
  a.send(core, MessageType::kHello, {{"version", kWireVersion}, {"role", "operator"}});
  CHECK(core.operator_client() == a.id);
  CHECK(core.mode() == ServiceMode::kTeleop);
  CHECK(b.inbox.has_event("role_granted"));
  b.send(core, MessageType::kHello, {{"role", "operator"}});
  REQUIRE(b.inbox.of(MessageType::kError).size() == 1);
  CHECK(b.inbox.of(MessageType::kError)[0].payload.at("message").get<std::string>().ends_with("operator role already held"));

  b.send(core, MessageType::kEncoderInput, {{"ticks", std::vector<int>(16, 2250)}});
  CHECK(b.inbox.of(MessageType::kError).size() == 2);

  b.send(core, MessageType::kHello, {{"version", "airexo-wire/0"}});
  CHECK(b.inbox.of(MessageType::kError).back().payload.at("code") == to_string(ErrorKind::kSchema));

  core.disconnect(a.id);
  CHECK_FALSE(core.operator_client().has_value());
  CHECK(core.mode() == ServiceMode::kIdle);
  CHECK(b.inbox.has_event("operator_left"));
  b.send(core, MessageType::kHello, {{"role", "operator"}});
  CHECK(core.operator_client() == b.id);
}

TEST_CASE("sequence numbers and malformed input") {
  ServiceCore core(virtual_config(scratch_dir("seq")));
  Client c;
  c.id = core.connect(c.inbox.sender());
  c.send(core, MessageType::kHello, {});
  c.seq = 0;
  c.send(core, MessageType::kHello, {});
  CHECK(c.inbox.has_event("stale_seq"));
  core.handle(c.id, "{not json");
  CHECK(c.inbox.of(MessageType::kError).back().payload.at("code") == to_string(ErrorKind::kSchema));
  c.send(core, MessageType::kState, {});
  CHECK(c.inbox.of(MessageType::kError).size() == 2);
  for (std::size_t i = 1; i < c.inbox.messages.size(); ++i) {
    CHECK(c.inbox.messages[i].seq == c.inbox.messages[i - 1].seq + 1);
  }
}

TEST_CASE("encoder input drives the robot like the calibration mapping") {
  ServiceCore core(virtual_config(scratch_dir("teleop")));
  Client op;
  op.id = core.connect(op.inbox.sender());
  op.send(core, MessageType::kHello, {{"role", "operator"}});
  const auto& cal = core.config().rig.calibration;
  const auto ticks = ticks_for(cal, 0.05);
  op.send(core, MessageType::kEncoderInput, {{"ticks", ticks}});
  core.tick();

  EncoderFrame f;
  f.ticks = ticks;
  f.resolution_rad = cal.resolution_rad;
  const auto mapped = map_frame(cal, f);
  const auto echoes = op.inbox.of(MessageType::kCommandEcho);
  REQUIRE(echoes.size() == 1);
  for (Arm a : kArms) {
    const auto q = mapped.joints[index_of(a)].values();
    for (std::size_t j = 0; j < 7; ++j) {
      CHECK(echoes[0].payload.at("joints")[index_of(a) * 7 + j].get<double>() == q[j]);
      CHECK(core.backend().snapshot().arm(a).q[j] == q[j]);
    }
  }
  CHECK(core.dropped_frames() == 0);

  // Without fresh input the last command is held and counted as dropped.
  for (int i = 0; i < 5; ++i) core.tick();
  CHECK(core.dropped_frames() == 3);
  CHECK(op.inbox.of(MessageType::kState).size() == 6);
  CHECK(op.inbox.of(MessageType::kState).back().payload.at("tick") == 6);
}

TEST_CASE("state broadcasts follow the decimation") {
  auto cfg = virtual_config(scratch_dir("decimation"));
  cfg.state_decimation = 3;
  ServiceCore core(cfg);
  Client c;
  c.id = core.connect(c.inbox.sender());
  for (int i = 0; i < 30; ++i) core.tick();
  CHECK(c.inbox.of(MessageType::kState).size() == 10);
  cfg.state_decimation = 0;
  CHECK_THROWS_AS(ServiceCore{cfg}, Error);
}

TEST_CASE("record then replay through the service") {
  const auto dir = scratch_dir("record");
  ServiceCore core(virtual_config(dir));
  Client op;
  op.id = core.connect(op.inbox.sender());
  op.send(core, MessageType::kHello, {{"role", "operator"}});
  op.send(core, MessageType::kRecordCtl, {{"action", "start"}, {"id", "session-a"}});
  CHECK(op.inbox.has_event("recording_started"));
  const auto& cal = core.config().rig.calibration;
  for (int i = 0; i < 40; ++i) {
    op.send(core, MessageType::kEncoderInput, {{"ticks", ticks_for(cal, 0.01 * i)}});
    core.tick();
  }
  op.send(core, MessageType::kRecordCtl, {{"action", "stop"}});
  REQUIRE(op.inbox.has_event("recording_saved"));
  const auto saved = op.inbox.of(MessageType::kEvent).back().payload.at("detail");
  CHECK(saved.at("frames") == 40);
  const auto demo = read_demo(dir / "session-a.demo");
  CHECK(demo.frames.size() == 40);

  op.send(core, MessageType::kRecordCtl, {{"action", "stop"}});
  CHECK(op.inbox.of(MessageType::kError).back().payload.at("message").get<std::string>().ends_with("not recording"));
  op.send(core, MessageType::kRecordCtl, {{"action", "start"}, {"id", "../escape"}});
  CHECK(op.inbox.of(MessageType::kError).back().payload.at("code") == to_string(ErrorKind::kInvalidInput));

  op.send(core, MessageType::kReplayCtl, {{"action", "start"}, {"file", "session-a.demo"}});
  CHECK(core.mode() == ServiceMode::kReplay);
  for (std::size_t i = 1; i < demo.frames.size(); ++i) {
    core.tick();
    const auto s = core.backend().snapshot();
    for (Arm a : kArms) {
      for (std::size_t j = 0; j < 7; ++j) CHECK(s.arm(a).q[j] == demo.frames[i].joint_pos[index_of(a) * 7 + j]);
    }
  }
  core.tick();
  CHECK(op.inbox.has_event("replay_finished"));
  CHECK(core.mode() == ServiceMode::kTeleop);
}

TEST_CASE("replaying a demo from another task is refused") {
  const auto dir = scratch_dir("mismatch");
  auto cfg = virtual_config(dir);
  cfg.rig.world = WorldConfig::curtained_shelf();
  {
    ServiceCore shelf(cfg);
    Client c;
    c.id = shelf.connect(c.inbox.sender());
    c.send(shelf, MessageType::kRecordCtl, {{"action", "start"}, {"id", "shelf"}});
    for (int i = 0; i < 3; ++i) shelf.tick();
    c.send(shelf, MessageType::kRecordCtl, {{"action", "stop"}});
  }
  ServiceCore gather(virtual_config(dir));
  Client c;
  c.id = gather.connect(c.inbox.sender());
  c.send(gather, MessageType::kReplayCtl, {{"action", "start"}, {"file", "shelf.demo"}});
  CHECK(c.inbox.of(MessageType::kError).back().payload.at("code") == to_string(ErrorKind::kWorldType));
  CHECK(gather.mode() == ServiceMode::kIdle);
}

TEST_CASE("evaluation control scores and resets the world") {
  ServiceCore core(virtual_config(scratch_dir("eval")));
  Client c;
  c.id = core.connect(c.inbox.sender());
  c.send(core, MessageType::kEvalCtl, {{"action", "score"}});
  const auto r = c.inbox.of(MessageType::kEvent).back().payload;
  CHECK(r.at("kind") == "trial_result");
  CHECK(r.at("detail").at("task") == "gather_balls");
  c.send(core, MessageType::kEvalCtl, {{"action", "reset"}, {"seed", 11}});
  CHECK(c.inbox.has_event("world_reset"));
  CHECK(core.backend().seed() == 11);
  c.send(core, MessageType::kEvalCtl, {{"action", "dance"}});
  CHECK(c.inbox.of(MessageType::kError).size() == 1);
}

TEST_CASE("environment overrides") {
  ServiceConfig cfg;
  ::setenv("AIREXO_PORT", "9123", 1);
  ::setenv("AIREXO_DATA_DIR", "/tmp/airexo-env", 1);
  cfg.apply_env();
  CHECK(cfg.port == 9123);
  CHECK(cfg.data_dir == fs::path("/tmp/airexo-env"));
  ::setenv("AIREXO_PORT", "http", 1);
  CHECK_THROWS_AS(cfg.apply_env(), Error);
  ::unsetenv("AIREXO_PORT");
  ::unsetenv("AIREXO_DATA_DIR");
}

TEST_CASE("websocket transport end to end") {
  namespace beast = boost::beast;
  namespace websocket = beast::websocket;
  using tcp = boost::asio::ip::tcp;

  auto cfg = virtual_config(scratch_dir("ws"));
  cfg.port = 0;
  std::atomic<bool> stop{false};
  std::atomic<int> port{-1};
  std::thread server([&] { serve(cfg, stop, [&](std::uint16_t p) { port = p; }); });
  while (port < 0) std::this_thread::sleep_for(std::chrono::milliseconds(5));

  {
    boost::asio::io_context ioc;
    tcp::resolver resolver(ioc);
    websocket::stream<tcp::socket> ws(ioc);
    boost::asio::connect(ws.next_layer(), resolver.resolve("127.0.0.1", std::to_string(port.load())));
    ws.handshake("127.0.0.1", "/");
    beast::flat_buffer buf;
    const auto read = [&] {
      buf.clear();
      ws.read(buf);
      return decode(beast::buffers_to_string(buf.data()));
    };
    CHECK(read().type == MessageType::kHello);
    ws.write(boost::asio::buffer(encode(WireMessage{MessageType::kHello, 0, 0, {{"role", "operator"}}})));
    bool granted = false;
    int states = 0;
    for (int i = 0; i < 200 && (!granted || states < 3); ++i) {
      const auto m = read();
      if (m.type == MessageType::kEvent && m.payload.at("kind") == "role_granted") granted = true;
      if (m.type == MessageType::kState) ++states;
    }
    CHECK(granted);
    CHECK(states >= 3);

    // A second server on the same port cannot bind.
    auto busy = cfg;
    busy.port = static_cast<std::uint16_t>(port.load());
    std::atomic<bool> stop_now{true};
    try {
      serve(busy, stop_now);
      FAIL("expected the bind to fail");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kIo);
    }
    ws.close(websocket::close_code::normal);
  }
  stop = true;
  server.join();
}
