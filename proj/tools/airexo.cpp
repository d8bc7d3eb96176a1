// airexo: command-line front door for teleoperation, recording, replay,
// dataset building, policy evaluation and the live service.

#include <atomic>
#include <csignal>
#include <fstream>
#include <iostream>
#include <map>

#include <CLI11.hpp>

#include "airexo/scenarios.hpp"
#include "airexo/service.hpp"

using namespace airexo;
namespace fs = std::filesystem;

namespace {

std::atomic<bool> g_stop{false};

nlohmann::json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + p.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kSchema, p.string() + ": " + e.what());
  }
}

void write_json(const nlohmann::json& j, const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + p.string());
  out << j.dump(2) << '\n';
}

// Global app config. Paths inside it are relative to the config file.
struct AppConfig {
  std::optional<fs::path> robot, world, calibration, constraints;
  fs::path data_dir = "data";
  std::uint16_t port = 8765;
  LoopConfig loop;
};

AppConfig load_app_config(const std::string& file) {
  AppConfig c;
  if (file.empty()) return c;
  const auto j = read_json(file);
  const fs::path base = fs::path(file).parent_path();
  auto path = [&](const char* key) -> std::optional<fs::path> {
    if (!j.contains(key)) return std::nullopt;
    return base / j.at(key).get<std::string>();
  };
  c.robot = path("robot");
  c.world = path("world");
  c.calibration = path("calibration");
  c.constraints = path("task_constraints");
  if (j.contains("data_dir")) c.data_dir = base / j.at("data_dir").get<std::string>();
  c.port = j.value("port", c.port);
  if (j.contains("loop")) {
    const auto& l = j.at("loop");
    c.loop.control_rate_hz = l.value("control_rate_hz", c.loop.control_rate_hz);
    c.loop.command_timeout_ms = l.value("command_timeout_ms", c.loop.command_timeout_ms);
    c.loop.velocity_cap_rad_s = l.value("velocity_cap_rad_s", c.loop.velocity_cap_rad_s);
  }
  return c;
}

struct RigOptions {
  std::string world, cal;
  double rate = 0.0;
};

Rig make_rig(const AppConfig& app, const RigOptions& o) {
  Rig rig;
  if (app.robot) rig.robot = robot_from_json(read_json(*app.robot));
  if (!o.world.empty()) {
    rig.world = load_world(o.world);
  } else if (app.world) {
    rig.world = load_world(*app.world);
  }
  if (!o.cal.empty()) {
    rig.calibration = load_calibration(o.cal);
    rig.calibration_ref = fs::path(o.cal).filename().string();
  } else if (app.calibration) {
    rig.calibration = load_calibration(*app.calibration);
    rig.calibration_ref = app.calibration->filename().string();
  }
  rig.loop = app.loop;
  if (o.rate > 0) rig.loop.control_rate_hz = o.rate;
  rig.loop.validate();
  return rig;
}

std::array<bool, 2> parse_arms(const std::string& s) {
  if (s == "both") return {true, true};
  if (s == "left") return {true, false};
  if (s == "right") return {false, true};
  throw Error(ErrorKind::kInvalidInput, "--arms must be both, left or right");
}

// {"frames": [{"t_ns": 0, "ticks": [16 ints]}, ...]}
std::vector<EncoderFrame> load_encoder_script(const fs::path& p, double resolution) {
  const auto j = read_json(p);
  std::vector<EncoderFrame> out;
  for (const auto& f : j.at("frames")) {
    EncoderFrame e;
    e.timestamp = f.at("t_ns").get<Nanoseconds>();
    e.ticks = f.at("ticks").get<std::vector<std::int32_t>>();
    e.resolution_rad = resolution;
    e.validate_dual_arm();
    out.push_back(std::move(e));
  }
  return out;
}

nlohmann::json stats_json(const LoopStats& s) {
  nlohmann::json j{{"ticks_executed", s.ticks_executed},
                   {"mean_period_error_ms", s.mean_period_error_ms},
                   {"max_period_error_ms", s.max_period_error_ms},
                   {"p99_period_error_ms", s.p99_period_error_ms},
                   {"dropped_frames", s.dropped_frames},
                   {"clamped_commands", s.clamped_commands},
                   {"aborted", s.aborted}};
  if (s.aborted) j["abort_reason"] = s.abort_reason;
  return j;
}

std::vector<Demonstration> read_demo_dir(const std::string& dir) {
  std::vector<fs::path> files;
  if (dir.empty()) return {};
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() == ".demo") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<Demonstration> out;
  for (const auto& f : files) out.push_back(read_demo(f));
  return out;
}

struct SessionOptions {
  RigOptions rig;
  double duration = 60.0;
  bool virtual_time = false;
  std::string constraint_id;
  std::uint64_t seed = 0;
  std::string input;
  std::string arms = "both";
  std::string out;
  bool in_the_wild = false;
};

void add_session_options(CLI::App* cmd, SessionOptions& o) {
  cmd->add_option("--cal", o.rig.cal, "Calibration file");
  cmd->add_option("--world", o.rig.world, "World config file");
  cmd->add_option("--rate", o.rig.rate, "Control rate in Hz");
  cmd->add_option("--duration", o.duration, "Session length in seconds")->capture_default_str();
  cmd->add_flag("--virtual-time", o.virtual_time, "Deterministic simulated clock");
  cmd->add_option("--task-constraint", o.constraint_id, "Task constraint id from the constraints file");
  cmd->add_option("--seed", o.seed, "World seed (also varies the scripted operator)");
  cmd->add_option("--input", o.input, "Encoder script JSON; default is the scripted operator for the world");
  cmd->add_option("--arms", o.arms, "Arms moved by the scripted operator: both, left or right");
}

int run_session(const AppConfig& app, const SessionOptions& o) {
  Rig rig = make_rig(app, o.rig);
  std::optional<TaskConstraint> constraint;
  if (!o.constraint_id.empty()) {
    if (!app.constraints) throw Error(ErrorKind::kConfiguration, "--task-constraint needs task_constraints in --config");
    constraint = load_task_constraint(*app.constraints, o.constraint_id);
    constraint->validate(rig.robot.arm(Arm::kLeft), rig.robot.arm(Arm::kRight));
    rig.loop.task_constraint_id = o.constraint_id;
  }
  std::vector<EncoderFrame> script;
  if (!o.input.empty()) {
    script = load_encoder_script(o.input, rig.calibration.resolution_rad);
  } else {
    StreamOptions so;
    so.duration_s = o.duration;
    if (o.in_the_wild) {
      so.rate_hz = 13.0;
      so.jitter_ns = 15'000'000;
      so.seed = o.seed;
    }
    script = encoder_stream(scripted_operator(rig, o.seed, parse_arms(o.arms)), rig.calibration, so);
  }

  if (o.in_the_wild) {
    Demonstration d = record_in_the_wild(script, rig.calibration, rig.calibration_ref, rig.robot, rig.world.task,
                                         rig.world.grippers, "itw-" + std::to_string(o.seed));
    d.seed = o.seed;
    write_demo(d, o.out);
    std::cout << demo_info(d).dump(2) << '\n';
    return 0;
  }

  SimulatedEncoderSource source(std::move(script));
  SimBackend backend(Simulator(rig.robot, rig.world), o.seed);
  std::optional<SessionRecorder> rec;
  LoopOptions opt;
  opt.clock = o.virtual_time ? ClockMode::kVirtual : ClockMode::kWallClock;
  opt.stop = &g_stop;
  if (!o.out.empty()) {
    rec.emplace(rig.robot, rig.world, o.seed, rig.calibration_ref);
    opt.observer = rec->observer();
  }
  const double budget = rig.world.protocol.step_budget() / rig.loop.control_rate_hz;
  const SessionResult r = run_teleop_session(source, rig.calibration, backend, rig.loop, std::min(o.duration, budget),
                                             opt, constraint ? &*constraint : nullptr);
  const SimState final_state = backend.snapshot();
  nlohmann::json report{{"session_id", r.session_id},
                        {"stats", stats_json(r.stats)},
                        {"trial", to_json(score_trial(final_state, rig.world.task, to_seconds(final_state.sim_time)))}};
  if (rec) {
    const Demonstration d = rec->finish(r.session_id);
    write_demo(d, o.out);
    report["demo"] = o.out;
  }
  std::cout << report.dump(2) << '\n';
  return r.stats.aborted ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"AirExo dual-arm teleoperation middleware"};
  app.require_subcommand(1);
  std::string config_file;
  app.add_option("--config", config_file, "Application config JSON")->check(CLI::ExistingFile);

  SessionOptions teleop_o;
  auto* teleop = app.add_subcommand("teleop", "Run a teleoperation session against the simulator");
  add_session_options(teleop, teleop_o);
  teleop->add_option("-o,--out", teleop_o.out, "Also record the session to this demo file");

  SessionOptions record_o;
  auto* record = app.add_subcommand("record", "Record a demonstration");
  add_session_options(record, record_o);
  record->add_option("-o,--out", record_o.out, "Output demo file")->required();
  record->add_flag("--in-the-wild", record_o.in_the_wild, "Exoskeleton-only capture without the robot");

  std::string replay_demo;
  double rate_scale = 1.0;
  bool replay_wall = false;
  auto* replay_cmd = app.add_subcommand("replay", "Replay a demonstration on the simulator");
  replay_cmd->add_option("--demo", replay_demo, "Demo file")->required()->check(CLI::ExistingFile);
  replay_cmd->add_option("--rate-scale", rate_scale, "Playback speed factor")->capture_default_str();
  replay_cmd->add_flag("--wall-clock", replay_wall, "Pace playback by the wall clock");

  auto* demo = app.add_subcommand("demo", "Inspect or transform demonstration files");
  demo->require_subcommand(1);
  std::string info_file, resample_file, resample_out;
  double resample_hz = 10.0;
  auto* info = demo->add_subcommand("info", "Print the header and summary of a demo");
  info->add_option("file", info_file)->required()->check(CLI::ExistingFile);
  auto* rs = demo->add_subcommand("resample", "Resample a demo to a fixed rate");
  rs->add_option("file", resample_file)->required()->check(CLI::ExistingFile);
  rs->add_option("--hz", resample_hz)->required();
  rs->add_option("-o,--out", resample_out)->required();

  auto* dataset = app.add_subcommand("dataset", "Build policy databases");
  dataset->require_subcommand(1);
  std::string pre_dir, fine_dir, db_out, featurizer = kDefaultFeaturizer;
  double db_hz = 5.0, domain_weight = 3.0;
  std::size_t chunk = 20;
  auto* build = dataset->add_subcommand("build", "Build a neighbor database from demo directories");
  build->add_option("--pretrain", pre_dir, "Directory of in-the-wild demos")->check(CLI::ExistingDirectory);
  build->add_option("--finetune", fine_dir, "Directory of teleoperated demos")->check(CLI::ExistingDirectory);
  build->add_option("--hz", db_hz)->capture_default_str();
  build->add_option("--chunk", chunk)->capture_default_str();
  build->add_option("--domain-weight", domain_weight)->capture_default_str();
  build->add_option("--featurizer", featurizer)->capture_default_str();
  build->add_option("-o,--out", db_out)->required();

  auto* policy = app.add_subcommand("policy", "Run the nearest-neighbor policy");
  policy->require_subcommand(1);
  std::string policy_db, policy_world, episodes_out;
  std::size_t policy_k = 5, trials = 10;
  std::uint64_t policy_seed = 0;
  double ensemble_k = 0.01;
  auto* prun = policy->add_subcommand("run", "Evaluate the policy over seeded trials");
  prun->add_option("--db", policy_db)->required()->check(CLI::ExistingFile);
  prun->add_option("--world", policy_world)->check(CLI::ExistingFile);
  prun->add_option("--k", policy_k)->capture_default_str();
  prun->add_option("--trials", trials)->capture_default_str();
  prun->add_option("--seed", policy_seed, "First trial seed")->capture_default_str();
  prun->add_option("--ensemble-k", ensemble_k)->capture_default_str();
  prun->add_option("--episodes", episodes_out, "Write per-trial results and rollouts here");

  std::string eval_dir, eval_task, eval_out;
  auto* eval = app.add_subcommand("eval", "Aggregate trial results into a report");
  eval->add_option("--episodes", eval_dir)->required()->check(CLI::ExistingDirectory);
  eval->add_option("--task", eval_task)->required()->check(CLI::IsMember({"gather", "shelf", "gather_balls", "curtained_shelf"}));
  eval->add_option("-o,--out", eval_out);

  RigOptions serve_rig;
  int serve_port = -1;
  bool serve_virtual = false;
  std::string serve_data;
  int decimation = 1;
  auto* serve_cmd = app.add_subcommand("serve", "Run the WebSocket service");
  serve_cmd->add_option("--port", serve_port);
  serve_cmd->add_option("--world", serve_rig.world)->check(CLI::ExistingFile);
  serve_cmd->add_option("--cal", serve_rig.cal)->check(CLI::ExistingFile);
  serve_cmd->add_option("--data-dir", serve_data);
  serve_cmd->add_option("--state-decimation", decimation)->capture_default_str();
  serve_cmd->add_flag("--virtual-time", serve_virtual);

  std::string defaults_what, defaults_out;
  auto* defaults = app.add_subcommand("defaults", "Write a built-in config (robot, gather, shelf, calibration)");
  defaults->add_option("what", defaults_what)->required()->check(CLI::IsMember({"robot", "gather", "shelf", "calibration"}));
  defaults->add_option("-o,--out", defaults_out)->required();

  CLI11_PARSE(app, argc, argv);
  std::signal(SIGINT, [](int) { g_stop = true; });
  std::signal(SIGTERM, [](int) { g_stop = true; });

  try {
    const AppConfig cfg = load_app_config(config_file);
    if (*teleop) return run_session(cfg, teleop_o);
    if (*record) return run_session(cfg, record_o);

    if (*replay_cmd) {
      const Demonstration d = read_demo(replay_demo);
      Rig rig = make_rig(cfg, {});
      if (d.world) rig.world = world_from_json(*d.world);
      SimBackend backend(Simulator(rig.robot, rig.world), d.seed);
      const ReplayResult r = replay(d, backend, rate_scale, replay_wall ? ClockMode::kWallClock : ClockMode::kVirtual);
      const SimState s = backend.snapshot();
      nlohmann::json out{{"stats", stats_json(r.stats)},
                         {"warnings", r.warnings.size()},
                         {"trial", to_json(score_trial(s, rig.world.task, to_seconds(s.sim_time)))}};
      std::cout << out.dump(2) << '\n';
      return r.stats.aborted ? 1 : 0;
    }

    if (*info) {
      std::cout << demo_info(read_demo(info_file)).dump(2) << '\n';
      return 0;
    }
    if (*rs) {
      const Demonstration d = resample(read_demo(resample_file), resample_hz);
      write_demo(d, resample_out);
      std::cout << demo_info(d).dump(2) << '\n';
      return 0;
    }

    if (*build) {
      DatasetAssembly a;
      a.pretrain = read_demo_dir(pre_dir);
      a.finetune = read_demo_dir(fine_dir);
      a.domain_weight = domain_weight;
      const NeighborDatabase db = build_database(a, featurizer, db_hz, chunk);
      save_database(db, db_out);
      std::cout << nlohmann::json{{"entries", db.size()},
                                  {"demos", db.demo_ids.size()},
                                  {"feature_dim", db.feature_dim},
                                  {"horizon", db.horizon},
                                  {"target_hz", db.target_hz},
                                  {"out", db_out}}
                       .dump(2)
                << '\n';
      return 0;
    }

    if (*prun) {
      RigOptions ro;
      ro.world = policy_world;
      const Rig rig = make_rig(cfg, ro);
      const NeighborDatabase db = load_database(policy_db);
      PolicyConfig pc = protocol_policy_config(rig.world, policy_k);
      pc.ensemble_k = ensemble_k;
      std::vector<TrialResult> results;
      for (std::size_t i = 0; i < trials; ++i) {
        const std::uint64_t seed = policy_seed + i;
        SimBackend backend(Simulator(rig.robot, rig.world), seed);
        const PolicyEpisode ep = run_policy(db, backend, rig.world, rig.loop, pc);
        const TrialResult t = score_trial(backend.snapshot(), rig.world.task,
                                          ep.stats.ticks_executed / rig.loop.control_rate_hz, ep.aborted);
        results.push_back(t);
        if (!episodes_out.empty()) {
          const fs::path base = fs::path(episodes_out) / ("trial-" + std::to_string(seed));
          nlohmann::json tj = to_json(t);
          tj["seed"] = seed;
          write_json(tj, base.string() + ".json");
          write_demo(ep.record, base.string() + ".demo");
        }
      }
      const EvaluationReport rep = aggregate(results);
      std::cout << format_table(rep);
      return 0;
    }

    if (*eval) {
      const TaskKind task = task_from_string(eval_task);
      std::vector<fs::path> files;
      for (const auto& e : fs::directory_iterator(eval_dir)) {
        if (e.path().extension() == ".json") files.push_back(e.path());
      }
      std::sort(files.begin(), files.end());
      std::vector<TrialResult> trials_in;
      for (const auto& f : files) {
        TrialResult t = trial_from_json(read_json(f));
        if (task_from_string(t.task_id) != task) {
          throw Error(ErrorKind::kInvalidInput, f.string() + " is a " + t.task_id + " trial");
        }
        trials_in.push_back(std::move(t));
      }
      const EvaluationReport rep = aggregate(trials_in);
      if (!eval_out.empty()) write_json(to_json(rep), eval_out);
      std::cout << format_table(rep);
      return 0;
    }

    if (*serve_cmd) {
      ServiceConfig sc;
      sc.rig = make_rig(cfg, serve_rig);
      sc.port = cfg.port;
      sc.data_dir = cfg.data_dir;
      sc.apply_env();
      if (serve_port >= 0) sc.port = static_cast<std::uint16_t>(serve_port);
      if (!serve_data.empty()) sc.data_dir = serve_data;
      sc.virtual_time = serve_virtual;
      sc.state_decimation = decimation;
      serve(sc, g_stop, [](std::uint16_t port) { std::cerr << "listening on port " << port << std::endl; });
      return 0;
    }

    if (*defaults) {
      nlohmann::json j;
      if (defaults_what == "robot") j = to_json(RobotModel::defaults());
      if (defaults_what == "gather") j = to_json(WorldConfig::gather_balls());
      if (defaults_what == "shelf") j = to_json(WorldConfig::curtained_shelf());
      if (defaults_what == "calibration") j = to_json(default_calibration());
      write_json(j, defaults_out);
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
