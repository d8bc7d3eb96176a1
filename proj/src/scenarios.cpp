#include "airexo/scenarios.hpp"

namespace airexo {

ScriptedOperator scripted_operator(const Rig& rig, std::uint64_t seed, std::array<bool, 2> active) {
  if (rig.world.task == TaskKind::kGatherBalls) {
    GatherScript s = GatherScript::varied(seed);
    s.active = active;
    return gather_operator(s, rig.world);
  }
  const Simulator sim(rig.robot, rig.world);
  const SimState s = sim.reset(seed);
  return shelf_operator({}, rig.world, rig.robot, std::get<CurtainedShelfWorld>(s.world).object_position);
}

TeleopRun scripted_teleop(const Rig& rig, std::uint64_t seed, const ScriptedOperator& op) {
  const double duration = rig.world.protocol.duration_s;
  StreamOptions so;
  so.rate_hz = 30.0;
  so.duration_s = duration;
  SimulatedEncoderSource source(encoder_stream(op, rig.calibration, so));
  SimBackend backend(Simulator(rig.robot, rig.world), seed);
  SessionRecorder rec(rig.robot, rig.world, seed, rig.calibration_ref);
  LoopOptions opt;
  opt.observer = rec.observer();
  LoopConfig loop = rig.loop;
  const double budget = rig.world.protocol.step_budget() / loop.control_rate_hz;
  TeleopRun run;
  run.stats = run_teleop_session(source, rig.calibration, backend, loop, std::min(duration, budget), opt).stats;
  run.demo = rec.finish("teleop-" + std::to_string(seed));
  run.final_state = backend.snapshot();
  return run;
}

Demonstration scripted_in_the_wild(const Rig& rig, std::uint64_t seed, const ScriptedOperator& op) {
  StreamOptions so;
  so.rate_hz = 13.0;
  so.duration_s = rig.world.protocol.duration_s;
  so.jitter_ns = 15'000'000;
  so.seed = seed;
  Demonstration d = record_in_the_wild(encoder_stream(op, rig.calibration, so), rig.calibration, rig.calibration_ref,
                                       rig.robot, rig.world.task, rig.world.grippers, "itw-" + std::to_string(seed));
  d.seed = seed;
  return d;
}

PolicyConfig protocol_policy_config(const WorldConfig& world, std::size_t k) {
  PolicyConfig p;
  p.k = k;
  p.duration_s = world.protocol.duration_s;
  p.max_steps = world.protocol.max_steps;
  return p;
}

std::vector<TrialResult> evaluate_policy(const Rig& rig, const NeighborDatabase& db, const PolicyConfig& policy,
                                         const std::vector<std::uint64_t>& seeds) {
  std::vector<TrialResult> out;
  for (std::uint64_t seed : seeds) {
    SimBackend backend(Simulator(rig.robot, rig.world), seed);
    const PolicyEpisode ep = run_policy(db, backend, rig.world, rig.loop, policy);
    out.push_back(score_trial(backend.snapshot(), rig.world.task, ep.stats.ticks_executed / rig.loop.control_rate_hz,
                              ep.aborted));
  }
  return out;
}

}  // namespace airexo
